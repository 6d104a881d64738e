//! Pinhole camera, pose representation and the 2D maps between image,
//! view and heatmap coordinates.
//!
//! Pixel coordinates are continuous with the origin at the centre of the
//! top-left pixel, so pixel `(col, row)` sits at exactly `(col, row)`.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use nalgebra::{Matrix2, Matrix2x3, Point2, Rotation3, UnitQuaternion, Vector2, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Points at or closer than this depth cannot be projected.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("point {index} has camera-frame depth {depth} (must exceed {MIN_DEPTH})")]
    Depth { index: usize, depth: f64 },
    #[error("affine transform is singular (det = {0})")]
    SingularTransform(f64),
    #[error("invalid camera intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("invalid scale config: {0}")]
    InvalidScale(String),
    #[error("invalid object model: {0}")]
    InvalidModel(String),
    #[error("invalid pose: {0}")]
    InvalidPose(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "IntrinsicsRepr")]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

#[derive(Deserialize)]
struct IntrinsicsRepr {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
}

impl TryFrom<IntrinsicsRepr> for CameraIntrinsics {
    type Error = GeometryError;
    fn try_from(r: IntrinsicsRepr) -> Result<Self, Self::Error> {
        CameraIntrinsics::new(r.fx, r.fy, r.cx, r.cy)
    }
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self, GeometryError> {
        if !(fx > 0.0 && fy > 0.0) || !fx.is_finite() || !fy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics(format!(
                "focal lengths must be positive, got fx={fx}, fy={fy}"
            )));
        }
        if !cx.is_finite() || !cy.is_finite() {
            return Err(GeometryError::InvalidIntrinsics(
                "principal point must be finite".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Perspective division and intrinsics applied to a camera-frame point.
    pub fn project_camera_point(&self, p: &Vector3<f64>) -> Point2<f64> {
        Point2::new(self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy)
    }

    /// Normalised image coordinates `(x/z, y/z)` of a pixel.
    pub fn unproject(&self, p: &Point2<f64>) -> Vector2<f64> {
        Vector2::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy)
    }

    /// Jacobian of [`Self::project_camera_point`] w.r.t. the camera-frame point.
    pub fn projection_jacobian(&self, p: &Vector3<f64>) -> nalgebra::Matrix2x3<f64> {
        let iz = 1.0 / p.z;
        let iz2 = iz * iz;
        nalgebra::Matrix2x3::new(
            self.fx * iz,
            0.0,
            -self.fx * p.x * iz2,
            0.0,
            self.fy * iz,
            -self.fy * p.y * iz2,
        )
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        read_json(path.as_ref())
    }
}

/// World-to-camera rigid transform: `x_cam = R * x_world + t`.
///
/// The rotation is a Hamilton quaternion stored with non-negative scalar
/// part, so `q` and `-q` construct identical values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: canonical(rotation),
            translation,
        }
    }

    pub fn identity() -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::zeros())
    }

    /// Builds a pose from a `(w, x, y, z)` quaternion, normalising it.
    pub fn from_wxyz(q: [f64; 4], t: [f64; 3]) -> Result<Self, GeometryError> {
        let quat = nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]);
        let n = quat.norm();
        if !n.is_finite() || n < 1e-12 {
            return Err(GeometryError::InvalidPose(format!(
                "quaternion norm {n} cannot be normalised"
            )));
        }
        if t.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidPose("translation not finite".into()));
        }
        Ok(Self::new(
            UnitQuaternion::from_quaternion(quat),
            Vector3::from(t),
        ))
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn wxyz(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Applies a 6-parameter update: `R <- exp(omega) R`, `t <- t + delta_t`.
    ///
    /// The rotation acts about the world origin, so for models centred on
    /// the origin rotation and translation updates stay decoupled.
    pub fn perturbed(&self, omega: &Vector3<f64>, delta_t: &Vector3<f64>) -> Pose {
        let dq = UnitQuaternion::from_scaled_axis(*omega);
        Pose::new(
            UnitQuaternion::new_normalize((dq * self.rotation).into_inner()),
            self.translation + delta_t,
        )
    }

    /// Same as [`Self::perturbed`] taking a `[omega; delta_t]` 6-vector.
    pub fn perturbed6(&self, delta: &nalgebra::Vector6<f64>) -> Pose {
        self.perturbed(
            &Vector3::new(delta[0], delta[1], delta[2]),
            &Vector3::new(delta[3], delta[4], delta[5]),
        )
    }

    /// Angle in radians of the relative rotation between two poses.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let d = self.rotation.coords.dot(&other.rotation.coords).abs().min(1.0);
        2.0 * d.acos()
    }

    /// Expresses this pose for a world frame rotated by `g`
    /// (`x_world' = g * x_world`), so projections are unchanged.
    pub fn in_rotated_world(&self, g: &UnitQuaternion<f64>) -> Pose {
        Pose::new(self.rotation * g.inverse(), self.translation)
    }
}

fn canonical(q: UnitQuaternion<f64>) -> UnitQuaternion<f64> {
    if q.w < 0.0 {
        UnitQuaternion::new_unchecked(-q.into_inner())
    } else {
        q
    }
}

#[derive(Serialize, Deserialize)]
struct PoseRepr {
    q: [f64; 4],
    t: [f64; 3],
}

impl Serialize for Pose {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PoseRepr {
            q: self.wxyz(),
            t: self.translation.into(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Pose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = PoseRepr::deserialize(d)?;
        Pose::from_wxyz(r.q, r.t).map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelPoint {
    pub name: String,
    pub xyz: [f64; 3],
}

/// Named 3D feature points of a tracked object. Point order defines the
/// heatmap channel order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelRepr")]
pub struct ObjectModel {
    pub name: String,
    points: Vec<ModelPoint>,
}

#[derive(Deserialize)]
struct ModelRepr {
    #[serde(default)]
    name: String,
    points: Vec<ModelPoint>,
}

impl TryFrom<ModelRepr> for ObjectModel {
    type Error = GeometryError;
    fn try_from(r: ModelRepr) -> Result<Self, Self::Error> {
        ObjectModel::new(r.name, r.points)
    }
}

impl ObjectModel {
    pub fn new(name: impl Into<String>, points: Vec<ModelPoint>) -> Result<Self, GeometryError> {
        if points.len() < 4 {
            return Err(GeometryError::InvalidModel(format!(
                "need at least 4 points, got {}",
                points.len()
            )));
        }
        let mut seen = HashSet::new();
        for p in &points {
            if !seen.insert(p.name.as_str()) {
                return Err(GeometryError::InvalidModel(format!(
                    "duplicate point name {:?}",
                    p.name
                )));
            }
            if p.xyz.iter().any(|v| !v.is_finite()) {
                return Err(GeometryError::InvalidModel(format!(
                    "point {:?} is not finite",
                    p.name
                )));
            }
        }
        let xyz: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(p.xyz)).collect();
        if spread_rank(&xyz) < 2 {
            return Err(GeometryError::InvalidModel(
                "points are collinear".to_string(),
            ));
        }
        Ok(Self {
            name: name.into(),
            points,
        })
    }

    /// Convenience constructor naming points `p0, p1, ...`.
    pub fn from_xyz(name: impl Into<String>, xyz: &[[f64; 3]]) -> Result<Self, GeometryError> {
        let points = xyz
            .iter()
            .enumerate()
            .map(|(i, p)| ModelPoint {
                name: format!("p{i}"),
                xyz: *p,
            })
            .collect();
        Self::new(name, points)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[ModelPoint] {
        &self.points
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = Vector3<f64>> + '_ {
        self.points.iter().map(|p| Vector3::from(p.xyz))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        read_json(path.as_ref())
    }
}

/// Numerical rank (0..=3) of the spread of a point cloud about its centroid.
pub(crate) fn spread_rank(points: &[Vector3<f64>]) -> usize {
    if points.is_empty() {
        return 0;
    }
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut cov = nalgebra::Matrix3::zeros();
    for p in points {
        let d = p - c;
        cov += d * d.transpose();
    }
    let ev = cov.symmetric_eigenvalues();
    let max = ev.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    ev.iter().filter(|&&e| e > max * 1e-12).count()
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, GeometryError> {
    let text = fs::read_to_string(path).map_err(|source| GeometryError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| GeometryError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Label scaling between image coordinates and heatmap coordinates.
///
/// `p_heat = s * p_img + (N - s * N) / 2` per axis, with `N` the heatmap
/// side length on that axis. For `s < 1` the heatmap covers a region
/// larger than the image, centred on it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ScaleRepr", into = "ScaleRepr")]
pub struct ScaleConfig {
    s: f64,
    n_img: (u32, u32),
    n_map: (u32, u32),
}

#[derive(Serialize, Deserialize)]
struct ScaleRepr {
    s: f64,
    image: [u32; 2],
    heatmap: [u32; 2],
}

impl TryFrom<ScaleRepr> for ScaleConfig {
    type Error = GeometryError;
    fn try_from(r: ScaleRepr) -> Result<Self, Self::Error> {
        ScaleConfig::new(r.s, (r.image[0], r.image[1]), (r.heatmap[0], r.heatmap[1]))
    }
}

impl From<ScaleConfig> for ScaleRepr {
    fn from(c: ScaleConfig) -> Self {
        ScaleRepr {
            s: c.s,
            image: [c.n_img.0, c.n_img.1],
            heatmap: [c.n_map.0, c.n_map.1],
        }
    }
}

impl ScaleConfig {
    /// `n_img` and `n_map` are `(width, height)` in pixels.
    pub fn new(s: f64, n_img: (u32, u32), n_map: (u32, u32)) -> Result<Self, GeometryError> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(GeometryError::InvalidScale(format!(
                "s must lie in (0, 1], got {s}"
            )));
        }
        if n_img.0 == 0 || n_img.1 == 0 || n_map.0 == 0 || n_map.1 == 0 {
            return Err(GeometryError::InvalidScale(
                "image and heatmap dimensions must be positive".into(),
            ));
        }
        Ok(Self { s, n_img, n_map })
    }

    /// Square image and heatmap of the same side length.
    pub fn square(s: f64, side: u32) -> Result<Self, GeometryError> {
        Self::new(s, (side, side), (side, side))
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn image_dims(&self) -> (u32, u32) {
        self.n_img
    }

    pub fn heatmap_dims(&self) -> (u32, u32) {
        self.n_map
    }

    fn offset(&self) -> Vector2<f64> {
        let nx = self.n_map.0 as f64;
        let ny = self.n_map.1 as f64;
        Vector2::new((nx - self.s * nx) / 2.0, (ny - self.s * ny) / 2.0)
    }

    pub fn to_heatmap_space(&self, p: &Point2<f64>) -> Point2<f64> {
        if self.s == 1.0 {
            return *p;
        }
        Point2::from(p.coords * self.s + self.offset())
    }

    pub fn from_heatmap_space(&self, p: &Point2<f64>) -> Point2<f64> {
        if self.s == 1.0 {
            return *p;
        }
        Point2::from((p.coords - self.offset()) / self.s)
    }
}

/// A 2D affine map `p -> L p + b` on pixel coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine2 {
    linear: Matrix2<f64>,
    offset: Vector2<f64>,
}

impl Affine2 {
    pub fn identity() -> Self {
        Self {
            linear: Matrix2::identity(),
            offset: Vector2::zeros(),
        }
    }

    pub fn from_parts(linear: Matrix2<f64>, offset: Vector2<f64>) -> Result<Self, GeometryError> {
        let det = linear.determinant();
        if !det.is_finite() || det.abs() <= 1e-12 {
            return Err(GeometryError::SingularTransform(det));
        }
        Ok(Self { linear, offset })
    }

    pub fn from_matrix(m: &Matrix2x3<f64>) -> Result<Self, GeometryError> {
        Self::from_parts(
            m.fixed_view::<2, 2>(0, 0).into_owned(),
            m.column(2).into_owned(),
        )
    }

    pub fn translation(dx: f64, dy: f64) -> Self {
        Self {
            linear: Matrix2::identity(),
            offset: Vector2::new(dx, dy),
        }
    }

    /// Rotation by `angle` radians and isotropic `scale` about `centre`,
    /// followed by a translation.
    pub fn about_centre(
        angle: f64,
        scale: f64,
        translation: Vector2<f64>,
        centre: Point2<f64>,
    ) -> Result<Self, GeometryError> {
        let (sn, cs) = angle.sin_cos();
        let linear = Matrix2::new(cs, -sn, sn, cs) * scale;
        let c = centre.coords;
        Self::from_parts(linear, c - linear * c + translation)
    }

    pub fn linear(&self) -> &Matrix2<f64> {
        &self.linear
    }

    pub fn offset(&self) -> &Vector2<f64> {
        &self.offset
    }

    pub fn matrix(&self) -> Matrix2x3<f64> {
        let mut m = Matrix2x3::zeros();
        m.fixed_view_mut::<2, 2>(0, 0).copy_from(&self.linear);
        m.set_column(2, &self.offset);
        m
    }

    pub fn apply(&self, p: &Point2<f64>) -> Point2<f64> {
        Point2::from(self.linear * p.coords + self.offset)
    }

    pub fn apply_all(&self, points: &[Point2<f64>]) -> Vec<Point2<f64>> {
        points.iter().map(|p| self.apply(p)).collect()
    }

    pub fn inverse(&self) -> Result<Affine2, GeometryError> {
        let inv = self
            .linear
            .try_inverse()
            .ok_or(GeometryError::SingularTransform(self.linear.determinant()))?;
        Affine2::from_parts(inv, -(inv * self.offset))
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &Affine2) -> Affine2 {
        Affine2 {
            linear: self.linear * other.linear,
            offset: self.linear * other.offset + self.offset,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.linear == Matrix2::identity() && self.offset == Vector2::zeros()
    }
}

impl Serialize for Affine2 {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let m = self.matrix();
        [[m[(0, 0)], m[(0, 1)], m[(0, 2)]], [m[(1, 0)], m[(1, 1)], m[(1, 2)]]].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Affine2 {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let r = <[[f64; 3]; 2]>::deserialize(d)?;
        Affine2::from_matrix(&Matrix2x3::new(
            r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2],
        ))
        .map_err(serde::de::Error::custom)
    }
}

impl Default for Affine2 {
    fn default() -> Self {
        Self::identity()
    }
}

/// Projects every model point through `pose` and `k`.
pub fn project(
    model: &ObjectModel,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<Vec<Point2<f64>>, GeometryError> {
    project_points(model.positions(), pose, k)
}

pub fn project_points(
    points: impl IntoIterator<Item = Vector3<f64>>,
    pose: &Pose,
    k: &CameraIntrinsics,
) -> Result<Vec<Point2<f64>>, GeometryError> {
    points
        .into_iter()
        .enumerate()
        .map(|(index, p)| {
            let pc = pose.transform_point(&p);
            if pc.z <= MIN_DEPTH {
                Err(GeometryError::Depth {
                    index,
                    depth: pc.z,
                })
            } else {
                Ok(k.project_camera_point(&pc))
            }
        })
        .collect()
}

pub fn to_heatmap_space(p: &Point2<f64>, cfg: &ScaleConfig) -> Point2<f64> {
    cfg.to_heatmap_space(p)
}

pub fn from_heatmap_space(p: &Point2<f64>, cfg: &ScaleConfig) -> Point2<f64> {
    cfg.from_heatmap_space(p)
}

pub fn apply_affine(points: &[Point2<f64>], t: &Affine2) -> Vec<Point2<f64>> {
    t.apply_all(points)
}

pub fn invert_affine(t: &Affine2) -> Result<Affine2, GeometryError> {
    t.inverse()
}

/// The full chain from a world point to heatmap coordinates:
/// camera projection, then a view transform applied to the image, then
/// label scaling.
///
/// Evaluating a heatmap predicted on a transformed view at these
/// coordinates is the same as warping the heatmap back through the inverse
/// view transform and evaluating it at the original projection.
#[derive(Clone, Copy, Debug)]
pub struct HeatmapProjector {
    pub k: CameraIntrinsics,
    pub cfg: ScaleConfig,
    pub view: Affine2,
}

/// A projected point in heatmap space together with its Jacobian with
/// respect to the 6-parameter pose update of [`Pose::perturbed`].
#[derive(Clone, Copy, Debug)]
pub struct ProjectedPoint {
    pub heat: Point2<f64>,
    pub jacobian: nalgebra::Matrix2x6<f64>,
}

impl HeatmapProjector {
    pub fn new(k: CameraIntrinsics, cfg: ScaleConfig) -> Self {
        Self {
            k,
            cfg,
            view: Affine2::identity(),
        }
    }

    pub fn with_view(mut self, view: Affine2) -> Self {
        self.view = view;
        self
    }

    /// Heatmap-space location of one world point; `None` when it is behind
    /// the camera.
    pub fn project_point(&self, pose: &Pose, p: &Vector3<f64>) -> Option<Point2<f64>> {
        let pc = pose.transform_point(p);
        if pc.z <= MIN_DEPTH {
            return None;
        }
        let img = self.view.apply(&self.k.project_camera_point(&pc));
        Some(self.cfg.to_heatmap_space(&img))
    }

    pub fn project_model(&self, pose: &Pose, model: &ObjectModel) -> Vec<Option<Point2<f64>>> {
        model
            .positions()
            .map(|p| self.project_point(pose, &p))
            .collect()
    }

    pub fn project_point_with_jacobian(
        &self,
        pose: &Pose,
        p: &Vector3<f64>,
    ) -> Option<ProjectedPoint> {
        let (img, jacobian) = project_with_jacobian(&self.k, pose, p)?;
        let heat = self.cfg.to_heatmap_space(&self.view.apply(&img));
        let jacobian = self.view.linear() * jacobian * self.cfg.s();
        Some(ProjectedPoint { heat, jacobian })
    }
}

/// Image projection of a world point and its Jacobian with respect to the
/// 6-parameter update of [`Pose::perturbed`]; `None` behind the camera.
pub fn project_with_jacobian(
    k: &CameraIntrinsics,
    pose: &Pose,
    p: &Vector3<f64>,
) -> Option<(Point2<f64>, nalgebra::Matrix2x6<f64>)> {
    let rotated = pose.rotation() * p;
    let pc = rotated + pose.translation();
    if pc.z <= MIN_DEPTH {
        return None;
    }
    // d(pc)/d(omega) = -[R p]x, d(pc)/d(dt) = I
    let mut dpc = nalgebra::Matrix3x6::zeros();
    dpc.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&(-rotated.cross_matrix()));
    dpc.fixed_view_mut::<3, 3>(0, 3)
        .copy_from(&nalgebra::Matrix3::identity());
    Some((k.project_camera_point(&pc), k.projection_jacobian(&pc) * dpc))
}

/// Rotation of `angle` radians about a (not necessarily unit) axis.
pub fn axis_angle(axis: Vector3<f64>, angle: f64) -> UnitQuaternion<f64> {
    match nalgebra::Unit::try_new(axis, 1e-15) {
        Some(a) => UnitQuaternion::from_axis_angle(&a, angle),
        None => UnitQuaternion::identity(),
    }
}

/// Camera pose looking from `eye` towards `target` with image-up near `up`.
pub fn look_at(eye: Vector3<f64>, target: Vector3<f64>, up: Vector3<f64>) -> Pose {
    // camera z forward, y down, x right
    let z = (target - eye).normalize();
    let x = z.cross(&up).normalize();
    let y = z.cross(&x);
    let r_cw = nalgebra::Matrix3::from_columns(&[x, y, z]);
    let r_wc = Rotation3::from_matrix_unchecked(r_cw.transpose());
    let rotation = UnitQuaternion::from_rotation_matrix(&r_wc);
    Pose::new(rotation, -(rotation * eye))
}
