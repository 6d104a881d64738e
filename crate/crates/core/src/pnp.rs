//! Camera pose from 2D-3D correspondences: a linear (DLT) initial estimate
//! followed by Levenberg-Marquardt refinement of the reprojection error.

use nalgebra::{DMatrix, Matrix3, Point2, Rotation3, UnitQuaternion, Vector3, Vector6};
use thiserror::Error;

use crate::geometry::{project_with_jacobian, CameraIntrinsics, GeometryError, Pose, MIN_DEPTH};

#[derive(Debug, Error)]
pub enum PnpError {
    #[error("degenerate configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("no pose places the points in front of the camera")]
    NoSolution,
    #[error("refinement diverged: {0}")]
    Diverged(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Matched world points and their observed image projections.
#[derive(Clone, Debug)]
pub struct Correspondences {
    world: Vec<Vector3<f64>>,
    image: Vec<Point2<f64>>,
}

impl Correspondences {
    pub fn new(world: Vec<Vector3<f64>>, image: Vec<Point2<f64>>) -> Result<Self, PnpError> {
        if world.len() != image.len() {
            return Err(PnpError::DegenerateConfiguration(format!(
                "{} world points but {} image points",
                world.len(),
                image.len()
            )));
        }
        if world.len() < 4 {
            return Err(PnpError::DegenerateConfiguration(format!(
                "need at least 4 correspondences, got {}",
                world.len()
            )));
        }
        for i in 0..world.len() {
            for j in i + 1..world.len() {
                if world[i] == world[j] {
                    return Err(PnpError::DegenerateConfiguration(format!(
                        "world points {i} and {j} coincide"
                    )));
                }
            }
        }
        if crate::geometry::spread_rank(&world) < 2 {
            return Err(PnpError::DegenerateConfiguration(
                "world points are collinear".into(),
            ));
        }
        let lifted: Vec<Vector3<f64>> = image.iter().map(|p| Vector3::new(p.x, p.y, 0.0)).collect();
        if crate::geometry::spread_rank(&lifted) < 2 {
            return Err(PnpError::DegenerateConfiguration(
                "image points are collinear".into(),
            ));
        }
        Ok(Self { world, image })
    }

    pub fn len(&self) -> usize {
        self.world.len()
    }

    pub fn is_empty(&self) -> bool {
        self.world.is_empty()
    }

    pub fn world(&self) -> &[Vector3<f64>] {
        &self.world
    }

    pub fn image(&self) -> &[Point2<f64>] {
        &self.image
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RefineSettings {
    pub max_iters: usize,
    /// Stop once an accepted step lowers the cost by less than this
    /// fraction.
    pub tol: f64,
}

impl Default for RefineSettings {
    fn default() -> Self {
        Self {
            max_iters: 100,
            tol: 1e-10,
        }
    }
}

/// Estimates the pose whose projection of the world points best matches
/// the image points.
pub fn solve_pnp(corr: &Correspondences, k: &CameraIntrinsics) -> Result<Pose, PnpError> {
    let init = initial_pose(corr, k)?;
    refine_pose(&init, corr, k, RefineSettings::default())
}

/// Linear initial estimate: 12-parameter DLT for non-planar point sets
/// with at least 6 points, otherwise a homography on the best-fit plane.
pub fn initial_pose(corr: &Correspondences, k: &CameraIntrinsics) -> Result<Pose, PnpError> {
    let rays: Vec<_> = corr.image.iter().map(|p| k.unproject(p)).collect();
    let rank = crate::geometry::spread_rank(&corr.world);
    let pose = if rank == 3 && corr.len() >= 6 {
        match dlt_general(&corr.world, &rays) {
            Some(p) => p,
            None => dlt_planar(&corr.world, &rays)?,
        }
    } else {
        dlt_planar(&corr.world, &rays)?
    };
    if corr
        .world
        .iter()
        .filter(|p| pose.transform_point(p).z <= MIN_DEPTH)
        .count()
        * 2
        > corr.len()
    {
        return Err(PnpError::NoSolution);
    }
    Ok(pose)
}

fn centre_and_scale(points: &[Vector3<f64>]) -> (Vector3<f64>, f64) {
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mean_dist = points.iter().map(|p| (p - c).norm()).sum::<f64>() / points.len() as f64;
    (c, mean_dist.max(1e-300))
}

/// Null vector of `a` (smallest right singular vector) and the ratio of the
/// two smallest singular values.
fn null_vector(a: &DMatrix<f64>) -> (nalgebra::DVector<f64>, f64) {
    let ata = a.transpose() * a;
    let eig = ata.symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let smallest = eig.eigenvalues[order[0]].max(0.0);
    let second = eig.eigenvalues[order[1]].max(0.0);
    let ratio = if second > 0.0 { (smallest / second).sqrt() } else { 1.0 };
    (eig.eigenvectors.column(order[0]).into_owned(), ratio)
}

fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}

fn pose_from_matrix(r: &Matrix3<f64>, t: Vector3<f64>) -> Pose {
    let rot = Rotation3::from_matrix_unchecked(nearest_rotation(r));
    Pose::new(UnitQuaternion::from_rotation_matrix(&rot), t)
}

fn dlt_general(world: &[Vector3<f64>], rays: &[nalgebra::Vector2<f64>]) -> Option<Pose> {
    let (c, scale) = centre_and_scale(world);
    let n = world.len();
    let mut a = DMatrix::zeros(2 * n, 12);
    for (i, (w, r)) in world.iter().zip(rays).enumerate() {
        let x = (w - c) / scale;
        let xh = [x.x, x.y, x.z, 1.0];
        for j in 0..4 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 8 + j)] = -r.x * xh[j];
            a[(2 * i + 1, 4 + j)] = xh[j];
            a[(2 * i + 1, 8 + j)] = -r.y * xh[j];
        }
    }
    let (v, ratio) = null_vector(&a);
    if ratio > 0.5 {
        return None;
    }
    // P maps normalised world points; undo the normalisation.
    let m = Matrix3::new(v[0], v[1], v[2], v[4], v[5], v[6], v[8], v[9], v[10]) / scale;
    let p4 = Vector3::new(v[3], v[7], v[11]) - m * c;
    let det = m.determinant();
    if det.abs() < 1e-300 {
        return None;
    }
    let mut lambda = det.abs().cbrt();
    // depth sign from the centroid
    if (m * c + p4).z < 0.0 {
        lambda = -lambda;
    }
    let mut r = m / lambda;
    let mut t = p4 / lambda;
    if r.determinant() < 0.0 {
        r = -r;
        t = -t;
    }
    Some(pose_from_matrix(&r, t))
}

fn dlt_planar(world: &[Vector3<f64>], rays: &[nalgebra::Vector2<f64>]) -> Result<Pose, PnpError> {
    let (c, scale) = centre_and_scale(world);
    let mut cov = Matrix3::zeros();
    for p in world {
        let d = p - c;
        cov += d * d.transpose();
    }
    let eig = cov.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let e1 = eig.eigenvectors.column(order[0]).into_owned();
    let e2 = eig.eigenvectors.column(order[1]).into_owned();
    let e3 = e1.cross(&e2);
    let basis = Matrix3::from_columns(&[e1, e2, e3]);

    let n = world.len();
    let mut a = DMatrix::zeros(2 * n, 9);
    for (i, (w, r)) in world.iter().zip(rays).enumerate() {
        let local = basis.transpose() * (w - c) / scale;
        let xh = [local.x, local.y, 1.0];
        for j in 0..3 {
            a[(2 * i, j)] = xh[j];
            a[(2 * i, 6 + j)] = -r.x * xh[j];
            a[(2 * i + 1, 3 + j)] = xh[j];
            a[(2 * i + 1, 6 + j)] = -r.y * xh[j];
        }
    }
    let (h, ratio) = null_vector(&a);
    if ratio > 0.5 {
        return Err(PnpError::DegenerateConfiguration(
            "homography system is rank deficient".into(),
        ));
    }
    let h1 = Vector3::new(h[0], h[3], h[6]);
    let h2 = Vector3::new(h[1], h[4], h[7]);
    let h3 = Vector3::new(h[2], h[5], h[8]);
    let mut lambda = 0.5 * (h1.norm() + h2.norm());
    if lambda < 1e-300 {
        return Err(PnpError::DegenerateConfiguration(
            "homography has vanishing rotation columns".into(),
        ));
    }
    if h3.z < 0.0 {
        lambda = -lambda;
    }
    let r1 = h1 / lambda;
    let r2 = h2 / lambda;
    let t_local = h3 / lambda;
    let r_local = Matrix3::from_columns(&[r1, r2, r1.cross(&r2)]);
    // local = B^T (x - c) / scale, so x_cam = R_l diag(1,1,.) B^T (x - c) / scale + t_l
    let r_local = nearest_rotation(&r_local);
    let r = r_local * basis.transpose();
    let t = t_local * scale - r * c;
    Ok(pose_from_matrix(&r, t))
}

fn residuals(pose: &Pose, corr: &Correspondences, k: &CameraIntrinsics) -> Option<f64> {
    let mut cost = 0.0;
    for (w, obs) in corr.world.iter().zip(&corr.image) {
        let pc = pose.transform_point(w);
        if pc.z <= MIN_DEPTH {
            return None;
        }
        cost += (k.project_camera_point(&pc) - obs).norm_squared();
    }
    Some(cost)
}

/// Root-mean-square reprojection error in pixels; `None` if a point is
/// behind the camera.
pub fn reprojection_rms(pose: &Pose, corr: &Correspondences, k: &CameraIntrinsics) -> Option<f64> {
    residuals(pose, corr, k).map(|c| (c / corr.len() as f64).sqrt())
}

/// Levenberg-Marquardt on the squared reprojection error. Each accepted
/// step lowers the cost; the run stops when the relative decrease drops
/// below `settings.tol` or after `settings.max_iters` iterations.
pub fn refine_pose(
    init: &Pose,
    corr: &Correspondences,
    k: &CameraIntrinsics,
    settings: RefineSettings,
) -> Result<Pose, PnpError> {
    if let Some((index, p)) = corr
        .world
        .iter()
        .enumerate()
        .find(|(_, p)| init.transform_point(p).z <= MIN_DEPTH)
    {
        return Err(GeometryError::Depth {
            index,
            depth: init.transform_point(p).z,
        }
        .into());
    }
    let mut pose = *init;
    let mut cost = residuals(&pose, corr, k).unwrap_or(f64::INFINITY);
    let floor = 1e-24 * corr.len() as f64;
    let mut lambda = -1.0;
    for _ in 0..settings.max_iters {
        if cost <= floor {
            break;
        }
        let mut jtj = nalgebra::Matrix6::zeros();
        let mut jtr = Vector6::zeros();
        for (w, obs) in corr.world.iter().zip(&corr.image) {
            let (px, j) = project_with_jacobian(k, &pose, w).ok_or(PnpError::NoSolution)?;
            let r = px - obs;
            jtj += j.transpose() * j;
            jtr += j.transpose() * r;
        }
        if lambda < 0.0 {
            lambda = 1e-3 * (0..6).map(|i| jtj[(i, i)]).fold(0.0, f64::max);
        }
        let mut accepted = None;
        for _ in 0..12 {
            let mut damped = jtj;
            for i in 0..6 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&-jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = pose.perturbed6(&step);
            match residuals(&candidate, corr, k) {
                Some(c) if c < cost => {
                    accepted = Some((candidate, c));
                    lambda = (lambda * 0.3).max(1e-15);
                    break;
                }
                Some(c) if !c.is_finite() => {
                    return Err(PnpError::Diverged(format!("cost became {c}")));
                }
                _ => lambda *= 10.0,
            }
        }
        let Some((next, next_cost)) = accepted else {
            // no damping level improves the cost: at a local minimum
            break;
        };
        let decrease = (cost - next_cost) / cost;
        pose = next;
        cost = next_cost;
        if decrease < settings.tol {
            break;
        }
    }
    if !cost.is_finite() {
        return Err(PnpError::Diverged(format!("final cost {cost}")));
    }
    Ok(pose)
}
