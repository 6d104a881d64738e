//! Robustness of pose recovery against the visible fraction of the object.
//!
//! Each view is the reference image put through a random rotation, scaling
//! and translation and cropped back to the original frame. For every label
//! scale `s` a heatmap stack is predicted for the view, the pose is
//! recovered with [`optimise`] and the errors are grouped by visibility.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::{Point2, Vector2};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::hull::{visibility_fraction, HullError};
use super::metrics::{pose_errors, ErrorTriple, Metric};
use super::perturb::perturb_by_reprojection;
use crate::geometry::{
    from_heatmap_space, invert_affine, project, Affine2, CameraIntrinsics, GeometryError, HeatmapProjector,
    ObjectModel, Pose, ScaleConfig,
};
use crate::heatmap::{HeatmapStack, DEFAULT_LABEL_SIGMA};
use crate::predictor::{FilePredictor, HeatmapPredictor, NoiseConfig, OraclePredictor, PredictError, SceneTruth};
use crate::rng;
use crate::scene::{reference_scene, SceneFile};
use crate::tracker_opt::{optimise, OptSettings, OptStatus};

const VIEW_STREAM: u64 = 10;
const INIT_STREAM: u64 = 11;
/// Draws per view before giving up on reaching the visibility floor.
const MAX_VIEW_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Hull(#[from] HullError),
    #[error(transparent)]
    Predict(#[from] PredictError),
    #[error("invalid sweep config: {0}")]
    InvalidConfig(String),
    #[error("view {index}: no transform reached the visibility floor in {attempts} draws")]
    NoAcceptableView { index: usize, attempts: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

/// Ranges of the random view transform. Rotation is uniform in
/// `[-rotation_deg, rotation_deg]`, scale uniform in `scale`, and each
/// translation component uniform in `[-translation_px, translation_px]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformRanges {
    pub rotation_deg: f64,
    pub scale: [f64; 2],
    pub translation_px: f64,
}

impl Default for TransformRanges {
    fn default() -> Self {
        Self {
            rotation_deg: 30.0,
            scale: [0.8, 1.25],
            translation_px: 170.0,
        }
    }
}

impl TransformRanges {
    /// No transform at all.
    pub fn identity() -> Self {
        Self {
            rotation_deg: 0.0,
            scale: [1.0, 1.0],
            translation_px: 0.0,
        }
    }

    fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.scale;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(format!("scale range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
        if !(self.rotation_deg >= 0.0 && self.translation_px >= 0.0) {
            return Err("rotation and translation ranges must be >= 0".into());
        }
        Ok(())
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, centre: Point2<f64>) -> Result<Affine2, GeometryError> {
        let angle = self.rotation_deg.to_radians() * (2.0 * rng.random::<f64>() - 1.0);
        let [lo, hi] = self.scale;
        let scale = lo + (hi - lo) * rng.random::<f64>();
        let tx = self.translation_px * (2.0 * rng.random::<f64>() - 1.0);
        let ty = self.translation_px * (2.0 * rng.random::<f64>() - 1.0);
        Affine2::about_centre(angle, scale, Vector2::new(tx, ty), centre)
    }
}

/// Where the heatmaps come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PredictorSource {
    Oracle,
    /// OOVH files named by `pattern`, in which `{view}` is replaced by the
    /// view index and `{s}` by the index into `s_values`. Relative patterns
    /// are resolved against the config file's directory.
    Files { pattern: String },
}

/// Settings of a sweep, read from JSON.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Scene file supplying model, camera and ground-truth pose. The
    /// built-in reference scene when absent.
    pub scene: Option<PathBuf>,
    pub s_values: Vec<f64>,
    pub views: usize,
    pub crop: [u32; 2],
    pub ranges: TransformRanges,
    pub visibility_floor: f64,
    pub bucket_width: f64,
    pub noise: NoiseConfig,
    pub label_sigma: f64,
    /// RMS reprojection error of the optimiser's starting pose, obtained by
    /// displacing the ground truth along a random direction.
    pub init_reprojection_px: f64,
    pub optimiser: OptSettings,
    pub predictor: PredictorSource,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            scene: None,
            s_values: vec![1.0, 0.5, 1.0 / 3.0, 0.25],
            views: 2500,
            crop: [256, 256],
            ranges: TransformRanges::default(),
            visibility_floor: 0.3,
            bucket_width: 0.1,
            noise: NoiseConfig {
                jitter_sigma: 3.0,
                dropout_prob: 0.1,
                ..NoiseConfig::noiseless()
            },
            label_sigma: DEFAULT_LABEL_SIGMA,
            init_reprojection_px: 40.0,
            optimiser: OptSettings::default(),
            predictor: PredictorSource::Oracle,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: Self = serde_json::from_str(&text).map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: String| Err(EvalError::InvalidConfig(m));
        if self.views == 0 {
            return bad("views must be >= 1".into());
        }
        if self.s_values.is_empty() {
            return bad("s_values is empty".into());
        }
        if let Some(s) = self.s_values.iter().find(|s| !(**s > 0.0 && **s <= 1.0)) {
            return bad(format!("s values must lie in (0, 1], got {s}"));
        }
        let per_unit = 1.0 / self.bucket_width;
        if !(self.bucket_width > 0.0 && self.bucket_width <= 1.0 && (per_unit - per_unit.round()).abs() < 1e-9) {
            return bad(format!("bucket width must divide 1, got {}", self.bucket_width));
        }
        if !(0.0..=1.0).contains(&self.visibility_floor) {
            return bad(format!("visibility floor must lie in [0, 1], got {}", self.visibility_floor));
        }
        if self.crop.iter().any(|&d| d < 2) {
            return bad(format!("crop {:?} is too small", self.crop));
        }
        if self.label_sigma.is_nan() || self.label_sigma <= 0.0 || self.init_reprojection_px.is_nan() || self.init_reprojection_px < 0.0 {
            return bad("label_sigma must be > 0 and init_reprojection_px >= 0".into());
        }
        self.ranges.validate().map_err(EvalError::InvalidConfig)?;
        self.noise.validate().map_err(EvalError::InvalidConfig)?;
        Ok(())
    }

    /// Model, camera and ground-truth pose of the swept scene. Relative
    /// scene paths are resolved against `base`.
    pub fn resolve_scene(&self, base: &Path) -> Result<(ObjectModel, CameraIntrinsics, Pose), EvalError> {
        match &self.scene {
            None => {
                let r = reference_scene();
                Ok((r.model, r.k, r.pose))
            }
            Some(p) => {
                let path = base.join(p);
                let sf = SceneFile::load(&path)?;
                let dir = path.parent().unwrap_or(Path::new("."));
                let (model, k) = sf.resolve(dir)?;
                Ok((model, k, sf.pose))
            }
        }
    }
}

/// One randomly transformed, cropped observation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct View {
    pub index: usize,
    pub transform: Affine2,
    pub crop: [u32; 2],
    pub pose: Pose,
    pub visibility: f64,
    /// Seed of the stream the transform was drawn from.
    pub seed: u64,
}

impl View {
    /// Ground-truth 2D points of the view in crop pixels.
    pub fn points(&self, model: &ObjectModel, k: &CameraIntrinsics) -> Result<Vec<Point2<f64>>, GeometryError> {
        Ok(self.transform.apply_all(&project(model, &self.pose, k)?))
    }
}

/// Draws a view transform for view `index`, redrawing until the visible
/// fraction of the model's hull reaches `floor`.
#[allow(clippy::too_many_arguments)]
pub fn generate_view(
    model: &ObjectModel,
    k: &CameraIntrinsics,
    pose: &Pose,
    ranges: &TransformRanges,
    crop: [u32; 2],
    floor: f64,
    seed: u64,
    index: usize,
) -> Result<View, EvalError> {
    let stream_seed = rng::derive_seed(seed, &[VIEW_STREAM, index as u64]);
    let mut rng = rng::stream(stream_seed, &[]);
    let image_points = project(model, pose, k)?;
    let centre = Point2::new((crop[0] as f64 - 1.0) / 2.0, (crop[1] as f64 - 1.0) / 2.0);
    for _ in 0..MAX_VIEW_ATTEMPTS {
        let transform = ranges.draw(&mut rng, centre)?;
        let visibility = visibility_fraction(&transform.apply_all(&image_points), (crop[0], crop[1]))?;
        if visibility >= floor {
            return Ok(View {
                index,
                transform,
                crop,
                pose: *pose,
                visibility,
                seed: stream_seed,
            });
        }
    }
    Err(EvalError::NoAcceptableView {
        index,
        attempts: MAX_VIEW_ATTEMPTS,
    })
}

/// Argmax peak of every channel mapped back into the untransformed camera
/// image: heatmap space to view pixels, then through the inverse view
/// transform.
pub fn peaks_in_camera_frame(
    stack: &HeatmapStack,
    cfg: &ScaleConfig,
    view: &Affine2,
) -> Result<Vec<Point2<f64>>, GeometryError> {
    let back = invert_affine(view)?;
    Ok((0..stack.channels())
        .map(|c| {
            let (x, y, _) = stack.argmax(c).expect("channel in range");
            back.apply(&from_heatmap_space(&Point2::new(x as f64, y as f64), cfg))
        })
        .collect())
}

/// Rounds a visibility fraction half-up to a multiple of `width`, returned
/// as the multiple's index.
pub fn bucket_index(visibility: f64, width: f64) -> i64 {
    (visibility / width + 0.5 + 1e-9).floor() as i64
}

/// Outcome of recovering one view at one label scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ViewResult {
    pub view: usize,
    pub s_index: usize,
    pub visibility: f64,
    pub status: Option<OptStatus>,
    pub iterations: usize,
    /// `None` when the view failed.
    pub errors: Option<ErrorTriple>,
    pub failure: Option<String>,
}

/// Median of each (s, bucket, metric) group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub s: f64,
    pub bucket: f64,
    pub metric: Metric,
    pub median: f64,
    pub count: usize,
    pub failures: usize,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub views: Vec<View>,
    pub per_view: Vec<ViewResult>,
    pub summary: Vec<SummaryRow>,
}

impl SweepResult {
    /// Median for the given scale (matched to 1e-9), bucket and metric.
    pub fn median(&self, s: f64, bucket: f64, metric: Metric) -> Option<f64> {
        self.summary
            .iter()
            .find(|r| (r.s - s).abs() < 1e-9 && (r.bucket - bucket).abs() < 1e-9 && r.metric == metric)
            .map(|r| r.median)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,visibility_bucket,metric,median,count,failures\n");
        for r in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.s,
                r.bucket,
                r.metric.name(),
                r.median,
                r.count,
                r.failures
            );
        }
        out
    }

    pub fn per_view_csv(&self, s_values: &[f64]) -> String {
        let mut out = String::from("view,s,visibility,status,iterations,reprojection,translation,rotation,failure\n");
        for r in &self.per_view {
            let status = r.status.map_or(String::new(), |s| format!("{s:?}"));
            let (e0, e1, e2) = r.errors.map_or((f64::NAN, f64::NAN, f64::NAN), |e| {
                (e.reprojection, e.translation, e.rotation)
            });
            let failure = r.failure.as_deref().unwrap_or("").replace([',', '\n'], ";");
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.view, s_values[r.s_index], r.visibility, status, r.iterations, e0, e1, e2, failure
            );
        }
        out
    }
}

/// Everything the per-view workers share.
struct SweepContext<'a> {
    cfg: &'a SweepConfig,
    model: ObjectModel,
    k: CameraIntrinsics,
    base: PathBuf,
}

impl SweepContext<'_> {
    fn predict(&self, view: &View, s_index: usize, scale: &ScaleConfig) -> Result<HeatmapStack, PredictError> {
        match &self.cfg.predictor {
            PredictorSource::Oracle => {
                let truth = SceneTruth {
                    model: self.model.clone(),
                    pose: view.pose,
                    k: self.k,
                    cfg: *scale,
                    view: view.transform,
                };
                // one noise draw per view, shared by every s
                OraclePredictor::new(self.cfg.noise.clone())
                    .with_label_sigma(self.cfg.label_sigma)
                    .predict_scene(&truth, view.index as u64)
            }
            PredictorSource::Files { pattern } => {
                let name = pattern
                    .replace("{view}", &view.index.to_string())
                    .replace("{s}", &s_index.to_string());
                let (w, h) = scale.heatmap_dims();
                FilePredictor::for_model(&self.model)
                    .with_scale(scale.s() as f32)
                    .with_dims((w as usize, h as usize))
                    .predict(&self.base.join(name))
            }
        }
    }

    fn recover(&self, view: &View, init: &Pose, s_index: usize) -> ViewResult {
        let mut result = ViewResult {
            view: view.index,
            s_index,
            visibility: view.visibility,
            status: None,
            iterations: 0,
            errors: None,
            failure: None,
        };
        let outcome = (|| -> Result<_, String> {
            let dims = (view.crop[0], view.crop[1]);
            let scale = ScaleConfig::new(self.cfg.s_values[s_index], dims, dims).map_err(|e| e.to_string())?;
            let stack = self.predict(view, s_index, &scale).map_err(|e| e.to_string())?;
            let cost = self.cfg.optimiser.prepare(&stack);
            let projector = HeatmapProjector::new(self.k, scale).with_view(view.transform);
            optimise(init, &cost, &self.model, &projector, &self.cfg.optimiser).map_err(|e| e.to_string())
        })();
        match outcome {
            Ok(res) => {
                result.status = Some(res.status);
                result.iterations = res.iterations;
                let errors = pose_errors(&res.pose, &view.pose, &self.model, &self.k);
                if errors.reprojection.is_finite() {
                    result.errors = Some(errors);
                } else {
                    result.failure = Some("estimate puts model points behind the camera".into());
                }
            }
            Err(e) => result.failure = Some(e),
        }
        result
    }
}

/// Generates the views of a sweep.
pub fn generate_views(
    cfg: &SweepConfig,
    model: &ObjectModel,
    k: &CameraIntrinsics,
    pose: &Pose,
) -> Result<Vec<View>, EvalError> {
    (0..cfg.views)
        .into_par_iter()
        .map(|i| generate_view(model, k, pose, &cfg.ranges, cfg.crop, cfg.visibility_floor, cfg.seed, i))
        .collect()
}

/// Runs a sweep on the current rayon pool. `base` resolves relative paths
/// in the config. Results do not depend on the number of worker threads.
pub fn run_sweep(cfg: &SweepConfig, base: &Path) -> Result<SweepResult, EvalError> {
    cfg.validate()?;
    let (model, k, pose) = cfg.resolve_scene(base)?;
    let views = generate_views(cfg, &model, &k, &pose)?;
    let ctx = SweepContext {
        cfg,
        model,
        k,
        base: base.to_path_buf(),
    };
    let per_view: Vec<ViewResult> = views
        .par_iter()
        .flat_map_iter(|view| {
            let mut rng = rng::stream(cfg.seed, &[INIT_STREAM, view.index as u64]);
            let init = perturb_by_reprojection(&view.pose, &ctx.model, &ctx.k, cfg.init_reprojection_px, &mut rng)
                .unwrap_or(view.pose);
            (0..cfg.s_values.len())
                .map(|s_index| ctx.recover(view, &init, s_index))
                .collect::<Vec<_>>()
        })
        .collect();
    let summary = summarise(cfg, &per_view);
    Ok(SweepResult {
        views,
        per_view,
        summary,
    })
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Groups results by (s, visibility bucket) and takes per-metric medians
/// over the successful views. Rows follow the order of `s_values`, then
/// ascending bucket, then [`Metric::ALL`].
pub fn summarise(cfg: &SweepConfig, per_view: &[ViewResult]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, i64), (Vec<ErrorTriple>, usize)> = BTreeMap::new();
    for r in per_view {
        let entry = groups
            .entry((r.s_index, bucket_index(r.visibility, cfg.bucket_width)))
            .or_default();
        match r.errors {
            Some(e) => entry.0.push(e),
            None => entry.1 += 1,
        }
    }
    let mut rows = Vec::new();
    for ((s_index, bucket), (errors, failures)) in &groups {
        let bucket = (*bucket as f64 * cfg.bucket_width * 1e9).round() / 1e9;
        for metric in Metric::ALL {
            let mut values: Vec<f64> = errors.iter().map(|e| e.get(metric)).collect();
            rows.push(SummaryRow {
                s: cfg.s_values[*s_index],
                bucket,
                metric,
                median: median(&mut values),
                count: errors.len(),
                failures: *failures,
            });
        }
    }
    rows
}

/// Writes `summary.csv`, `per_view.csv`, `views.json` and one plot per
/// metric into `dir`.
pub fn write_outputs(result: &SweepResult, cfg: &SweepConfig, dir: &Path) -> Result<Vec<PathBuf>, EvalError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    let files = [
        ("summary.csv", result.to_csv()),
        ("per_view.csv", result.per_view_csv(&cfg.s_values)),
        (
            "views.json",
            serde_json::to_string_pretty(&result.views).expect("views serialise"),
        ),
    ];
    for (name, text) in files {
        let path = dir.join(name);
        std::fs::write(&path, text).map_err(io(&path))?;
        written.push(path);
    }
    for metric in Metric::ALL {
        let path = dir.join(format!("{}.png", metric.name()));
        super::plot::plot_metric(&result.summary, &cfg.s_values, metric, cfg.visibility_floor)
            .save(&path)
            .map_err(|source| EvalError::Image {
                path: path.clone(),
                source,
            })?;
        written.push(path);
    }
    Ok(written)
}
