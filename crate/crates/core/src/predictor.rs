//! Heatmap producers.
//!
//! [`OraclePredictor`] renders heatmaps straight from a known scene with a
//! configurable error model, standing in for a trained network.
//! [`FilePredictor`] reads stacks exported in the OOVH format.

use std::path::Path;

use nalgebra::Point2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{project, Affine2, CameraIntrinsics, GeometryError, ObjectModel, Pose, ScaleConfig};
use crate::heatmap::{HeatmapStack, DEFAULT_LABEL_SIGMA};
use crate::oovh::{self, OovhError};
use crate::rng;

pub use crate::oovh::{load_heatmaps, save_heatmaps};

#[derive(Debug, Error)]
pub enum PredictError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Oovh(#[from] OovhError),
    #[error("stack has {found} channels, model has {expected} points")]
    ChannelMismatch { expected: usize, found: usize },
    #[error("stack was produced with s = {found}, expected {expected}")]
    ScaleMismatch { expected: f32, found: f32 },
    #[error("stack is {found:?} pixels, expected {expected:?}")]
    DimsMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
}

/// Anything that turns an input into one heatmap channel per model point.
pub trait HeatmapPredictor {
    type Input: ?Sized;

    fn predict(&self, input: &Self::Input) -> Result<HeatmapStack, PredictError>;
}

/// Ground truth for one synthetic observation.
///
/// `view` is the 2D transform applied to the camera image before the
/// predictor sees it (identity for an untransformed frame).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneTruth {
    pub model: ObjectModel,
    pub pose: Pose,
    pub k: CameraIntrinsics,
    pub cfg: ScaleConfig,
    #[serde(default)]
    pub view: Affine2,
}

impl SceneTruth {
    /// Exact heatmap-space locations of every model point.
    pub fn heatmap_points(&self) -> Result<Vec<Point2<f64>>, GeometryError> {
        Ok(project(&self.model, &self.pose, &self.k)?
            .iter()
            .map(|p| self.cfg.to_heatmap_space(&self.view.apply(p)))
            .collect())
    }
}

/// Error model of the oracle predictor. All lengths are heatmap pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-axis standard deviation of the peak position.
    pub jitter_sigma: f64,
    /// Peak amplitude drawn uniformly from `[lo, hi]`.
    pub amp_range: [f64; 2],
    /// Probability that a channel is emitted empty.
    pub dropout_prob: f64,
    /// Spurious peaks added to each non-empty channel.
    pub clutter_blobs: usize,
    pub clutter_amp: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self::noiseless()
    }
}

impl NoiseConfig {
    pub fn noiseless() -> Self {
        Self {
            jitter_sigma: 0.0,
            amp_range: [1.0, 1.0],
            dropout_prob: 0.0,
            clutter_blobs: 0,
            clutter_amp: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let [lo, hi] = self.amp_range;
        if !(self.jitter_sigma >= 0.0 && self.jitter_sigma.is_finite()) {
            return Err(format!("jitter_sigma must be >= 0, got {}", self.jitter_sigma));
        }
        if !(lo > 0.0 && lo <= hi && hi <= 1.0) {
            return Err(format!("amp_range must satisfy 0 < lo <= hi <= 1, got [{lo}, {hi}]"));
        }
        if !(0.0..=1.0).contains(&self.dropout_prob) {
            return Err(format!("dropout_prob must lie in [0, 1], got {}", self.dropout_prob));
        }
        if !(0.0..=1.0).contains(&self.clutter_amp) {
            return Err(format!("clutter_amp must lie in [0, 1], got {}", self.clutter_amp));
        }
        Ok(())
    }
}

/// Renders a noisy heatmap stack for `scene`.
///
/// Draws come from a stream keyed by `(noise.seed, call_index)`, so a
/// given call is reproducible regardless of which thread makes it. For each
/// channel: a dropout decision, a jittered peak position and an amplitude;
/// non-dropped channels then get `clutter_blobs` extra peaks at uniform
/// grid positions. Values saturate at 1.
pub fn oracle_predict(
    scene: &SceneTruth,
    noise: &NoiseConfig,
    label_sigma: f64,
    call_index: u64,
) -> Result<HeatmapStack, GeometryError> {
    let points = scene.heatmap_points()?;
    let (w, h) = scene.cfg.heatmap_dims();
    let mut stack = HeatmapStack::zeros(points.len(), h as usize, w as usize, scene.cfg.s() as f32);
    let mut rng = rng::stream(noise.seed, &[call_index]);
    let jitter = Normal::new(0.0, noise.jitter_sigma.max(0.0)).expect("finite sigma");
    let [lo, hi] = noise.amp_range;
    for (c, p) in points.iter().enumerate() {
        let dropped = rng.random::<f64>() < noise.dropout_prob;
        let dx = jitter.sample(&mut rng);
        let dy = jitter.sample(&mut rng);
        let amp = lo + (hi - lo) * rng.random::<f64>();
        let clutter: Vec<(f64, f64)> = (0..noise.clutter_blobs)
            .map(|_| {
                (
                    rng.random::<f64>() * (w - 1) as f64,
                    rng.random::<f64>() * (h - 1) as f64,
                )
            })
            .collect();
        if dropped {
            continue;
        }
        stack.add_gaussian(c, &Point2::new(p.x + dx, p.y + dy), label_sigma, amp);
        if noise.clutter_amp > 0.0 {
            for (x, y) in clutter {
                stack.add_gaussian(c, &Point2::new(x, y), label_sigma, noise.clutter_amp);
            }
        }
    }
    Ok(stack)
}

/// Synthetic stand-in for the trained network.
#[derive(Clone, Debug)]
pub struct OraclePredictor {
    pub noise: NoiseConfig,
    pub label_sigma: f64,
}

impl OraclePredictor {
    pub fn new(noise: NoiseConfig) -> Self {
        Self {
            noise,
            label_sigma: DEFAULT_LABEL_SIGMA,
        }
    }

    pub fn with_label_sigma(mut self, sigma: f64) -> Self {
        self.label_sigma = sigma;
        self
    }
}

/// An oracle request: the scene plus the call index selecting the noise
/// stream.
#[derive(Clone, Debug)]
pub struct OracleInput {
    pub scene: SceneTruth,
    pub call_index: u64,
}

impl HeatmapPredictor for OraclePredictor {
    type Input = OracleInput;

    fn predict(&self, input: &OracleInput) -> Result<HeatmapStack, PredictError> {
        self.predict_scene(&input.scene, input.call_index)
    }
}

impl OraclePredictor {
    pub fn predict_scene(&self, scene: &SceneTruth, call_index: u64) -> Result<HeatmapStack, PredictError> {
        Ok(oracle_predict(scene, &self.noise, self.label_sigma, call_index)?)
    }
}

/// Reads OOVH stacks from disk, checking them against expectations.
#[derive(Clone, Debug, Default)]
pub struct FilePredictor {
    pub expected_channels: Option<usize>,
    pub expected_scale: Option<f32>,
    pub expected_dims: Option<(usize, usize)>,
}

impl FilePredictor {
    pub fn for_model(model: &ObjectModel) -> Self {
        Self {
            expected_channels: Some(model.len()),
            ..Self::default()
        }
    }

    pub fn with_scale(mut self, s: f32) -> Self {
        self.expected_scale = Some(s);
        self
    }

    /// `(width, height)` the stacks must have.
    pub fn with_dims(mut self, dims: (usize, usize)) -> Self {
        self.expected_dims = Some(dims);
        self
    }
}

impl HeatmapPredictor for FilePredictor {
    type Input = Path;

    fn predict(&self, path: &Path) -> Result<HeatmapStack, PredictError> {
        let stack = oovh::load_heatmaps(path)?;
        if let Some(expected) = self.expected_channels {
            if stack.channels() != expected {
                return Err(PredictError::ChannelMismatch {
                    expected,
                    found: stack.channels(),
                });
            }
        }
        if let Some(expected) = self.expected_scale {
            if (stack.scale() - expected).abs() > 1e-6 {
                return Err(PredictError::ScaleMismatch {
                    expected,
                    found: stack.scale(),
                });
            }
        }
        if let Some(expected) = self.expected_dims {
            let found = (stack.width(), stack.height());
            if found != expected {
                return Err(PredictError::DimsMismatch { expected, found });
            }
        }
        Ok(stack)
    }
}
