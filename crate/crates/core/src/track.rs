//! Tracking a synthetic image sequence with either tracker.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::{pose_errors, ErrorTriple};
use crate::geometry::{CameraIntrinsics, GeometryError, HeatmapProjector, ObjectModel, Pose, ScaleConfig};
use crate::heatmap::HeatmapStack;
use crate::predictor::{oracle_predict, NoiseConfig, SceneTruth};
use crate::scene::{SceneFile, SceneMotion};
use crate::tracker_opt::{optimise, OptError, OptSettings};
use crate::tracker_pf::{MotionConfig, ParticleFilter, TrackerError};

#[derive(Debug, Error)]
pub enum TrackError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Filter(#[from] TrackerError),
    #[error(transparent)]
    Optimiser(#[from] OptError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMode {
    Pf,
    Opt,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackSettings {
    pub mode: TrackMode,
    pub steps: usize,
    pub particles: usize,
    pub motion: MotionConfig,
    pub optimiser: OptSettings,
}

impl Default for TrackSettings {
    fn default() -> Self {
        Self {
            mode: TrackMode::Pf,
            steps: 200,
            particles: 500,
            motion: MotionConfig::default(),
            optimiser: OptSettings::default(),
        }
    }
}

/// A synthetic sequence: the true pose starts at `start` and moves by
/// `motion` every frame; each frame is observed through the oracle.
#[derive(Clone, Debug)]
pub struct Sequence {
    pub model: ObjectModel,
    pub k: CameraIntrinsics,
    pub scale: ScaleConfig,
    pub start: Pose,
    pub motion: SceneMotion,
    pub noise: NoiseConfig,
    pub label_sigma: f64,
}

impl Sequence {
    pub fn from_scene_file(sf: &SceneFile, base: &std::path::Path) -> Result<Self, GeometryError> {
        let (model, k) = sf.resolve(base)?;
        Ok(Self {
            model,
            k,
            scale: sf.scale,
            start: sf.pose,
            motion: sf.motion,
            noise: sf.noise.clone(),
            label_sigma: sf.label_sigma,
        })
    }

    pub fn truth(&self, pose: Pose) -> SceneTruth {
        SceneTruth {
            model: self.model.clone(),
            pose,
            k: self.k,
            cfg: self.scale,
            view: Default::default(),
        }
    }

    pub fn projector(&self) -> HeatmapProjector {
        HeatmapProjector::new(self.k, self.scale)
    }

    /// Oracle heatmaps of frame `step` showing `pose`.
    pub fn observe(&self, pose: &Pose, step: usize) -> Result<HeatmapStack, GeometryError> {
        oracle_predict(&self.truth(*pose), &self.noise, self.label_sigma, step as u64)
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrackStep {
    pub step: usize,
    pub truth: Pose,
    pub estimate: Pose,
    pub errors: ErrorTriple,
}

/// Runs the chosen tracker over `settings.steps` frames, starting from the
/// true initial pose. `on_frame` sees every frame's stack and result.
pub fn run_sequence(
    seq: &Sequence,
    settings: &TrackSettings,
    mut on_frame: impl FnMut(&HeatmapStack, &TrackStep),
) -> Result<Vec<TrackStep>, TrackError> {
    let projector = seq.projector();
    let mut filter = match settings.mode {
        TrackMode::Pf => Some(ParticleFilter::new(
            &seq.start,
            seq.model.clone(),
            projector,
            settings.motion,
            settings.particles,
        )),
        TrackMode::Opt => None,
    };
    let mut truth = seq.start;
    let mut previous = seq.start;
    let mut out = Vec::with_capacity(settings.steps);
    for step in 0..settings.steps {
        if step > 0 {
            truth = seq.motion.advance(&truth);
        }
        let stack = seq.observe(&truth, step)?;
        let estimate = match filter.as_mut() {
            Some(f) => f.update(&stack)?,
            None => {
                let cost = settings.optimiser.prepare(&stack);
                optimise(&previous, &cost, &seq.model, &projector, &settings.optimiser)?.pose
            }
        };
        previous = estimate;
        let record = TrackStep {
            step,
            truth,
            estimate,
            errors: pose_errors(&estimate, &truth, &seq.model, &seq.k),
        };
        on_frame(&stack, &record);
        out.push(record);
    }
    Ok(out)
}

/// One CSV line per step: estimate and truth as `qw,qx,qy,qz,tx,ty,tz`,
/// then the three errors.
pub fn trajectory_csv(steps: &[TrackStep]) -> String {
    let mut out = String::from(
        "step,qw,qx,qy,qz,tx,ty,tz,gt_qw,gt_qx,gt_qy,gt_qz,gt_tx,gt_ty,gt_tz,reprojection,translation,rotation\n",
    );
    for s in steps {
        let mut fields = vec![s.step.to_string()];
        for pose in [&s.estimate, &s.truth] {
            fields.extend(pose.wxyz().iter().map(|v| v.to_string()));
            fields.extend(pose.translation().iter().map(|v| v.to_string()));
        }
        fields.push(s.errors.reprojection.to_string());
        fields.push(s.errors.translation.to_string());
        fields.push(s.errors.rotation.to_string());
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}
