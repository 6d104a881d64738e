//! Pose error metrics.

use serde::{Deserialize, Serialize};

use crate::geometry::{CameraIntrinsics, ObjectModel, Pose, MIN_DEPTH};

/// Translation error (metres), absolute rotation error (radians) and RMS
/// reprojection error (pixels) of an estimate against ground truth.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorTriple {
    pub translation: f64,
    pub rotation: f64,
    pub reprojection: f64,
}

impl ErrorTriple {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Translation => self.translation,
            Metric::Rotation => self.rotation,
            Metric::Reprojection => self.reprojection,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Reprojection,
    Translation,
    Rotation,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Reprojection, Metric::Translation, Metric::Rotation];

    pub fn name(&self) -> &'static str {
        match self {
            Metric::Reprojection => "reprojection",
            Metric::Translation => "translation",
            Metric::Rotation => "rotation",
        }
    }

    pub fn unit(&self) -> &'static str {
        match self {
            Metric::Reprojection => "px",
            Metric::Translation => "m",
            Metric::Rotation => "rad",
        }
    }
}

/// RMS distance between the model projected under `est` and under `gt`.
/// Infinite when a model point is behind either camera.
pub fn reprojection_rms(est: &Pose, gt: &Pose, model: &ObjectModel, k: &CameraIntrinsics) -> f64 {
    let mut sum = 0.0;
    for p in model.positions() {
        let a = est.transform_point(&p);
        let b = gt.transform_point(&p);
        if a.z <= MIN_DEPTH || b.z <= MIN_DEPTH {
            return f64::INFINITY;
        }
        sum += (k.project_camera_point(&a) - k.project_camera_point(&b)).norm_squared();
    }
    (sum / model.len() as f64).sqrt()
}

pub fn pose_errors(est: &Pose, gt: &Pose, model: &ObjectModel, k: &CameraIntrinsics) -> ErrorTriple {
    ErrorTriple {
        translation: (est.translation() - gt.translation()).norm(),
        rotation: est.rotation_angle_to(gt),
        reprojection: reprojection_rms(est, gt, model, k),
    }
}
