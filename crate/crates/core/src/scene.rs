//! The built-in reference scene and the JSON scene file used by the
//! command-line tools.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::geometry::{look_at, read_json, CameraIntrinsics, GeometryError, ObjectModel, Pose, ScaleConfig};
use crate::predictor::NoiseConfig;

/// Model, camera and pose of a synthetic scene.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReferenceScene {
    pub model: ObjectModel,
    pub k: CameraIntrinsics,
    pub pose: Pose,
}

/// Ten feature points of a chair: four leg feet, four seat corners and the
/// two top corners of the backrest. Metres, y up, centred near the origin.
pub fn chair_model() -> ObjectModel {
    let (hw, hd) = (0.22, 0.22);
    let named = [
        ("foot_front_left", [-hw, -0.45, hd]),
        ("foot_front_right", [hw, -0.45, hd]),
        ("foot_back_right", [hw, -0.45, -hd]),
        ("foot_back_left", [-hw, -0.45, -hd]),
        ("seat_front_left", [-hw, 0.0, hd]),
        ("seat_front_right", [hw, 0.0, hd]),
        ("seat_back_right", [hw, 0.0, -hd]),
        ("seat_back_left", [-hw, 0.0, -hd]),
        ("back_top_right", [hw, 0.45, -hd]),
        ("back_top_left", [-hw, 0.45, -hd]),
    ];
    let points = named
        .iter()
        .map(|(name, xyz)| crate::geometry::ModelPoint {
            name: (*name).to_string(),
            xyz: *xyz,
        })
        .collect();
    ObjectModel::new("chair", points).expect("chair model is valid")
}

/// Camera for 256 x 256 frames.
pub fn reference_camera() -> CameraIntrinsics {
    CameraIntrinsics::new(300.0, 300.0, 128.0, 128.0).expect("valid intrinsics")
}

/// The chair seen from the front-right and slightly above, about 1.6 m
/// away, filling roughly half of a 256 x 256 frame.
pub fn reference_scene() -> ReferenceScene {
    ReferenceScene {
        model: chair_model(),
        k: reference_camera(),
        pose: look_at(
            Vector3::new(0.7, 0.6, 1.35),
            Vector3::new(0.0, -0.05, 0.0),
            Vector3::y(),
        ),
    }
}

/// Constant per-step camera motion applied to the true pose of a tracked
/// sequence: `R <- exp(omega) R`, `t <- t + velocity` each step.
#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneMotion {
    pub angular: [f64; 3],
    pub linear: [f64; 3],
}

impl SceneMotion {
    pub fn advance(&self, pose: &Pose) -> Pose {
        pose.perturbed(&Vector3::from(self.angular), &Vector3::from(self.linear))
    }
}

/// A scene description on disk.
///
/// ```json
/// {
///   "model": {"name": "chair", "points": [{"name": "a", "xyz": [0, 0, 0]}, ...]},
///   "camera": {"fx": 300, "fy": 300, "cx": 128, "cy": 128},
///   "pose": {"q": [w, x, y, z], "t": [x, y, z]},
///   "scale": {"s": 0.5, "image": [256, 256], "heatmap": [256, 256]},
///   "noise": {"jitter_sigma": 2.0, "seed": 7},
///   "motion": {"angular": [0, 0.002, 0], "linear": [0.001, 0, 0]},
///   "label_sigma": 5.0
/// }
/// ```
///
/// `model` and `camera` may also be paths to separate JSON files.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneFile {
    pub model: ModelRef,
    pub camera: CameraRef,
    pub pose: Pose,
    pub scale: ScaleConfig,
    #[serde(default)]
    pub noise: NoiseConfig,
    #[serde(default)]
    pub motion: SceneMotion,
    #[serde(default = "default_label_sigma")]
    pub label_sigma: f64,
}

fn default_label_sigma() -> f64 {
    crate::heatmap::DEFAULT_LABEL_SIGMA
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelRef {
    Inline(ObjectModel),
    Path(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CameraRef {
    Inline(CameraIntrinsics),
    Path(String),
}

impl SceneFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, GeometryError> {
        read_json(path.as_ref())
    }

    /// Resolves model and camera references relative to `base`.
    pub fn resolve(&self, base: &Path) -> Result<(ObjectModel, CameraIntrinsics), GeometryError> {
        let model = match &self.model {
            ModelRef::Inline(m) => m.clone(),
            ModelRef::Path(p) => ObjectModel::load_json(base.join(p))?,
        };
        let camera = match &self.camera {
            CameraRef::Inline(c) => *c,
            CameraRef::Path(p) => CameraIntrinsics::load_json(base.join(p))?,
        };
        Ok((model, camera))
    }

    /// The reference scene at label scale `s` with 256 x 256 frames.
    pub fn reference(s: f64) -> Result<Self, GeometryError> {
        let r = reference_scene();
        Ok(Self {
            model: ModelRef::Inline(r.model),
            camera: CameraRef::Inline(r.k),
            pose: r.pose,
            scale: ScaleConfig::square(s, 256)?,
            noise: NoiseConfig::noiseless(),
            motion: SceneMotion::default(),
            label_sigma: default_label_sigma(),
        })
    }
}
