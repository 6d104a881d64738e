#![allow(dead_code)]

use nalgebra::{Point2, UnitQuaternion, Vector2, Vector3};
use oovtrack::geometry::{Affine2, ObjectModel, Pose};
use oovtrack::heatmap::HeatmapStack;
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_rotation<R: Rng>(rng: &mut R) -> UnitQuaternion<f64> {
    let q = nalgebra::Quaternion::new(
        rng.sample::<f64, _>(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
        rng.sample(StandardNormal),
    );
    UnitQuaternion::from_quaternion(q)
}

/// Ten points uniform in a 1 m cube centred on the origin.
pub fn random_model<R: Rng>(rng: &mut R) -> ObjectModel {
    let xyz: Vec<[f64; 3]> = (0..10)
        .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
        .collect();
    ObjectModel::from_xyz("random", &xyz).expect("random cube points are non-degenerate")
}

/// Random orientation with the world origin 2-6 m in front of the camera.
pub fn random_pose<R: Rng>(rng: &mut R) -> Pose {
    Pose::new(
        random_rotation(rng),
        Vector3::new(rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3), rng.random_range(2.0..6.0)),
    )
}

pub fn random_view<R: Rng>(rng: &mut R) -> Affine2 {
    Affine2::about_centre(
        rng.random_range(-0.5..0.5),
        rng.random_range(0.8..1.25),
        Vector2::new(rng.random_range(-40.0..40.0), rng.random_range(-40.0..40.0)),
        Point2::new(127.5, 127.5),
    )
    .expect("non-singular")
}

/// Each channel a sum of three broad random blobs.
pub fn random_smooth_stack<R: Rng>(rng: &mut R, channels: usize, side: usize, s: f32) -> HeatmapStack {
    let mut stack = HeatmapStack::zeros(channels, side, side, s);
    for c in 0..channels {
        for _ in 0..3 {
            let centre = Point2::new(rng.random_range(0.0..side as f64), rng.random_range(0.0..side as f64));
            stack.add_gaussian(c, &centre, rng.random_range(6.0..20.0), rng.random_range(0.2..0.6));
        }
    }
    stack
}
