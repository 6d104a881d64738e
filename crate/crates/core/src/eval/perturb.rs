//! Initial poses displaced from ground truth by a chosen reprojection error.

use nalgebra::{Vector3, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use super::metrics::reprojection_rms;
use crate::geometry::{CameraIntrinsics, ObjectModel, Pose};

/// Moves `gt` along a random 6-D direction until the RMS reprojection error
/// against `gt` reaches `target_px` (within 1e-6 px).
///
/// Rotation and translation components are balanced so that each moves the
/// model's centroid by a similar amount. Returns `gt` when `target_px` is 0,
/// and `None` when 100 drawn directions all fail to reach the target with
/// every point in front of the camera.
pub fn perturb_by_reprojection<R: Rng + ?Sized>(
    gt: &Pose,
    model: &ObjectModel,
    k: &CameraIntrinsics,
    target_px: f64,
    rng: &mut R,
) -> Option<Pose> {
    if target_px <= 0.0 {
        return Some(*gt);
    }
    let n = model.len() as f64;
    let centroid: Vector3<f64> = model.positions().sum::<Vector3<f64>>() / n;
    let depth = gt.transform_point(&centroid).z.abs().max(1e-3);
    (0..100).find_map(|_| along_random_direction(gt, model, k, target_px, depth, rng))
}

fn along_random_direction<R: Rng + ?Sized>(
    gt: &Pose,
    model: &ObjectModel,
    k: &CameraIntrinsics,
    target_px: f64,
    depth: f64,
    rng: &mut R,
) -> Option<Pose> {
    let mut dir = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    for i in 0..3 {
        dir[i] /= depth;
    }
    dir /= dir.norm();
    let err = |lambda: f64| reprojection_rms(&gt.perturbed6(&(lambda * dir)), gt, model, k);

    let mut hi = target_px * depth / k.fx.max(k.fy);
    let mut steps = 0;
    while err(hi) < target_px {
        hi *= 2.0;
        steps += 1;
        if steps > 60 {
            return None;
        }
    }
    // bisection needs a finite error at the upper end
    if !err(hi).is_finite() {
        return None;
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if err(mid) < target_px {
            lo = mid;
        } else {
            hi = mid;
        }
        if (err(hi) - target_px).abs() < 1e-6 {
            break;
        }
    }
    Some(gt.perturbed6(&(hi * dir)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use crate::scene::reference_scene;

    #[test]
    fn hits_target() {
        let r = reference_scene();
        let mut g = rng::stream(3, &[0]);
        for target in [0.5, 10.0, 20.0, 60.0] {
            for _ in 0..20 {
                let p = perturb_by_reprojection(&r.pose, &r.model, &r.k, target, &mut g).unwrap();
                let e = reprojection_rms(&p, &r.pose, &r.model, &r.k);
                assert!((e - target).abs() < 1e-6, "{e} vs {target}");
            }
        }
    }

    #[test]
    fn zero_is_identity() {
        let r = reference_scene();
        let p = perturb_by_reprojection(&r.pose, &r.model, &r.k, 0.0, &mut rng::stream(0, &[])).unwrap();
        assert_eq!(p, r.pose);
    }
}
