mod common;

use nalgebra::{Point2, UnitQuaternion, Vector3};
use oovtrack::eval::{perturb_by_reprojection, reprojection_rms};
use oovtrack::geometry::{CameraIntrinsics, HeatmapProjector, ObjectModel, Pose, ScaleConfig};
use oovtrack::heatmap::{render_labels, to_cost};
use oovtrack::predictor::{oracle_predict, NoiseConfig, SceneTruth};
use oovtrack::rng;
use oovtrack::scene::reference_scene;
use oovtrack::tracker_opt::{numeric_gradient, optimise, pose_gradient, OptSettings, OptStatus};
use proptest::prelude::*;

fn truth(s: f64) -> (SceneTruth, HeatmapProjector) {
    let r = reference_scene();
    let cfg = ScaleConfig::square(s, 256).unwrap();
    (
        SceneTruth { model: r.model, pose: r.pose, k: r.k, cfg, view: Default::default() },
        HeatmapProjector::new(r.k, cfg),
    )
}

fn settings(blur: f64) -> OptSettings {
    OptSettings { blur_sigma: blur, ..OptSettings::default() }
}

fn start(sc: &SceneTruth, px: f64, seed: u64, i: u64) -> Pose {
    perturb_by_reprojection(&sc.pose, &sc.model, &sc.k, px, &mut rng::stream(seed, &[i])).unwrap()
}

#[test]
fn symmetric_scene_has_axial_gradient() {
    // square of points facing the camera, blobs placed radially outward:
    // the landscape is mirror symmetric in x and y, so only the optical-axis
    // translation feels a force. Projections land on half-integers (128 +-
    // 31.5) where bilinear slopes of mirrored points use mirrored cells.
    let a = 0.21;
    let model = ObjectModel::from_xyz("square", &[[-a, -a, 0.0], [a, -a, 0.0], [a, a, 0.0], [-a, a, 0.0]]).unwrap();
    let k = CameraIntrinsics::new(300.0, 300.0, 128.0, 128.0).unwrap();
    let pose = Pose::new(UnitQuaternion::identity(), Vector3::new(0.0, 0.0, 2.0));
    let blobs: Vec<Point2<f64>> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
        .iter()
        .map(|&(sx, sy)| Point2::new(128.0 + 38.0 * sx, 128.0 + 38.0 * sy))
        .collect();
    let stack = render_labels(&blobs, 5.0, (256, 256), 1.0);
    let cost = settings(5.0).prepare(&stack);
    let proj = HeatmapProjector::new(k, ScaleConfig::square(1.0, 256).unwrap());
    for g in [pose_gradient(&pose, &cost, &model, &proj), numeric_gradient(&pose, &cost, &model, &proj, 1e-6)] {
        assert!(g[5].abs() > 1e-3, "{g}");
        for j in 0..5 {
            assert!(g[j].abs() < 1e-4 * g[5].abs(), "component {j}: {g}");
        }
    }
    // blobs lie outside the projected square: moving closer (-z) enlarges
    // the image and lowers the cost
    assert!(pose_gradient(&pose, &cost, &model, &proj)[5] > 0.0);
}

#[test]
fn smoothing_widens_the_basin() {
    // with a narrow label the unblurred landscape is flat a few sigma from
    // each peak; blurring restores a slope
    let (sc, proj) = truth(1.0);
    let stack = oracle_predict(&sc, &NoiseConfig::noiseless(), 3.0, 0).unwrap();
    let success = |blur: f64| {
        let s = settings(blur);
        let cost = s.prepare(&stack);
        (0..200)
            .filter(|&i| {
                let res = optimise(&start(&sc, 30.0, 50, i), &cost, &sc.model, &proj, &s).unwrap();
                reprojection_rms(&res.pose, &sc.pose, &sc.model, &sc.k) < 2.0
            })
            .count()
    };
    let (sharp, blurred) = (success(0.0), success(5.0));
    assert!(blurred > sharp, "blur 5: {blurred}/200, blur 0: {sharp}/200");
}

#[test]
fn ten_pixel_start_converges() {
    let (sc, proj) = truth(1.0);
    let stack = oracle_predict(&sc, &NoiseConfig::noiseless(), 5.0, 0).unwrap();
    let s = settings(5.0);
    let cost = s.prepare(&stack);
    for i in 0..50 {
        let res = optimise(&start(&sc, 10.0, 51, i), &cost, &sc.model, &proj, &s).unwrap();
        let err = reprojection_rms(&res.pose, &sc.pose, &sc.model, &sc.k);
        assert!(err < 1.0, "trial {i}: {err} px ({:?})", res.status);
    }
}

#[test]
fn far_start_without_blur_is_lost() {
    let (sc, proj) = truth(1.0);
    let stack = oracle_predict(&sc, &NoiseConfig::noiseless(), 5.0, 0).unwrap();
    let s = settings(0.0);
    let cost = s.prepare(&stack);
    let mut stalled = 0;
    for i in 0..50 {
        let res = optimise(&start(&sc, 150.0, 52, i), &cost, &sc.model, &proj, &s).unwrap();
        let err = reprojection_rms(&res.pose, &sc.pose, &sc.model, &sc.k);
        assert!(err > 50.0, "trial {i}: {err} px");
        stalled += (res.status == OptStatus::Stalled) as usize;
    }
    assert!(stalled > 25, "{stalled}/50 stalled");
}

#[test]
fn half_scale_matches_full_scale_on_finer_grid() {
    // s = 1/2 on 256 cells covers the same region as s = 1 on 512 cells
    // with the principal point moved by 128; lengths in cells double
    let r = reference_scene();
    let half = ScaleConfig::square(0.5, 256).unwrap();
    let full = ScaleConfig::square(1.0, 512).unwrap();
    let k_full = CameraIntrinsics::new(r.k.fx, r.k.fy, r.k.cx + 128.0, r.k.cy + 128.0).unwrap();
    let noise = |sigma| NoiseConfig { jitter_sigma: sigma, amp_range: [0.5, 1.0], seed: 6, ..NoiseConfig::noiseless() };
    let sc_half = SceneTruth { model: r.model.clone(), pose: r.pose, k: r.k, cfg: half, view: Default::default() };
    let sc_full = SceneTruth { k: k_full, cfg: full, ..sc_half.clone() };
    // both runs are driven to their minima; the comparison is between
    // landscapes, not between early stopping points
    let tight = |blur| OptSettings { max_iters: 5000, cost_tol: 1e-15, grad_tol: 1e-9, ..settings(blur) };
    let s_half = tight(5.0);
    let s_full = tight(10.0);
    for i in 0..20 {
        let stack_half = oracle_predict(&sc_half, &noise(2.0), 5.0, i).unwrap();
        let stack_full = oracle_predict(&sc_full, &noise(4.0), 10.0, i).unwrap();
        let init = start(&sc_half, 10.0, 53, i);
        let a = optimise(&init, &s_half.prepare(&stack_half), &r.model, &HeatmapProjector::new(r.k, half), &s_half).unwrap();
        let b = optimise(&init, &s_full.prepare(&stack_full), &r.model, &HeatmapProjector::new(k_full, full), &s_full).unwrap();
        // measured in s = 1/2 heatmap cells: the piecewise-bilinear
        // landscapes put each stationary point within half a cell
        let cells = reprojection_rms(&a.pose, &b.pose, &r.model, &r.k) * half.s();
        assert!(cells < 0.5, "view {i}: {cells} cells");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn accepted_steps_lower_the_cost(seed in any::<u64>(), px in 1.0f64..60.0, blur in 0.0f64..6.0) {
        let (sc, _) = truth(0.25);
        let cfg = ScaleConfig::new(0.25, (256, 256), (64, 64)).unwrap();
        let proj = HeatmapProjector::new(sc.k, cfg);
        let mut g = rng::stream(seed, &[]);
        let stack = common::random_smooth_stack(&mut g, sc.model.len(), 64, 0.25);
        let s = settings(blur);
        let cost = s.prepare(&stack);
        let init = perturb_by_reprojection(&sc.pose, &sc.model, &sc.k, px, &mut g).unwrap();
        let res = optimise(&init, &cost, &sc.model, &proj, &s).unwrap();
        prop_assert!(res.history.windows(2).all(|w| w[1] < w[0]));
        prop_assert_eq!(res.history.len(), res.iterations + 1);
        prop_assert!((res.cost - res.history[res.history.len() - 1]).abs() < 1e-12);
    }

    #[test]
    fn cost_of_truth_is_finite(seed in any::<u64>()) {
        let mut g = rng::stream(seed, &[]);
        let stack = common::random_smooth_stack(&mut g, 10, 32, 1.0);
        let cost = to_cost(&stack, 1e-8);
        for c in 0..10 {
            prop_assert!(cost.oob_cost(c).is_finite());
            prop_assert!(cost.channel(c).unwrap().iter().all(|v| v.is_finite() && *v >= 0.0));
        }
    }
}
