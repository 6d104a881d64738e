mod common;

use nalgebra::{Point2, Vector3};
use oovtrack::eval::{visibility_in_rect, Rect};
use oovtrack::geometry::project;
use oovtrack::pnp::{reprojection_rms, solve_pnp, Correspondences};
use oovtrack::rng;
use oovtrack::scene::reference_camera;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};

fn noisy_correspondences<R: Rng>(rng: &mut R, sigma: f64) -> (Correspondences, oovtrack::geometry::Pose) {
    let k = reference_camera();
    let model = common::random_model(rng);
    let pose = common::random_pose(rng);
    let n = Normal::new(0.0, sigma).unwrap();
    let image = project(&model, &pose, &k)
        .unwrap()
        .iter()
        .map(|p| Point2::new(p.x + n.sample(rng), p.y + n.sample(rng)))
        .collect();
    (Correspondences::new(model.positions().collect(), image).unwrap(), pose)
}

#[test]
fn half_pixel_noise_refits_below_one_pixel() {
    let k = reference_camera();
    let mut residual = Vec::new();
    let mut to_truth = Vec::new();
    for i in 0..100 {
        let mut g = rng::stream(30, &[i]);
        let (corr, truth) = noisy_correspondences(&mut g, 0.5);
        let pose = solve_pnp(&corr, &k).unwrap();
        for p in corr.world() {
            assert!(pose.transform_point(p).z > 0.0);
        }
        residual.push(reprojection_rms(&pose, &corr, &k).unwrap());
        let clean: Vec<_> = corr.world().iter().map(|p| k.project_camera_point(&truth.transform_point(p))).collect();
        let clean = Correspondences::new(corr.world().to_vec(), clean).unwrap();
        to_truth.push(reprojection_rms(&pose, &clean, &k).unwrap());
    }
    let median = |v: &mut Vec<f64>| {
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    assert!(median(&mut residual) < 1.0);
    assert!(median(&mut to_truth) < 1.0);
}

#[test]
fn solution_is_left_invariant() {
    let k = reference_camera();
    for i in 0..50 {
        let mut g = rng::stream(31, &[i]);
        let (corr, _) = noisy_correspondences(&mut g, 0.5);
        let rot = common::random_rotation(&mut g);
        let rotated: Vec<Vector3<f64>> = corr.world().iter().map(|p| rot * p).collect();
        let corr_rot = Correspondences::new(rotated, corr.image().to_vec()).unwrap();
        let a = solve_pnp(&corr, &k).unwrap();
        let b = solve_pnp(&corr_rot, &k).unwrap();
        let ra = reprojection_rms(&a, &corr, &k).unwrap();
        let rb = reprojection_rms(&b, &corr_rot, &k).unwrap();
        assert!((ra - rb).abs() < 1e-9, "{ra} vs {rb}");
        // same camera, expressed in the rotated world
        let expected = a.in_rotated_world(&rot);
        assert!(expected.rotation_angle_to(&b) < 1e-6);
        assert!((expected.translation() - b.translation()).norm() < 1e-6);
    }
}

fn points() -> impl Strategy<Value = Vec<Point2<f64>>> {
    prop::collection::vec((-300.0f64..500.0, -300.0f64..500.0), 3..15)
        .prop_map(|v| v.into_iter().map(|(x, y)| Point2::new(x, y)).collect())
}

proptest! {
    #[test]
    fn visibility_is_a_fraction(pts in points()) {
        if let Ok(v) = visibility_in_rect(&pts, &Rect::image(256, 256)) {
            prop_assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn visibility_ignores_point_order(pts in points(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let mut shuffled = pts.clone();
        shuffled.shuffle(&mut rng::stream(seed, &[]));
        let rect = Rect::image(256, 256);
        match (visibility_in_rect(&pts, &rect), visibility_in_rect(&shuffled, &rect)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{:?}", other),
        }
    }

    #[test]
    fn nested_windows_are_monotone(pts in points(), inset in 0.0f64..120.0, grow in 0.0f64..200.0) {
        let mid = Rect::image(256, 256);
        let inner = Rect::new(mid.x0 + inset, mid.y0 + inset, mid.x1 - inset, mid.y1 - inset);
        let outer = Rect::new(mid.x0 - grow, mid.y0 - grow, mid.x1 + grow, mid.y1 + grow);
        if let (Ok(a), Ok(b), Ok(c)) = (
            visibility_in_rect(&pts, &inner),
            visibility_in_rect(&pts, &mid),
            visibility_in_rect(&pts, &outer),
        ) {
            prop_assert!(a <= b + 1e-12 && b <= c + 1e-12, "{} {} {}", a, b, c);
        }
    }
}
