mod common;

use nalgebra::Point2;
use oovtrack::heatmap::{render_labels, smooth, to_cost, HeatmapStack};
use oovtrack::oovh::{decode, encode, load_heatmaps, save_heatmaps};
use oovtrack::rng;
use proptest::prelude::*;

fn stack() -> impl Strategy<Value = HeatmapStack> {
    (1usize..4, 1usize..24, 1usize..24, 0.05f32..=1.0).prop_flat_map(|(c, h, w, s)| {
        prop::collection::vec(0.0f32..=1.0, c * h * w)
            .prop_map(move |data| HeatmapStack::new(c, h, w, s, data).unwrap())
    })
}

proptest! {
    #[test]
    fn oovh_round_trip_is_bitwise(st in stack()) {
        let bytes = encode(&st);
        prop_assert_eq!(bytes.len(), 24 + 4 * st.values().len());
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(back.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        st.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(back.scale().to_bits(), st.scale().to_bits());
    }

    #[test]
    fn cost_argmin_is_heatmap_argmax(st in stack()) {
        let cost = to_cost(&st, 1e-8);
        for c in 0..st.channels() {
            let (x, y, v) = st.argmax(c).unwrap();
            let (cx, cy, _) = cost.argmin(c).unwrap();
            // ties: the argmin must at least sit on a cell of maximal value
            prop_assert_eq!(st.get(c, cx, cy), v);
            if st.channel(c).unwrap().iter().filter(|&&u| u == v).count() == 1 {
                prop_assert_eq!((cx, cy), (x, y));
            }
        }
    }

    #[test]
    fn exp_of_negative_cost_sums_to_one(st in stack()) {
        let cost = to_cost(&st, 1e-8);
        for c in 0..st.channels() {
            let total: f64 = cost.channel(c).unwrap().iter().map(|&v| (-(v as f64)).exp()).sum();
            prop_assert!((total - 1.0).abs() < 1e-5, "{}", total);
        }
    }

    #[test]
    fn sampling_is_lipschitz(st in stack(), x in 0.0f64..1.0, y in 0.0f64..1.0, dx in -0.3f64..0.3, dy in -0.3f64..0.3) {
        let (w, h) = (st.width() as f64 - 1.0, st.height() as f64 - 1.0);
        let p = Point2::new(x * w, y * h);
        let q = Point2::new((p.x + dx).clamp(0.0, w), (p.y + dy).clamp(0.0, h));
        let ch = st.channel(0).unwrap();
        let mut lip = 0.0f32;
        for yy in 0..st.height() {
            for xx in 0..st.width() {
                let v = ch[yy * st.width() + xx];
                if xx + 1 < st.width() { lip = lip.max((v - ch[yy * st.width() + xx + 1]).abs()); }
                if yy + 1 < st.height() { lip = lip.max((v - ch[(yy + 1) * st.width() + xx]).abs()); }
            }
        }
        let diff = (st.sample(0, &p).unwrap() - st.sample(0, &q).unwrap()).abs();
        // per axis the slope is at most the largest neighbour difference
        prop_assert!(diff <= lip as f64 * ((p.x - q.x).abs() + (p.y - q.y).abs()) * (1.0 + 1e-6) + 1e-9);
    }

    #[test]
    fn label_argmax_within_half_pixel(x in 0.0f64..63.0, y in 0.0f64..47.0, sigma in 1.0f64..8.0) {
        let st = render_labels(&[Point2::new(x, y)], sigma, (64, 48), 1.0);
        let (ax, ay, _) = st.argmax(0).unwrap();
        prop_assert!((ax as f64 - x).abs() <= 0.5 + 1e-12 && (ay as f64 - y).abs() <= 0.5 + 1e-12);
    }
}

#[test]
fn smoothing_preserves_mass_of_interior_blobs() {
    for i in 0..20 {
        let mut g = rng::stream(20, &[i]);
        let st = common::random_smooth_stack(&mut g, 1, 64, 1.0);
        let centred = render_labels(&[Point2::new(128.0, 128.0)], 4.0, (256, 256), 1.0);
        for (input, sigma) in [(&centred, 3.0), (&centred, 5.0)] {
            let before: f64 = input.values().iter().map(|&v| v as f64).sum();
            let after: f64 = smooth(input, sigma).values().iter().map(|&v| v as f64).sum();
            assert!((after / before - 1.0).abs() < 1e-4, "{before} vs {after}");
        }
        // reflective boundary keeps mass even for blobs touching the border
        let before: f64 = st.values().iter().map(|&v| v as f64).sum();
        let after: f64 = smooth(&st, 2.0).values().iter().map(|&v| v as f64).sum();
        assert!((after / before - 1.0).abs() < 1e-3, "{before} vs {after}");
    }
}

#[test]
fn file_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let mut g = rng::stream(21, &[]);
    let st = common::random_smooth_stack(&mut g, 4, 40, 0.25);
    let path = dir.path().join("x.oovh");
    save_heatmaps(&st, &path).unwrap();
    assert_eq!(load_heatmaps(&path).unwrap(), st);
}
