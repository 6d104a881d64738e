//! Pose recovery by gradient descent on the negative-log heatmap cost,
//! starting from poses displaced by a fixed reprojection error, with and
//! without pre-smoothing.
//!
//! ```bash
//! cargo run --release --example optimiser_tracking
//! ```

use oovtrack::eval::{perturb_by_reprojection, reprojection_rms};
use oovtrack::geometry::{HeatmapProjector, ScaleConfig};
use oovtrack::predictor::{oracle_predict, NoiseConfig, SceneTruth};
use oovtrack::rng;
use oovtrack::scene::reference_scene;
use oovtrack::tracker_opt::{optimise, OptSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = reference_scene();
    let cfg = ScaleConfig::square(1.0, 256)?;
    let truth = SceneTruth {
        model: r.model.clone(),
        pose: r.pose,
        k: r.k,
        cfg,
        view: Default::default(),
    };
    let projector = HeatmapProjector::new(r.k, cfg);
    let stack = oracle_predict(&truth, &NoiseConfig::noiseless(), 3.0, 0)?;
    let trials = 100;
    for blur in [0.0, 5.0] {
        let settings = OptSettings {
            blur_sigma: blur,
            ..OptSettings::default()
        };
        let cost = settings.prepare(&stack);
        for start_px in [10.0, 30.0, 60.0] {
            let mut ok = 0;
            for t in 0..trials {
                let mut g = rng::stream(2, &[t]);
                let init = perturb_by_reprojection(&r.pose, &r.model, &r.k, start_px, &mut g).expect("reachable");
                let res = optimise(&init, &cost, &r.model, &projector, &settings)?;
                assert!(res.history.windows(2).all(|w| w[1] <= w[0]));
                if reprojection_rms(&res.pose, &r.pose, &r.model, &r.k) < 2.0 {
                    ok += 1;
                }
            }
            println!("blur {blur}: start {start_px:>4} px -> {ok}/{trials} within 2 px");
        }
    }
    Ok(())
}
