//! Particle-filter tracking of a slowly moving camera with noisy oracle
//! heatmaps at s = 1/2.
//!
//! ```bash
//! cargo run --release --example particle_filter
//! ```

use oovtrack::geometry::ScaleConfig;
use oovtrack::predictor::NoiseConfig;
use oovtrack::scene::{reference_scene, SceneMotion};
use oovtrack::track::{run_sequence, Sequence, TrackMode, TrackSettings};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = reference_scene();
    let seq = Sequence {
        model: r.model,
        k: r.k,
        scale: ScaleConfig::square(0.5, 256)?,
        start: r.pose,
        motion: SceneMotion {
            angular: [0.0, 0.003, 0.0],
            linear: [0.003, 0.0, 0.0],
        },
        noise: NoiseConfig {
            jitter_sigma: 2.0,
            dropout_prob: 0.1,
            seed: 5,
            ..NoiseConfig::noiseless()
        },
        label_sigma: 5.0,
    };
    let settings = TrackSettings {
        mode: TrackMode::Pf,
        steps: 100,
        particles: 500,
        ..TrackSettings::default()
    };
    let steps = run_sequence(&seq, &settings, |_, s| {
        if s.step % 10 == 0 {
            println!(
                "step {:>3}: reprojection {:6.2} px, translation {:.4} m",
                s.step, s.errors.reprojection, s.errors.translation
            );
        }
    })?;
    let mut errs: Vec<f64> = steps.iter().map(|s| s.errors.reprojection).collect();
    errs.sort_by(f64::total_cmp);
    println!("median reprojection error {:.2} px", errs[errs.len() / 2]);
    Ok(())
}
