//! Writes an oracle heatmap stack to an OOVH file and reads it back through
//! the file predictor.
//!
//! ```bash
//! cargo run --example oovh_roundtrip -- /tmp/frame.oovh
//! ```

use std::path::PathBuf;

use oovtrack::geometry::ScaleConfig;
use oovtrack::oovh;
use oovtrack::predictor::{FilePredictor, HeatmapPredictor, NoiseConfig, OraclePredictor, SceneTruth};
use oovtrack::scene::reference_scene;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("oovtrack_example.oovh"));
    let r = reference_scene();
    let truth = SceneTruth {
        model: r.model.clone(),
        pose: r.pose,
        k: r.k,
        cfg: ScaleConfig::square(0.5, 256)?,
        view: Default::default(),
    };
    let oracle = OraclePredictor::new(NoiseConfig {
        jitter_sigma: 1.5,
        seed: 4,
        ..NoiseConfig::noiseless()
    });
    let stack = oracle.predict_scene(&truth, 0)?;
    oovh::save_heatmaps(&stack, &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!("wrote {} ({bytes} bytes)", path.display());

    let loaded = FilePredictor::for_model(&r.model)
        .with_scale(0.5)
        .with_dims((256, 256))
        .predict(path.as_path())?;
    assert_eq!(loaded, stack);
    println!(
        "read back {} channels of {}x{} at s = {}",
        loaded.channels(),
        loaded.width(),
        loaded.height(),
        loaded.scale()
    );
    for c in 0..loaded.channels() {
        let (x, y, v) = loaded.argmax(c)?;
        println!("  {:<18} peak {v:.3} at ({x}, {y})", r.model.points()[c].name);
    }
    Ok(())
}
