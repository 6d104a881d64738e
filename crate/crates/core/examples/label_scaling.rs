//! Where image points land in heatmap space for different label scales.
//!
//! ```bash
//! cargo run --example label_scaling
//! ```

use nalgebra::Point2;
use oovtrack::geometry::{project, ScaleConfig};
use oovtrack::heatmap::render_labels;
use oovtrack::scene::reference_scene;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let probes = [
        Point2::new(128.0, 128.0),
        Point2::new(-50.0, 128.0),
        Point2::new(300.0, -80.0),
    ];
    for s in [1.0, 0.5, 1.0 / 3.0, 0.25] {
        let cfg = ScaleConfig::square(s, 256)?;
        print!("s = {s:.3}:");
        for p in &probes {
            let h = cfg.to_heatmap_space(p);
            let inside = (0.0..=255.0).contains(&h.x) && (0.0..=255.0).contains(&h.y);
            print!("  ({:.0}, {:.0}) -> ({:.1}, {:.1}){}", p.x, p.y, h.x, h.y, if inside { "" } else { " off-map" });
        }
        println!();
    }

    // The reference chair, shifted so half of it leaves the image.
    let r = reference_scene();
    let shifted: Vec<Point2<f64>> = project(&r.model, &r.pose, &r.k)?
        .iter()
        .map(|p| Point2::new(p.x + 150.0, p.y))
        .collect();
    for s in [1.0, 0.5] {
        let cfg = ScaleConfig::square(s, 256)?;
        let heat: Vec<Point2<f64>> = shifted.iter().map(|p| cfg.to_heatmap_space(p)).collect();
        let labels = render_labels(&heat, 5.0, (256, 256), s as f32);
        let peaked = (0..labels.channels())
            .filter(|&c| labels.max(c).is_ok_and(|m| m > 0.5))
            .count();
        println!("s = {s}: {peaked} of {} label channels have a peak on the map", labels.channels());
    }
    Ok(())
}
