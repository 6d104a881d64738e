//! Recovers the reference pose from projections with increasing pixel
//! noise.
//!
//! ```bash
//! cargo run --example pnp_roundtrip
//! ```

use nalgebra::Point2;
use oovtrack::eval::pose_errors;
use oovtrack::geometry::project;
use oovtrack::pnp::{solve_pnp, Correspondences};
use oovtrack::rng;
use oovtrack::scene::reference_scene;
use rand_distr::{Distribution, Normal};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let r = reference_scene();
    let clean = project(&r.model, &r.pose, &r.k)?;
    println!("{:>8} {:>12} {:>12} {:>12}", "noise", "rot [rad]", "trans [m]", "reproj [px]");
    for sigma in [0.0, 0.25, 0.5, 1.0, 2.0] {
        let mut g = rng::stream(1, &[]);
        let n = Normal::new(0.0, sigma)?;
        let noisy: Vec<Point2<f64>> = clean
            .iter()
            .map(|p| Point2::new(p.x + n.sample(&mut g), p.y + n.sample(&mut g)))
            .collect();
        let corr = Correspondences::new(r.model.positions().collect(), noisy)?;
        let pose = solve_pnp(&corr, &r.k)?;
        let e = pose_errors(&pose, &r.pose, &r.model, &r.k);
        println!(
            "{sigma:>8.2} {:>12.3e} {:>12.3e} {:>12.3e}",
            e.rotation, e.translation, e.reprojection
        );
    }
    Ok(())
}
