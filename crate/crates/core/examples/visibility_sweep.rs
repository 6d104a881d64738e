//! A reduced pose-error-versus-visibility sweep, printed as a table of
//! median rotation errors per bucket and label scale.
//!
//! ```bash
//! cargo run --release --example visibility_sweep -- 400
//! ```

use std::path::Path;

use oovtrack::eval::{run_sweep, Metric, SweepConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let views = std::env::args().nth(1).map_or(Ok(400), |a| a.parse())?;
    let cfg = SweepConfig {
        views,
        ..SweepConfig::default()
    };
    let result = run_sweep(&cfg, Path::new("."))?;
    for metric in [Metric::Rotation, Metric::Reprojection] {
        println!("median {} error [{}]", metric.name(), metric.unit());
        print!("{:>8}", "bucket");
        for s in &cfg.s_values {
            print!("{:>10}", format!("s={s:.2}"));
        }
        println!();
        for tenth in (3..=10).rev() {
            let bucket = tenth as f64 / 10.0;
            print!("{bucket:>8.1}");
            for &s in &cfg.s_values {
                match result.median(s, bucket, metric) {
                    Some(m) => print!("{m:>10.4}"),
                    None => print!("{:>10}", "-"),
                }
            }
            println!();
        }
    }
    Ok(())
}
