//! The `oovtrack` command line.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::Point2;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::eval::{self, plot, SweepConfig};
use crate::geometry::{project, GeometryError};
use crate::oovh;
use crate::pnp::{solve_pnp, Correspondences};
use crate::rng;
use crate::scene::SceneFile;
use crate::track::{run_sequence, trajectory_csv, Sequence, TrackMode, TrackSettings};
use crate::tracker_pf::MotionConfig;

pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "oovtrack", version, about = "Pose tracking from out-of-view keypoint heatmaps")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Overrides the seed of the config or scene file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory, or the trajectory file for `track`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Pose-error-versus-visibility sweep: CSV summary and plots.
    Sweep {
        #[arg(long)]
        config: PathBuf,
    },
    /// Track a synthetic sequence and write the per-step trajectory.
    Track {
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long)]
        scene: PathBuf,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 500)]
        particles: usize,
    },
    /// Render the oracle heatmaps of a scene to OOVH and PNG.
    Render {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Print the header and per-channel peaks of an OOVH file.
    HeatmapInfo { file: PathBuf },
    /// Recover the scene pose from its own (optionally noisy) projections.
    PnpCheck {
        #[arg(long)]
        scene: PathBuf,
        /// Pixel noise standard deviation added to the projections.
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        trials: usize,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
pub enum Mode {
    Pf,
    Opt,
}

/// Everything needed to reproduce a run.
#[derive(Serialize, Debug)]
pub struct RunManifest {
    pub command: Vec<String>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub version: &'static str,
    pub timestamp_unix: u64,
}

#[derive(Debug)]
pub enum CliError {
    Config(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// The error chain joined by `: `, leaving out causes whose text the
/// previous message already contains.
fn chain_message(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let text = cause.to_string();
        if parts.last().is_none_or(|prev| !prev.contains(&text)) {
            parts.push(text);
        }
    }
    parts.join(": ")
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {}", chain_message(e)),
            CliError::Runtime(e) => write!(f, "error: {}", chain_message(e)),
        }
    }
}

fn config<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Config)
}

fn runtime<T>(r: anyhow::Result<T>) -> Result<T, CliError> {
    r.map_err(CliError::Runtime)
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn load_scene(path: &Path, seed: Option<u64>) -> Result<SceneFile, CliError> {
    let mut sf = config(SceneFile::load(path).with_context(|| format!("reading scene {}", path.display())))?;
    config(sf.noise.validate().map_err(|e| anyhow!(e)))?;
    if let Some(seed) = seed {
        sf.noise.seed = seed;
    }
    Ok(sf)
}

fn write_manifest(path: &Path, global: &GlobalArgs, config: Option<&Path>, out: &Path, seed: Option<u64>) -> Result<(), CliError> {
    let manifest = RunManifest {
        command: std::env::args().collect(),
        config: config.map(Path::to_path_buf),
        seed: seed.or(global.seed),
        out: out.to_path_buf(),
        version: env!("CARGO_PKG_VERSION"),
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        runtime(std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display())))?;
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises");
    runtime(std::fs::write(path, text).with_context(|| format!("writing {}", path.display())))
}

/// Runs a parsed command line.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let global = cli.global.clone();
    let pool = config(
        rayon::ThreadPoolBuilder::new()
            .num_threads(global.threads.unwrap_or(0))
            .build()
            .context("building worker pool"),
    )?;
    pool.install(|| match cli.command {
        Command::Sweep { config: path } => sweep(&global, &path),
        Command::Track {
            mode,
            scene,
            steps,
            particles,
        } => track(&global, mode, &scene, steps, particles),
        Command::Render { scene } => render(&global, &scene),
        Command::HeatmapInfo { file } => heatmap_info(&file),
        Command::PnpCheck { scene, noise, trials } => pnp_check(&global, &scene, noise, trials),
    })
}

fn sweep(global: &GlobalArgs, path: &Path) -> Result<(), CliError> {
    let mut cfg = config(SweepConfig::load(path).with_context(|| format!("reading {}", path.display())))?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
        cfg.noise.seed = seed;
    }
    let base = base_dir(path);
    config(cfg.resolve_scene(&base).map_err(anyhow::Error::from))?;
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("sweep_out"));
    write_manifest(&out.join("manifest.json"), global, Some(path), &out, Some(cfg.seed))?;
    let result = runtime(eval::run_sweep(&cfg, &base).map_err(anyhow::Error::from))?;
    let written = runtime(eval::write_outputs(&result, &cfg, &out).map_err(anyhow::Error::from))?;
    let failures = result.per_view.iter().filter(|r| r.failure.is_some()).count();
    println!(
        "{} views x {} scales, {} failures",
        result.views.len(),
        cfg.s_values.len(),
        failures
    );
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn track(global: &GlobalArgs, mode: Mode, scene: &Path, steps: usize, particles: usize) -> Result<(), CliError> {
    if steps == 0 || particles == 0 {
        return config(Err(anyhow!("--steps and --particles must be >= 1")));
    }
    let sf = load_scene(scene, global.seed)?;
    let seq = config(Sequence::from_scene_file(&sf, &base_dir(scene)).map_err(anyhow::Error::from))?;
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("traj.csv"));
    let (dir, stem) = (base_dir(&out), out.file_stem().map_or("traj".into(), |s| s.to_string_lossy().into_owned()));
    write_manifest(&dir.join(format!("{stem}.manifest.json")), global, Some(scene), &out, Some(sf.noise.seed))?;
    let settings = TrackSettings {
        mode: match mode {
            Mode::Pf => TrackMode::Pf,
            Mode::Opt => TrackMode::Opt,
        },
        steps,
        particles,
        motion: MotionConfig {
            seed: sf.noise.seed,
            ..MotionConfig::default()
        },
        ..TrackSettings::default()
    };
    let projector = seq.projector();
    let mut last_overlay = None;
    let records = runtime(
        run_sequence(&seq, &settings, |stack, rec| {
            if rec.step + 1 == steps {
                let truth = projector.project_model(&rec.truth, &seq.model);
                let est = projector.project_model(&rec.estimate, &seq.model);
                last_overlay = Some(plot::overlay(stack, &seq.scale, &truth, &est));
            }
        })
        .map_err(anyhow::Error::from),
    )?;
    runtime(std::fs::write(&out, trajectory_csv(&records)).with_context(|| format!("writing {}", out.display())))?;
    let overlay_path = dir.join(format!("{stem}_overlay.png"));
    if let Some(img) = last_overlay {
        runtime(img.save(&overlay_path).with_context(|| format!("writing {}", overlay_path.display())))?;
    }
    let mut errs: Vec<f64> = records.iter().map(|r| r.errors.reprojection).collect();
    errs.sort_by(f64::total_cmp);
    println!(
        "{} steps, median reprojection error {:.3} px, final {:.3} px",
        records.len(),
        errs[errs.len() / 2],
        records.last().map_or(f64::NAN, |r| r.errors.reprojection)
    );
    println!("wrote {}", out.display());
    println!("wrote {}", overlay_path.display());
    Ok(())
}

fn render(global: &GlobalArgs, scene: &Path) -> Result<(), CliError> {
    let sf = load_scene(scene, global.seed)?;
    let seq = config(Sequence::from_scene_file(&sf, &base_dir(scene)).map_err(anyhow::Error::from))?;
    let out = global.out.clone().unwrap_or_else(|| PathBuf::from("render_out"));
    write_manifest(&out.join("manifest.json"), global, Some(scene), &out, Some(sf.noise.seed))?;
    let stack = runtime(seq.observe(&seq.start, 0).map_err(anyhow::Error::from))?;
    let projector = seq.projector();
    let truth = projector.project_model(&seq.start, &seq.model);
    let oovh_path = out.join("heatmaps.oovh");
    let png_path = out.join("heatmaps.png");
    runtime(oovh::save_heatmaps(&stack, &oovh_path).map_err(anyhow::Error::from))?;
    runtime(
        plot::overlay(&stack, &seq.scale, &truth, &[])
            .save(&png_path)
            .with_context(|| format!("writing {}", png_path.display())),
    )?;
    println!("wrote {}", oovh_path.display());
    println!("wrote {}", png_path.display());
    Ok(())
}

fn heatmap_info(file: &Path) -> Result<(), CliError> {
    let stack = runtime(oovh::load_heatmaps(file).with_context(|| format!("reading {}", file.display())))?;
    println!("channels {}", stack.channels());
    println!("dims {}x{}", stack.width(), stack.height());
    println!("s {}", stack.scale());
    for c in 0..stack.channels() {
        let (x, y, v) = stack.argmax(c).expect("channel in range");
        println!("channel {c}: peak {v:.4} at ({x}, {y})");
    }
    Ok(())
}

fn pnp_check(global: &GlobalArgs, scene: &Path, noise: f64, trials: usize) -> Result<(), CliError> {
    if !(noise >= 0.0 && noise.is_finite()) || trials == 0 {
        return config(Err(anyhow!("--noise must be >= 0 and --trials >= 1")));
    }
    let sf = load_scene(scene, global.seed)?;
    let (model, k) = config(sf.resolve(&base_dir(scene)).map_err(anyhow::Error::from))?;
    let clean = config(project(&model, &sf.pose, &k).map_err(|e: GeometryError| anyhow!(e)))?;
    if let Some(out) = &global.out {
        write_manifest(&out.join("manifest.json"), global, Some(scene), out, Some(sf.noise.seed))?;
    }
    let jitter = Normal::new(0.0, noise).expect("finite noise");
    let mut rows = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut g = rng::stream(sf.noise.seed, &[t as u64]);
        let image: Vec<Point2<f64>> = clean
            .iter()
            .map(|p| Point2::new(p.x + jitter.sample(&mut g), p.y + jitter.sample(&mut g)))
            .collect();
        let corr = runtime(Correspondences::new(model.positions().collect(), image).map_err(anyhow::Error::from))?;
        let pose = runtime(solve_pnp(&corr, &k).map_err(anyhow::Error::from))?;
        let e = eval::pose_errors(&pose, &sf.pose, &model, &k);
        if trials <= 10 {
            println!(
                "trial {t}: rotation {:.3e} rad, translation {:.3e} m, reprojection {:.3e} px",
                e.rotation, e.translation, e.reprojection
            );
        }
        rows.push(e);
    }
    let median = |metric: eval::Metric| {
        let mut v: Vec<f64> = rows.iter().map(|e| e.get(metric)).collect();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    println!(
        "{trials} trials at {noise} px noise, median errors: rotation {:.3e} rad, translation {:.3e} m, reprojection {:.3e} px",
        median(eval::Metric::Rotation),
        median(eval::Metric::Translation),
        median(eval::Metric::Reprojection)
    );
    if let Some(out) = &global.out {
        let mut csv = String::from("trial,rotation_rad,translation_m,reprojection_px\n");
        for (t, e) in rows.iter().enumerate() {
            csv.push_str(&format!("{t},{},{},{}\n", e.rotation, e.translation, e.reprojection));
        }
        let path = out.join("pnp_check.csv");
        runtime(std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display())))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Parses `std::env::args`, runs and returns the process exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("oovtrack: {e}");
            e.exit_code()
        }
    }
}
