//! `fado` command-line front end.
//!
//! Exit codes: 0 success, 1 runtime or format failure (including failed
//! sweep checks), 2 usage error. Diagnostics go to stderr; data goes to the
//! requested output file or stdout.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use fado::bounds::{
    gain_energy_bound, mistake_bound_adaptive, mistake_bound_agnostic, power_delta_bound,
    riemann_zeta, AcBound, GroundTruth,
};
use fado::experiments::{
    adjacent_inversions, compare_adaptive, least_squares, log_grid, spearman, sweep_center_scale,
    sweep_contamination, sweep_dimension, sweep_epsilon, sweep_margin, SweepConfig, SweepResult,
};
use fado::io::{read_stream, write_stream};
use fado::scene::{
    gen_synthetic_clips, load_pgm_sequence, read_packed, run_scene_detection_from, scene_detector,
    timeline_to_csv, write_memory_snapshot, FrameSequence,
};
use fado::streamgen::{generate, Design, StreamSpec};
use fado::{Detector, DetectorMode, GainSchedule, Vector};

/// Mistake-driven online fault detection.
#[derive(Parser)]
#[command(name = "fado", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a detector over a vector-stream file and write per-step outcomes as CSV.
    Run(RunArgs),
    /// Run a parameter sweep on synthetic streams and write the results.
    Sweep(SweepArgs),
    /// Scene-change detection on a frame sequence.
    Scene(SceneArgs),
    /// Evaluate the explicit mistake and power bounds, printed as JSON.
    Bounds(BoundsArgs),
    /// Generate a synthetic vector stream.
    Gen(GenArgs),
}

/// Marks errors caused by inconsistent flags (exit code 2).
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    /// Known radius, power-decay gain.
    Fixed,
    /// Radius 1/γ grown with every mistake, power-decay gain.
    Adaptive,
    /// Known radius, constant gain (tracking).
    ConstantGain,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum, default_value = "fixed")]
    mode: ModeArg,
    /// Radius ε; required for `fixed` and `constant-gain`.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Initial gain γ₀ (power decay) or the constant gain γ.
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    /// Decay exponent τ in (0, 1/2).
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    /// Input stream (`.csv` for CSV, anything else for the binary format).
    #[arg(long)]
    input: PathBuf,
    /// Outcome CSV; stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Resume from this checkpoint instead of a fresh detector.
    #[arg(long)]
    checkpoint_in: Option<PathBuf>,
    /// Write the final detector state here.
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum, PartialEq)]
enum SweepKind {
    Margin,
    Center,
    Dim,
    Epsilon,
    Contamination,
    Adaptive,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// Number of seeds; seeds 1..=N are used.
    #[arg(long, default_value_t = 5)]
    seeds: u64,
    /// Stream length T.
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    /// Held-out outliers per run for the power estimate.
    #[arg(long, default_value_t = 10_000)]
    heldout: usize,
    /// Held-out outliers lie at least this far beyond ε.
    #[arg(long, default_value_t = 0.1)]
    power_delta: f64,
    /// Grid values (μ for margin/adaptive, c for center, n for dim,
    /// fractions for contamination, ε for epsilon). Defaults per kind.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    /// Dimension for margin, center, contamination and adaptive sweeps.
    #[arg(long, default_value_t = 2)]
    dim: usize,
    /// Centre scale c (w̄ = c·1ₙ) for margin, dim and adaptive sweeps.
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    /// Margin μ for center, dim and contamination sweeps.
    #[arg(long)]
    mu: Option<f64>,
    /// Radius ε (not used by the epsilon and contamination sweeps).
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    /// Seed for the per-point designs of the epsilon sweep.
    #[arg(long, default_value_t = 1)]
    design_seed: u64,
    /// Results file; `.json` writes JSON with metadata, anything else CSV.
    /// CSV to stdout when omitted.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SceneArgs {
    /// Packed frame file.
    #[arg(long, conflicts_with_all = ["pgm", "synthetic"])]
    frames: Option<PathBuf>,
    /// Binary PGM frames in order.
    #[arg(long, num_args = 1.., conflicts_with = "synthetic")]
    pgm: Vec<PathBuf>,
    /// Use the synthetic clip generator instead of input files.
    #[arg(long)]
    synthetic: bool,
    #[arg(long, default_value_t = 40)]
    width: usize,
    #[arg(long, default_value_t = 40)]
    height: usize,
    #[arg(long, default_value_t = 16)]
    clips: usize,
    #[arg(long, default_value_t = 50)]
    frames_per_clip: usize,
    /// Per-pixel noise amplitude of synthetic clips (grey levels).
    #[arg(long, default_value_t = 8)]
    noise: u8,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 100.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    /// Timeline CSV.
    #[arg(long)]
    timeline: Option<PathBuf>,
    /// Directory for memory snapshots (PGM).
    #[arg(long)]
    snapshots: Option<PathBuf>,
    /// Snapshot the memory before these frame indices (and after the last frame).
    #[arg(long, value_delimiter = ',')]
    snapshot_at: Vec<usize>,
    #[arg(long)]
    checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    checkpoint_out: Option<PathBuf>,
}

#[derive(Args)]
struct BoundsArgs {
    /// ‖w̄‖₂
    #[arg(long)]
    wnorm: f64,
    /// Margin μ.
    #[arg(long)]
    mu: f64,
    #[arg(long, default_value_t = 0.25)]
    tau: f64,
    #[arg(long, default_value_t = 1.0)]
    gamma0: f64,
    /// Contamination size σ_T for the agnostic bound.
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Mistake count m_T for the power bound.
    #[arg(long)]
    mt: Option<u64>,
    /// Radius ε for the adaptive-radius bound.
    #[arg(long)]
    epsilon: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DesignArg {
    Ball,
    Circle,
    Mixture,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "ball")]
    design: DesignArg,
    #[arg(long, default_value_t = 2)]
    dim: usize,
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    /// w̄ = c·1ₙ
    #[arg(long, default_value_t = 1.0)]
    center_scale: f64,
    #[arg(long, default_value_t = 1.0)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.1)]
    mu: f64,
    /// Outlier probability per position (mixture only).
    #[arg(long, default_value_t = 0.0)]
    fraction: f64,
    /// Outer radius of the outlier shell; 10ε when omitted.
    #[arg(long)]
    outlier_radius_max: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    outlier_delta_min: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Output stream (`.csv` for CSV, anything else binary).
    #[arg(long)]
    output: PathBuf,
    /// Optional file with one 0/1 outlier label per line.
    #[arg(long)]
    labels: Option<PathBuf>,
}

fn output_writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn load_checkpoint(path: &Path) -> Result<Detector> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Detector::from_checkpoint(&bytes).with_context(|| format!("loading {}", path.display()))
}

fn save_checkpoint(det: &Detector, path: &Path) -> Result<()> {
    fs::write(path, det.to_checkpoint()).with_context(|| format!("writing {}", path.display()))
}

fn cmd_run(a: RunArgs) -> Result<()> {
    let (mode, schedule) = match (a.mode, a.epsilon) {
        (ModeArg::Fixed, Some(epsilon)) => (
            DetectorMode::FixedRadius { epsilon },
            GainSchedule::power_decay(a.gamma0, a.tau),
        ),
        (ModeArg::ConstantGain, Some(epsilon)) => (
            DetectorMode::FixedRadius { epsilon },
            GainSchedule::constant(a.gamma0),
        ),
        (ModeArg::Adaptive, None) => (
            DetectorMode::AdaptiveRadius,
            GainSchedule::power_decay(a.gamma0, a.tau),
        ),
        (ModeArg::Adaptive, Some(_)) => {
            return Err(usage("--epsilon is not used with --mode adaptive"))
        }
        (_, None) => return Err(usage("--epsilon is required for this mode")),
    };
    let schedule = schedule.map_err(|e| usage(e.to_string()))?;
    mode.validate().map_err(|e| usage(e.to_string()))?;

    let stream = read_stream(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    let mut det = match &a.checkpoint_in {
        Some(p) => load_checkpoint(p)?,
        None => {
            let dim = match stream.first() {
                Some(y) => y.dim(),
                None => bail!("{} is empty and no checkpoint was given", a.input.display()),
            };
            Detector::new(dim, mode, schedule)?
        }
    };
    let first = det.steps();
    let outcomes = det.run_stream(&stream)?;
    let mut w = output_writer(a.output.as_deref())?;
    writeln!(w, "t,alarm,distance,threshold,gain")?;
    for (i, o) in outcomes.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{},{}",
            first + i as u64 + 1,
            o.alarm as u8,
            o.distance,
            o.threshold,
            o.gain_applied
        )?;
    }
    w.flush()?;
    eprintln!(
        "fado: {} transactions, {} alarms in this run, {} mistakes in total",
        outcomes.len(),
        outcomes.iter().filter(|o| o.alarm).count(),
        det.mistakes()
    );
    if let Some(p) = &a.checkpoint_out {
        save_checkpoint(&det, p)?;
    }
    Ok(())
}

fn default_grid(kind: SweepKind) -> Vec<f64> {
    match kind {
        SweepKind::Margin | SweepKind::Adaptive => vec![0.001, 0.01, 0.1],
        SweepKind::Center => vec![0.5, 1.0, 2.0, 4.0],
        SweepKind::Dim => vec![2.0, 10.0, 50.0, 100.0],
        SweepKind::Epsilon => log_grid(1e-2, 1e2, 20),
        SweepKind::Contamination => vec![0.0, 0.1, 0.2, 0.3, 0.4, 0.5],
    }
}

/// Returns the list of failed checks.
fn sweep_checks(kind: SweepKind, r: &SweepResult) -> Vec<String> {
    let mut failed = Vec::new();
    for rec in r.bound_violations() {
        failed.push(format!(
            "bound violated at {}={} seed {} ({}): m_T {} > {}",
            rec.parameter,
            rec.value,
            rec.seed,
            rec.variant,
            rec.m_t,
            rec.bound.unwrap_or(0)
        ));
    }
    for rec in r.audit_failures() {
        failed.push(format!(
            "trace audit failed at {}={} seed {} ({})",
            rec.parameter, rec.value, rec.seed, rec.variant
        ));
    }
    let meds = r.medians("fixed");
    let m: Vec<f64> = meds.iter().map(|s| s.m_t).collect();
    let x: Vec<f64> = meds.iter().map(|s| s.value).collect();
    eprintln!("fado: median m_T per grid point {m:?}");
    match kind {
        SweepKind::Margin => {
            let inv = adjacent_inversions(&m, false);
            eprintln!("fado: inversions against nonincreasing order: {inv}");
            if inv > 1 {
                failed.push(format!(
                    "median m_T not nonincreasing in μ ({inv} inversions)"
                ));
            }
        }
        SweepKind::Dim => {
            let inv = adjacent_inversions(&m, true);
            eprintln!("fado: inversions against nondecreasing order: {inv}");
            if inv > 1 {
                failed.push(format!(
                    "median m_T not nondecreasing in n ({inv} inversions)"
                ));
            }
        }
        SweepKind::Center => {
            eprintln!(
                "fado: inversions against nondecreasing order: {} (reported only)",
                adjacent_inversions(&m, true)
            );
        }
        SweepKind::Epsilon => {
            eprintln!("fado: Spearman ρ(ε, median m_T) = {}", spearman(&x, &m));
        }
        SweepKind::Contamination => {
            let p: Vec<f64> = meds.iter().map(|s| s.p_t).collect();
            let fit = least_squares(&p, &m);
            eprintln!(
                "fado: m_T ≈ {} · p_T + {}, R² = {}",
                fit.slope, fit.intercept, fit.r_squared
            );
        }
        SweepKind::Adaptive => {
            let fixed: Vec<f64> = meds.iter().map(|s| s.power).collect();
            let adaptive: Vec<f64> = r.medians("adaptive").iter().map(|s| s.power).collect();
            eprintln!("fado: median power fixed {fixed:?}, adaptive {adaptive:?}");
        }
    }
    failed
}

fn cmd_sweep(a: SweepArgs) -> Result<bool> {
    if a.seeds == 0 {
        return Err(usage("--seeds must be at least 1"));
    }
    let cfg = SweepConfig {
        seeds: (1..=a.seeds).collect(),
        count: a.count,
        tau: a.tau,
        gamma0: a.gamma0,
        heldout: a.heldout,
        power_delta: a.power_delta,
    };
    GainSchedule::power_decay(a.gamma0, a.tau).map_err(|e| usage(e.to_string()))?;
    let grid = if a.grid.is_empty() {
        default_grid(a.kind)
    } else {
        a.grid.clone()
    };
    let mu = a.mu.unwrap_or(match a.kind {
        SweepKind::Contamination => 0.1,
        _ => 0.01,
    });
    let result = match a.kind {
        SweepKind::Margin => {
            sweep_margin(&cfg, &grid, a.center_scale, a.dim, a.epsilon, Design::Ball)
        }
        SweepKind::Center => sweep_center_scale(&cfg, &grid, a.dim, mu, a.epsilon),
        SweepKind::Dim => {
            let dims = grid
                .iter()
                .map(|&v| {
                    if v >= 1.0 && v.fract() == 0.0 {
                        Ok(v as usize)
                    } else {
                        Err(usage(format!("dimension {v} is not a positive integer")))
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            sweep_dimension(&cfg, &dims, a.center_scale, mu, a.epsilon)
        }
        SweepKind::Epsilon => sweep_epsilon(&cfg, &grid, a.design_seed),
        SweepKind::Contamination => sweep_contamination(&cfg, &grid, a.dim, mu),
        SweepKind::Adaptive => compare_adaptive(&cfg, &grid, a.center_scale, a.dim, a.epsilon),
    }?;

    let mut w = output_writer(a.output.as_deref())?;
    let json = a
        .output
        .as_deref()
        .and_then(|p| p.extension())
        .is_some_and(|e| e.eq_ignore_ascii_case("json"));
    if json {
        result.write_json(&mut w)?;
    } else {
        result.write_csv(&mut w)?;
    }
    w.flush()?;

    let failed = sweep_checks(a.kind, &result);
    for f in &failed {
        eprintln!("fado: check failed: {f}");
    }
    Ok(failed.is_empty())
}

fn cmd_scene(a: SceneArgs) -> Result<()> {
    let (frames, truth): (FrameSequence, Option<Vec<usize>>) = if let Some(p) = &a.frames {
        (read_packed(p)?, None)
    } else if !a.pgm.is_empty() {
        (load_pgm_sequence(&a.pgm)?, None)
    } else if a.synthetic {
        if a.width == 0 || a.height == 0 || a.clips == 0 || a.frames_per_clip == 0 {
            return Err(usage("synthetic clip sizes must be positive"));
        }
        let (seq, cuts) = gen_synthetic_clips(
            a.width,
            a.height,
            a.clips,
            a.frames_per_clip,
            a.noise,
            a.seed,
        );
        (seq, Some(cuts))
    } else {
        return Err(usage("one of --frames, --pgm or --synthetic is required"));
    };
    if frames.is_empty() {
        bail!("frame sequence is empty");
    }
    let mut det = match &a.checkpoint_in {
        Some(p) => load_checkpoint(p)?,
        None => {
            scene_detector(frames.dim(), a.epsilon, a.gamma).map_err(|e| usage(e.to_string()))?
        }
    };
    let first = det.steps() as usize;

    // Split at snapshot points so the memory can be written between chunks.
    let mut cuts: Vec<usize> = a
        .snapshot_at
        .iter()
        .copied()
        .filter(|&i| i > 0 && i < frames.len())
        .collect();
    cuts.sort_unstable();
    cuts.dedup();
    cuts.push(frames.len());
    let mut records = Vec::with_capacity(frames.len());
    let mut start = 0;
    for &end in &cuts {
        let chunk = FrameSequence::new(
            frames.width,
            frames.height,
            frames.frames[start..end].to_vec(),
            frames.source.clone(),
        )?;
        let tl = run_scene_detection_from(&mut det, &chunk, first + start)?;
        records.extend(tl.records);
        if let Some(dir) = &a.snapshots {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("memory_{:06}.pgm", first + end));
            write_memory_snapshot(&det, frames.width, frames.height, &path)?;
        }
        start = end;
    }
    let total_alarms = records.iter().filter(|r| r.alarm).count() as u64;
    let timeline = fado::scene::DetectionTimeline {
        records,
        total_alarms,
    };
    eprintln!(
        "fado: {} frames, {} alarms, alarm rate {:.4}",
        timeline.len(),
        timeline.total_alarms,
        timeline.alarm_rate()
    );
    if let Some(p) = &a.timeline {
        timeline_to_csv(&timeline, truth.as_deref(), p)?;
    }
    if let Some(p) = &a.checkpoint_out {
        save_checkpoint(&det, p)?;
    }
    Ok(())
}

fn cmd_bounds(a: BoundsArgs) -> Result<()> {
    let bad = |e: fado::bounds::DomainError| usage(e.to_string());
    let zeta = riemann_zeta(1.0 + 2.0 * a.tau).map_err(bad)?;
    let energy = gain_energy_bound(a.tau, a.gamma0).map_err(bad)?;
    let ac = AcBound::new(energy, a.wnorm).map_err(bad)?;
    let mistake_bound =
        mistake_bound_agnostic(a.wnorm, a.mu, a.tau, a.gamma0, a.sigma).map_err(bad)?;
    let mut out = json!({
        "wnorm": a.wnorm,
        "mu": a.mu,
        "tau": a.tau,
        "gamma0": a.gamma0,
        "sigma": a.sigma,
        "zeta": zeta,
        "energy": energy,
        "y_max": ac.y_max,
        "x_max": ac.x_max,
        "mistake_bound": mistake_bound,
    });
    if let Some(m) = a.mt {
        out["mt"] = json!(m);
        out["power_delta"] = json!(power_delta_bound(a.wnorm, m, a.tau, a.gamma0).map_err(bad)?);
    }
    if let Some(eps) = a.epsilon {
        out["epsilon"] = json!(eps);
        out["adaptive_mistake_bound"] =
            json!(mistake_bound_adaptive(a.wnorm, eps, a.tau, a.gamma0).map_err(bad)?);
    }
    let stdout = io::stdout();
    let mut w = stdout.lock();
    serde_json::to_writer_pretty(&mut w, &out)?;
    writeln!(w)?;
    Ok(())
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let w_bar = Vector::filled(a.dim, a.center_scale).map_err(|e| usage(e.to_string()))?;
    let truth = GroundTruth::new(w_bar, a.epsilon, a.mu).map_err(|e| usage(e.to_string()))?;
    let mut spec = match a.design {
        DesignArg::Ball => StreamSpec::ball(truth, a.count, a.seed),
        DesignArg::Circle => StreamSpec::circle(truth, a.count, a.seed),
        DesignArg::Mixture => StreamSpec::mixture(truth, a.count, a.fraction, a.seed),
    };
    if let Some(r) = a.outlier_radius_max {
        spec.outlier_radius_max = r;
    }
    spec.outlier_delta_min = a.outlier_delta_min;
    if !matches!(a.design, DesignArg::Mixture) && a.fraction != 0.0 {
        return Err(usage("--fraction requires --design mixture"));
    }
    let s = generate(&spec).map_err(|e| usage(e.to_string()))?;
    write_stream(&a.output, a.dim, &s.samples)
        .with_context(|| format!("writing {}", a.output.display()))?;
    if let Some(p) = &a.labels {
        let mut w = output_writer(Some(p))?;
        for &o in &s.outlier {
            writeln!(w, "{}", o as u8)?;
        }
        w.flush()?;
    }
    eprintln!(
        "fado: wrote {} vectors ({} outliers)",
        s.samples.len(),
        s.p_t
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a).map(|_| true),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Scene(a) => cmd_scene(a).map(|_| true),
        Command::Bounds(a) => cmd_bounds(a).map(|_| true),
        Command::Gen(a) => cmd_gen(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) if e.is::<UsageError>() => {
            eprintln!("fado: usage error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("fado: error: {e:#}");
            ExitCode::from(1)
        }
    }
}
