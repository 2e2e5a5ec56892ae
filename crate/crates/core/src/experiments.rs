//! Parameter sweeps over synthetic streams.
//!
//! Every sweep expands into independent `(grid point, seed)` runs, executes
//! them in parallel and returns one [`SweepRecord`] per run in grid order.
//! Each run trains a detector on a generated stream, audits the diagnostics
//! trace after every step, compares the mistake count with the matching
//! bound, and measures power on held-out outliers.

use std::io::{Read, Write};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{
    audit_detector, mistake_bound_adaptive, mistake_bound_agnostic, mistake_bound_realizable,
    sigma_size, DomainError, GroundTruth,
};
use crate::detector::{ConfigError, Detector, DetectorMode, GainSchedule, StreamError};
use crate::streamgen::{gen_outliers, generate, Design, GenError, SplitMix64, StreamSpec};
use crate::vector::{distance, Vector};

/// Mixed into the stream seed to get the held-out outlier generator.
const HELDOUT_SALT: u64 = 0x6A09_E667_F3BC_C909;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("held-out outlier count must be at least 1")]
    NoHeldout,
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Worst values of the audit quantities over every step of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub steps_checked: u64,
    pub violations: u64,
    pub min_cross_term_margin: f64,
    /// `None` for a constant gain.
    pub min_energy_margin: Option<f64>,
    pub max_telescoping_residual: f64,
}

impl AuditSummary {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

/// Outcome of one training run plus held-out evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub m_t: u64,
    /// Outliers in the training stream.
    pub p_t: u64,
    pub sigma_t: f64,
    pub power: f64,
    pub final_w_error: f64,
    pub final_center: Vec<f64>,
    pub audit: AuditSummary,
}

/// Train a detector on a step-by-step audited stream.
pub fn train_audited<Y: AsRef<[f64]>>(
    detector: &mut Detector,
    stream: &[Y],
) -> Result<AuditSummary, StreamError> {
    let mut summary = AuditSummary {
        steps_checked: 0,
        violations: 0,
        min_cross_term_margin: f64::INFINITY,
        min_energy_margin: None,
        max_telescoping_residual: 0.0,
    };
    for (index, y) in stream.iter().enumerate() {
        detector
            .step(y.as_ref())
            .map_err(|source| StreamError { index, source })?;
        let r = audit_detector(detector);
        summary.steps_checked += 1;
        if !r.passed() {
            summary.violations += 1;
        }
        summary.min_cross_term_margin = summary.min_cross_term_margin.min(r.cross_term_margin);
        summary.min_energy_margin = match (summary.min_energy_margin, r.energy_margin) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        };
        summary.max_telescoping_residual =
            summary.max_telescoping_residual.max(r.telescoping_residual);
    }
    Ok(summary)
}

/// Fraction of `outliers` at distance `≥ current_radius` from the centre.
pub fn evaluate_power<Y: AsRef<[f64]>>(detector: &Detector, outliers: &[Y]) -> f64 {
    if outliers.is_empty() {
        return f64::NAN;
    }
    let r = detector.current_radius();
    let hit = outliers
        .iter()
        .filter(|y| distance(y.as_ref(), detector.center()) >= r)
        .count();
    hit as f64 / outliers.len() as f64
}

/// Train on the stream described by `spec`, freeze, and measure power on
/// `heldout` fresh outliers at least `power_delta` beyond `ε`.
pub fn run_detection_experiment(
    spec: &StreamSpec,
    mode: DetectorMode,
    schedule: GainSchedule,
    heldout: usize,
    power_delta: f64,
) -> Result<RunRecord, ExperimentError> {
    if heldout == 0 {
        return Err(ExperimentError::NoHeldout);
    }
    let stream = generate(spec)?;
    let mut detector = Detector::new(spec.dim(), mode, schedule)?;
    let audit = train_audited(&mut detector, &stream.samples)?;
    let sigma_t = sigma_size(&stream.samples, &spec.truth)?.sigma_t;
    let mut rng = SplitMix64::new(spec.seed ^ HELDOUT_SALT);
    let outliers = gen_outliers(
        &spec.truth,
        heldout,
        power_delta,
        spec.outlier_radius_max,
        &mut rng,
    )?;
    Ok(RunRecord {
        m_t: detector.mistakes(),
        p_t: stream.p_t,
        sigma_t,
        power: evaluate_power(&detector, &outliers),
        final_w_error: distance(detector.center(), spec.truth.w_bar.as_slice()),
        final_center: detector.center().to_vec(),
        audit,
    })
}

/// Settings shared by every sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub seeds: Vec<u64>,
    /// Stream length `T`.
    pub count: usize,
    pub tau: f64,
    pub gamma0: f64,
    pub heldout: usize,
    /// Held-out outliers lie at least this far beyond `ε`.
    pub power_delta: f64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            seeds: (1..=5).collect(),
            count: 10_000,
            tau: 0.25,
            gamma0: 1.0,
            heldout: 10_000,
            power_delta: 0.1,
        }
    }
}

/// One CSV row: a single `(grid point, seed, variant)` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub parameter: String,
    pub value: f64,
    pub variant: String,
    pub seed: u64,
    pub m_t: u64,
    pub p_t: u64,
    pub power: f64,
    pub final_w_error: f64,
    /// Mistake bound that applies to this run, if any.
    pub bound: Option<u64>,
    pub audit_pass: bool,
}

impl SweepRecord {
    pub fn within_bound(&self) -> bool {
        self.bound.is_none_or(|b| self.m_t <= b)
    }
}

pub const CSV_HEADER: [&str; 10] = [
    "parameter",
    "value",
    "variant",
    "seed",
    "m_t",
    "p_t",
    "power",
    "final_w_error",
    "bound",
    "audit_pass",
];

/// Concrete design behind one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointDesign {
    pub value: f64,
    pub dim: usize,
    pub w_bar_norm: f64,
    pub epsilon: f64,
    pub mu: f64,
    pub contamination_fraction: f64,
    pub gamma0: f64,
    /// Held-out outliers lie at least this far beyond `ε`.
    pub power_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepMetadata {
    pub sweep: String,
    pub config: SweepConfig,
    pub points: Vec<PointDesign>,
    pub crate_version: String,
    pub wall_time_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub parameter: String,
    pub records: Vec<SweepRecord>,
    pub metadata: SweepMetadata,
}

/// Medians across seeds at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointSummary {
    pub value: f64,
    pub m_t: f64,
    pub p_t: f64,
    pub power: f64,
    pub final_w_error: f64,
}

impl SweepResult {
    /// Per-point medians for `variant`, in grid order.
    pub fn medians(&self, variant: &str) -> Vec<PointSummary> {
        let mut values: Vec<f64> = Vec::new();
        for r in self.records.iter().filter(|r| r.variant == variant) {
            if !values.iter().any(|v| v.to_bits() == r.value.to_bits()) {
                values.push(r.value);
            }
        }
        values
            .into_iter()
            .map(|value| {
                let rows: Vec<&SweepRecord> = self
                    .records
                    .iter()
                    .filter(|r| r.variant == variant && r.value.to_bits() == value.to_bits())
                    .collect();
                let med = |f: &dyn Fn(&SweepRecord) -> f64| {
                    median(&rows.iter().map(|r| f(r)).collect::<Vec<_>>())
                };
                PointSummary {
                    value,
                    m_t: med(&|r| r.m_t as f64),
                    p_t: med(&|r| r.p_t as f64),
                    power: med(&|r| r.power),
                    final_w_error: med(&|r| r.final_w_error),
                }
            })
            .collect()
    }

    pub fn bound_violations(&self) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| !r.within_bound()).collect()
    }

    pub fn audit_failures(&self) -> Vec<&SweepRecord> {
        self.records.iter().filter(|r| !r.audit_pass).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        write_records_csv(w, &self.records)
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<(), ExperimentError> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    pub fn read_json<R: Read>(r: R) -> Result<Self, ExperimentError> {
        Ok(serde_json::from_reader(r)?)
    }
}

pub fn write_records_csv<W: Write>(w: W, records: &[SweepRecord]) -> Result<(), ExperimentError> {
    let mut out = csv::WriterBuilder::new().has_headers(false).from_writer(w);
    out.write_record(CSV_HEADER)?;
    for r in records {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<SweepRecord>, ExperimentError> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<Result<_, _>>()?)
}

#[derive(Debug, Clone, Copy)]
enum BoundKind {
    Realizable,
    Agnostic,
    Adaptive,
}

struct Job {
    value: f64,
    variant: &'static str,
    spec: StreamSpec,
    mode: DetectorMode,
    schedule: GainSchedule,
    bound: BoundKind,
    power_delta: f64,
}

struct Point {
    design: PointDesign,
    truth: GroundTruth,
    design_kind: Design,
    variants: Vec<(&'static str, bool)>,
    /// Held-out margin in units of `cfg.power_delta`.
    delta_scale: f64,
}

fn execute(
    sweep: &str,
    parameter: &str,
    cfg: &SweepConfig,
    mut points: Vec<Point>,
) -> Result<SweepResult, ExperimentError> {
    let started = Instant::now();
    let mut jobs = Vec::new();
    for p in &mut points {
        p.design.power_delta = cfg.power_delta * p.delta_scale;
        let schedule = GainSchedule::power_decay(p.design.gamma0, cfg.tau)?;
        for (variant, adaptive) in &p.variants {
            for &seed in &cfg.seeds {
                let mut spec = StreamSpec::ball(p.truth.clone(), cfg.count, seed);
                spec.design = p.design_kind;
                spec.contamination_fraction = p.design.contamination_fraction;
                let (mode, bound) = if *adaptive {
                    (DetectorMode::AdaptiveRadius, BoundKind::Adaptive)
                } else if p.design_kind == Design::Mixture {
                    (
                        DetectorMode::FixedRadius {
                            epsilon: p.truth.epsilon,
                        },
                        BoundKind::Agnostic,
                    )
                } else {
                    (
                        DetectorMode::FixedRadius {
                            epsilon: p.truth.epsilon,
                        },
                        BoundKind::Realizable,
                    )
                };
                jobs.push(Job {
                    value: p.design.value,
                    variant,
                    spec,
                    mode,
                    schedule,
                    bound,
                    power_delta: p.design.power_delta,
                });
            }
        }
    }

    let records = jobs
        .par_iter()
        .map(|job| -> Result<SweepRecord, ExperimentError> {
            let run = run_detection_experiment(
                &job.spec,
                job.mode,
                job.schedule,
                cfg.heldout,
                job.power_delta,
            )?;
            let truth = &job.spec.truth;
            let w_norm = truth.w_bar.norm();
            let gamma0 = match job.schedule {
                GainSchedule::PowerDecay { gamma0, .. } => gamma0,
                GainSchedule::Constant { gamma } => gamma,
            };
            let bound = if w_norm > 0.0 {
                Some(match job.bound {
                    BoundKind::Realizable => {
                        mistake_bound_realizable(w_norm, truth.mu, cfg.tau, gamma0)?
                    }
                    BoundKind::Agnostic => {
                        mistake_bound_agnostic(w_norm, truth.mu, cfg.tau, gamma0, run.sigma_t)?
                    }
                    BoundKind::Adaptive => {
                        mistake_bound_adaptive(w_norm, truth.epsilon, cfg.tau, gamma0)?
                    }
                })
            } else {
                None
            };
            Ok(SweepRecord {
                parameter: parameter.to_string(),
                value: job.value,
                variant: job.variant.to_string(),
                seed: job.spec.seed,
                m_t: run.m_t,
                p_t: run.p_t,
                power: run.power,
                final_w_error: run.final_w_error,
                bound,
                audit_pass: run.audit.passed(),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(SweepResult {
        parameter: parameter.to_string(),
        records,
        metadata: SweepMetadata {
            sweep: sweep.to_string(),
            config: cfg.clone(),
            points: points.into_iter().map(|p| p.design).collect(),
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            wall_time_secs: started.elapsed().as_secs_f64(),
        },
    })
}

fn filled_center(dim: usize, c: f64) -> Result<Vector, ExperimentError> {
    Ok(Vector::filled(dim, c).map_err(|_| ConfigError::ZeroDimension)?)
}

#[allow(clippy::too_many_arguments)]
fn point(
    value: f64,
    w_bar: Vector,
    epsilon: f64,
    mu: f64,
    gamma0: f64,
    fraction: f64,
    design_kind: Design,
    variants: Vec<(&'static str, bool)>,
) -> Result<Point, ExperimentError> {
    let truth = GroundTruth::new(w_bar, epsilon, mu)?;
    Ok(Point {
        design: PointDesign {
            value,
            dim: truth.dim(),
            w_bar_norm: truth.w_bar.norm(),
            epsilon,
            mu,
            contamination_fraction: fraction,
            gamma0,
            power_delta: 0.0,
        },
        truth,
        design_kind,
        variants,
        delta_scale: 1.0,
    })
}

const FIXED: (&str, bool) = ("fixed", false);
const ADAPTIVE: (&str, bool) = ("adaptive", true);

/// Margin sweep on a ball (or, with `design = Circle`, circle) stream around
/// `w̄ = c·1ₙ`.
pub fn sweep_margin(
    cfg: &SweepConfig,
    mus: &[f64],
    c: f64,
    dim: usize,
    epsilon: f64,
    design: Design,
) -> Result<SweepResult, ExperimentError> {
    let points = mus
        .iter()
        .map(|&mu| {
            point(
                mu,
                filled_center(dim, c)?,
                epsilon,
                mu,
                cfg.gamma0,
                0.0,
                design,
                vec![FIXED],
            )
        })
        .collect::<Result<_, _>>()?;
    let name = if design == Design::Circle {
        "circle"
    } else {
        "margin"
    };
    execute(name, "mu", cfg, points)
}

/// Centre-scale sweep, `w̄ = c·1ₙ` for each `c`.
pub fn sweep_center_scale(
    cfg: &SweepConfig,
    cs: &[f64],
    dim: usize,
    mu: f64,
    epsilon: f64,
) -> Result<SweepResult, ExperimentError> {
    let points = cs
        .iter()
        .map(|&c| {
            point(
                c,
                filled_center(dim, c)?,
                epsilon,
                mu,
                cfg.gamma0,
                0.0,
                Design::Ball,
                vec![FIXED],
            )
        })
        .collect::<Result<_, _>>()?;
    execute("center", "c", cfg, points)
}

pub fn sweep_dimension(
    cfg: &SweepConfig,
    dims: &[usize],
    c: f64,
    mu: f64,
    epsilon: f64,
) -> Result<SweepResult, ExperimentError> {
    let points = dims
        .iter()
        .map(|&n| {
            point(
                n as f64,
                filled_center(n, c)?,
                epsilon,
                mu,
                cfg.gamma0,
                0.0,
                Design::Ball,
                vec![FIXED],
            )
        })
        .collect::<Result<_, _>>()?;
    execute("dim", "n", cfg, points)
}

/// `count` log-spaced values from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

/// Radius sweep. Each grid point draws its own `μ ∈ logU[1e-3, 1e-1]`,
/// `c ∈ U[0.5, 4]` and `n ∈ {2, …, 20}` from `design_seed`; the design is
/// expressed in units of `ε` (margin `εμ`, centre `εc·1ₙ`, gain `εγ₀`), so
/// only the radius scale changes along the grid. The held-out margin is
/// `ε·power_delta` likewise.
pub fn sweep_epsilon(
    cfg: &SweepConfig,
    epsilons: &[f64],
    design_seed: u64,
) -> Result<SweepResult, ExperimentError> {
    let mut rng = SplitMix64::new(design_seed);
    let points = epsilons
        .iter()
        .map(|&eps| {
            let mu = 10f64.powf(-3.0 + 2.0 * rng.next_f64());
            let c = 0.5 + 3.5 * rng.next_f64();
            let n = 2 + (19.0 * rng.next_f64()) as usize;
            let mut p = point(
                eps,
                filled_center(n, eps * c)?,
                eps,
                eps * mu,
                eps * cfg.gamma0,
                0.0,
                Design::Ball,
                vec![FIXED],
            )?;
            p.delta_scale = eps;
            Ok::<_, ExperimentError>(p)
        })
        .collect::<Result<_, _>>()?;
    execute("epsilon", "epsilon", cfg, points)
}

/// Contamination sweep around `w̄ = (2, 2, 0, …, 0)` with `ε = 1`.
pub fn sweep_contamination(
    cfg: &SweepConfig,
    fractions: &[f64],
    dim: usize,
    mu: f64,
) -> Result<SweepResult, ExperimentError> {
    let mut center = vec![0.0; dim];
    for v in center.iter_mut().take(2) {
        *v = 2.0;
    }
    let w_bar = Vector::new(center).map_err(|_| ConfigError::ZeroDimension)?;
    let points = fractions
        .iter()
        .map(|&f| {
            point(
                f,
                w_bar.clone(),
                1.0,
                mu,
                cfg.gamma0,
                f,
                Design::Mixture,
                vec![FIXED],
            )
        })
        .collect::<Result<_, _>>()?;
    execute("contamination", "fraction", cfg, points)
}

/// Fixed-radius and adaptive-radius detectors on identical ball streams.
pub fn compare_adaptive(
    cfg: &SweepConfig,
    mus: &[f64],
    c: f64,
    dim: usize,
    epsilon: f64,
) -> Result<SweepResult, ExperimentError> {
    let points = mus
        .iter()
        .map(|&mu| {
            point(
                mu,
                filled_center(dim, c)?,
                epsilon,
                mu,
                cfg.gamma0,
                0.0,
                Design::Ball,
                vec![FIXED, ADAPTIVE],
            )
        })
        .collect::<Result<_, _>>()?;
    execute("adaptive", "mu", cfg, points)
}

/// Median of a slice; NaN for an empty slice.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// Ranks starting at 1, ties sharing their average rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut out = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = avg;
        }
        i = j + 1;
    }
    out
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

/// Spearman rank correlation (Pearson correlation of tie-averaged ranks).
/// NaN when either input is constant or shorter than 2.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "spearman: length mismatch");
    if x.len() < 2 {
        return f64::NAN;
    }
    pearson(&ranks(x), &ranks(y))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn least_squares(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len(), "least_squares: length mismatch");
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (slope * a + intercept);
            e * e
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    LinearFit {
        slope,
        intercept,
        r_squared,
    }
}

/// Adjacent pairs that break the requested order (`increasing = true` asks
/// for a nondecreasing sequence).
pub fn adjacent_inversions(xs: &[f64], increasing: bool) -> usize {
    xs.windows(2)
        .filter(|w| if increasing { w[1] < w[0] } else { w[1] > w[0] })
        .count()
}

/// Slope of `log10(y)` against `log10(x)`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.log10()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.log10()).collect();
    least_squares(&lx, &ly).slope
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> SweepConfig {
        SweepConfig {
            seeds: vec![1, 2, 3],
            count: 2_000,
            heldout: 500,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn statistics_self_tests() {
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let up: Vec<f64> = x.iter().map(|v| v * v + 1.0).collect();
        let down: Vec<f64> = up.iter().map(|v| -v).collect();
        assert!((spearman(&x, &up) - 1.0).abs() < 1e-12);
        assert!((spearman(&x, &down) + 1.0).abs() < 1e-12);
        assert!(spearman(&x, &[1.0; 10]).is_nan());
        // Ties get average ranks.
        assert_eq!(ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);

        let fit = least_squares(&x, &x.iter().map(|v| 2.0 * v - 1.0).collect::<Vec<_>>());
        assert!((fit.slope - 2.0).abs() < 1e-12 && (fit.intercept + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());

        assert_eq!(adjacent_inversions(&[3.0, 2.0, 2.0, 1.0], false), 0);
        assert_eq!(adjacent_inversions(&[3.0, 2.0, 2.5, 1.0], false), 1);
        assert_eq!(adjacent_inversions(&[1.0, 2.0, 1.5], true), 1);

        let xs = [1.0, 10.0, 100.0];
        let ys = [1.0, 0.1, 0.01];
        assert!((log_log_slope(&xs, &ys) + 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(1e-2, 1e2, 20);
        assert_eq!(g.len(), 20);
        assert!((g[0] - 1e-2).abs() < 1e-15 && (g[19] - 1e2).abs() < 1e-10);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn experiment_requires_heldout() {
        let t = GroundTruth::new(Vector::new(vec![2.0, 2.0]).unwrap(), 1.0, 0.1).unwrap();
        let spec = StreamSpec::ball(t, 10, 1);
        let s = GainSchedule::power_decay(1.0, 0.25).unwrap();
        let m = DetectorMode::FixedRadius { epsilon: 1.0 };
        assert!(matches!(
            run_detection_experiment(&spec, m, s, 0, 0.0),
            Err(ExperimentError::NoHeldout)
        ));
    }

    #[test]
    fn margin_sweep_shape_and_reproducibility() {
        let cfg = small_cfg();
        let a = sweep_margin(&cfg, &[0.01, 0.1], 1.0, 2, 1.0, Design::Ball).unwrap();
        assert_eq!(a.records.len(), 6);
        assert!(a.bound_violations().is_empty());
        assert!(a.audit_failures().is_empty());
        assert_eq!(a.medians("fixed").len(), 2);
        let b = sweep_margin(&cfg, &[0.01, 0.1], 1.0, 2, 1.0, Design::Ball).unwrap();
        let (mut ca, mut cb) = (Vec::new(), Vec::new());
        a.write_csv(&mut ca).unwrap();
        b.write_csv(&mut cb).unwrap();
        assert_eq!(ca, cb);
    }

    #[test]
    fn csv_and_json_round_trip() {
        let r = compare_adaptive(&small_cfg(), &[0.1], 1.0, 2, 1.0).unwrap();
        assert_eq!(r.records.len(), 6);
        let mut csv_bytes = Vec::new();
        r.write_csv(&mut csv_bytes).unwrap();
        assert_eq!(read_records_csv(&csv_bytes[..]).unwrap(), r.records);
        let mut json = Vec::new();
        r.write_json(&mut json).unwrap();
        assert_eq!(SweepResult::read_json(&json[..]).unwrap(), r);
    }

    #[test]
    fn empty_sweep_writes_header_only() {
        let r = sweep_margin(&small_cfg(), &[], 1.0, 2, 1.0, Design::Ball).unwrap();
        let mut out = Vec::new();
        r.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "parameter,value,variant,seed,m_t,p_t,power,final_w_error,bound,audit_pass\n"
        );
        assert!(read_records_csv(
            &b"parameter,value,variant,seed,m_t,p_t,power,final_w_error,bound,audit_pass\n"[..]
        )
        .unwrap()
        .is_empty());
    }

    #[test]
    fn awkward_floats_survive_csv() {
        let rec = SweepRecord {
            parameter: "mu".into(),
            value: 0.1 + 0.2,
            variant: "fixed".into(),
            seed: u64::MAX,
            m_t: 3,
            p_t: 0,
            power: 1.0 / 3.0,
            final_w_error: 5e-324,
            bound: None,
            audit_pass: true,
        };
        let mut out = Vec::new();
        write_records_csv(&mut out, std::slice::from_ref(&rec)).unwrap();
        assert_eq!(read_records_csv(&out[..]).unwrap(), vec![rec]);
    }

    #[test]
    fn zero_contamination_point_matches_realizable_run() {
        let cfg = small_cfg();
        let c = sweep_contamination(&cfg, &[0.0], 2, 0.1).unwrap();
        let m = sweep_margin(&cfg, &[0.1], 2.0, 2, 1.0, Design::Ball).unwrap();
        let mc: Vec<u64> = c.records.iter().map(|r| r.m_t).collect();
        let mm: Vec<u64> = m.records.iter().map(|r| r.m_t).collect();
        assert_eq!(mc, mm);
        assert!(c.records.iter().all(|r| r.p_t == 0));
    }
}
