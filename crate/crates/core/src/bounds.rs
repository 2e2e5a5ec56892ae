//! Explicit-constant mistake and power bounds.
//!
//! The asymptotic statements are instantiated by chaining three ingredients:
//!
//! 1. A self-bounding inequality: if `x ≥ 0`, `y ≥ −a/2` and `x + y ≤ c·√(a + 2y)`, then
//!    `|y| ≤ y_max(a, c)` and `x ≤ x_max(a, c)` (see [`AcBound`]).
//! 2. The gain energy `Σ d_s γ_s² ≤ γ₀² · ζ(1 + 2τ)`, which bounds `a`.
//! 3. The integral lower bound on `Σ_{k≤m} γ₀ k^-(1/2+τ)`
//!    ([`gamma_sum_lower_bound`]), which turns a bound on `x` into a bound
//!    on the mistake count.
//!
//! All bounds are conservative: they are sound upper bounds, not estimates.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{Detector, DiagnosticsTrace, GainSchedule};
use crate::vector::{distance, Vector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DomainError {
    #[error("ζ(s) diverges for s = {0} ≤ 1")]
    ZetaPole(f64),
    #[error("{name} must be positive and finite, got {value}")]
    NotPositive { name: &'static str, value: f64 },
    #[error("{name} must be non-negative and finite, got {value}")]
    Negative { name: &'static str, value: f64 },
    #[error("τ must lie in (0, 1/2), got {0}")]
    Tau(f64),
    #[error("mistake count must be at least 1")]
    ZeroMistakes,
    #[error("margin μ = {mu} must be smaller than ε = {epsilon}")]
    EmptyBall { mu: f64, epsilon: f64 },
    #[error("dimension mismatch: expected {expected}, got {got} at sample {index}")]
    Dimension {
        expected: usize,
        got: usize,
        index: usize,
    },
}

fn positive(name: &'static str, value: f64) -> Result<f64, DomainError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(DomainError::NotPositive { name, value })
    }
}

fn non_negative(name: &'static str, value: f64) -> Result<f64, DomainError> {
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(DomainError::Negative { name, value })
    }
}

fn check_tau(tau: f64) -> Result<f64, DomainError> {
    if tau > 0.0 && tau < 0.5 {
        Ok(tau)
    } else {
        Err(DomainError::Tau(tau))
    }
}

/// Riemann zeta function for real `s > 1`, absolute error below 1e-10.
///
/// Sums the first `N − 1` terms directly and replaces the tail
/// `Σ_{k≥N} k^-s` by its Euler–Maclaurin expansion (integral term, half
/// endpoint, three Bernoulli corrections). `N` is picked per call so that the
/// first omitted correction is below 1e-14.
pub fn riemann_zeta(s: f64) -> Result<f64, DomainError> {
    if s.is_nan() || s <= 1.0 {
        return Err(DomainError::ZetaPole(s));
    }
    if s.is_infinite() {
        return Ok(1.0);
    }
    // (s)_k rising factorial
    let rising = |k: u32| (0..k).fold(1.0, |acc, i| acc * (s + i as f64));
    let omitted = |n: f64| rising(7) / 1_209_600.0 * n.powf(-s - 7.0);
    let mut n = 10.0_f64;
    while omitted(n) > 1e-14 {
        n *= 2.0;
    }
    let n_terms = n as u64;

    let head: f64 = (1..n_terms).rev().map(|k| (k as f64).powf(-s)).sum();
    let tail = n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s / 12.0 * n.powf(-s - 1.0)
        - rising(3) / 720.0 * n.powf(-s - 3.0)
        + rising(5) / 30_240.0 * n.powf(-s - 5.0);
    Ok(head + tail)
}

/// The two closed-form consequences of the self-bounding inequality for given `(a, c)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcBound {
    pub a: f64,
    pub c: f64,
    /// `max(a/2, c√(a + c²) + c²)`
    pub y_max: f64,
    /// `max(c√(2a) + a/2, c√(a + 2y*) + y*)` with `y* = c√(a + c²) + c²`
    pub x_max: f64,
}

impl AcBound {
    pub fn new(a: f64, c: f64) -> Result<Self, DomainError> {
        positive("a", a)?;
        positive("c", c)?;
        let y_star = ac_fixed_point(a, c);
        Ok(Self {
            a,
            c,
            y_max: (a / 2.0).max(y_star),
            x_max: (c * (2.0 * a).sqrt() + a / 2.0).max(c * (a + 2.0 * y_star).sqrt() + y_star),
        })
    }
}

/// Positive root of `y = c·√(a + 2y)`, i.e. `c√(a + c²) + c²`.
pub fn ac_fixed_point(a: f64, c: f64) -> f64 {
    c * (a + c * c).sqrt() + c * c
}

pub fn ac_y_bound(a: f64, c: f64) -> Result<f64, DomainError> {
    Ok(AcBound::new(a, c)?.y_max)
}

pub fn ac_x_bound(a: f64, c: f64) -> Result<f64, DomainError> {
    Ok(AcBound::new(a, c)?.x_max)
}

/// `γ₀² · ζ(1 + 2τ)`, the largest possible `Σ d_s γ_s²` under power decay.
pub fn gain_energy_bound(tau: f64, gamma0: f64) -> Result<f64, DomainError> {
    check_tau(tau)?;
    positive("gamma0", gamma0)?;
    Ok(gamma0 * gamma0 * riemann_zeta(1.0 + 2.0 * tau)?)
}

/// `γ₀ · ((m+1)^(1/2−τ) − 1)/(1/2 − τ)`, a lower bound on
/// `Σ_{k=1}^{m} γ₀ k^-(1/2+τ)` that is never more than `γ₀` below it.
pub fn gamma_sum_lower_bound(m: u64, tau: f64, gamma0: f64) -> Result<f64, DomainError> {
    if m == 0 {
        return Err(DomainError::ZeroMistakes);
    }
    check_tau(tau)?;
    positive("gamma0", gamma0)?;
    Ok(integral_lower(m, 0.5 - tau, gamma0))
}

fn integral_lower(m: u64, q: f64, gamma0: f64) -> f64 {
    gamma0 * (q * (m as f64 + 1.0).ln()).exp_m1() / q
}

/// Largest `m` in `[start, u64::MAX]` with `holds(m)`, for a predicate that is
/// true on a prefix of that range and `holds(start)`.
fn largest_satisfying(start: u64, holds: impl Fn(u64) -> bool) -> u64 {
    debug_assert!(holds(start));
    let mut lo = start;
    let mut hi = loop {
        let probe = lo.saturating_mul(2).saturating_add(1);
        if !holds(probe) {
            break probe;
        }
        if probe == u64::MAX {
            return u64::MAX;
        }
        lo = probe;
    };
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if holds(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

/// Mistake bound for a fixed-radius power-decay run on a stream that is
/// realizable with margin `mu` around a centre of norm `norm_w_bar`.
///
/// Returns the largest `m` with `μ · gamma_sum_lower_bound(m) ≤ x_max(γ₀²ζ(1+2τ), ‖w̄‖)`.
pub fn mistake_bound_realizable(
    norm_w_bar: f64,
    mu: f64,
    tau: f64,
    gamma0: f64,
) -> Result<u64, DomainError> {
    mistake_bound_agnostic(norm_w_bar, mu, tau, gamma0, 0.0)
}

/// As [`mistake_bound_realizable`], with the margin mass reduced by the
/// contamination term `√(γ₀² ζ(1+2τ) σ_T)` (Cauchy–Schwarz on `Σ d_s γ_s δ_s`).
pub fn mistake_bound_agnostic(
    norm_w_bar: f64,
    mu: f64,
    tau: f64,
    gamma0: f64,
    sigma_t: f64,
) -> Result<u64, DomainError> {
    positive("norm_w_bar", norm_w_bar)?;
    positive("mu", mu)?;
    non_negative("sigma_t", sigma_t)?;
    let energy = gain_energy_bound(tau, gamma0)?;
    let budget = ac_x_bound(energy, norm_w_bar)? + (energy * sigma_t).sqrt();
    let q = 0.5 - tau;
    Ok(largest_satisfying(0, |m| {
        m == 0 || mu * integral_lower(m, q, gamma0) <= budget
    }))
}

/// `σ_T / ‖w̄‖⁸`, reported against the (constant-free) admissibility condition
/// `σ_T = O(‖w̄‖⁸)` of the agnostic bound. Not enforced.
pub fn sigma_admissibility_ratio(sigma_t: f64, norm_w_bar: f64) -> f64 {
    sigma_t / norm_w_bar.powi(8)
}

/// Power bound for a single split constant `c`:
/// `x_max(γ₀²ζ(1+2τ) + c², ‖w̄‖) / c`.
pub fn power_delta_at(norm_w_bar: f64, c: f64, tau: f64, gamma0: f64) -> Result<f64, DomainError> {
    positive("norm_w_bar", norm_w_bar)?;
    positive("c", c)?;
    let energy = gain_energy_bound(tau, gamma0)?;
    Ok(ac_x_bound(energy + c * c, norm_w_bar)? / c)
}

/// Split constant minimising [`power_delta_at`] (golden-section search on `ln c`).
fn power_delta_minimiser(norm_w_bar: f64, energy: f64) -> f64 {
    let f = |ln_c: f64| {
        let c = ln_c.exp();
        AcBound::new(energy + c * c, norm_w_bar)
            .map(|b| b.x_max / c)
            .unwrap_or(f64::INFINITY)
    };
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    let (mut lo, mut hi) = (-25.0_f64, 25.0_f64);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..120 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Distance `δ*` beyond `ε` at which a transaction is guaranteed to be
/// flagged after `m_t` mistakes.
///
/// The split constant is `c = m_T^((1−2τ)/4)`, capped at the minimiser of
/// [`power_delta_at`]; the cap keeps `δ*` nonincreasing in `m_T` once the
/// square term `c²` would start to dominate the energy budget.
pub fn power_delta_bound(
    norm_w_bar: f64,
    m_t: u64,
    tau: f64,
    gamma0: f64,
) -> Result<f64, DomainError> {
    if m_t == 0 {
        return Err(DomainError::ZeroMistakes);
    }
    positive("norm_w_bar", norm_w_bar)?;
    let energy = gain_energy_bound(tau, gamma0)?;
    let c_split = (m_t as f64).powf((1.0 - 2.0 * tau) / 4.0);
    let c = c_split.min(power_delta_minimiser(norm_w_bar, energy));
    power_delta_at(norm_w_bar, c, tau, gamma0)
}

/// Diagnostic mistake bound for the adaptive-radius detector on a stream
/// realizable with radius `epsilon` around a centre of norm `norm_w_bar`.
///
/// Uses `m − ε Σ_{k≤m} γ₀ k^-(1/2+τ) ≤ x_max(γ₀²ζ(1+2τ), ‖w̄‖)` with the sum
/// replaced by its integral upper bound. This is loose: the radius term is
/// charged in full for every mistake.
pub fn mistake_bound_adaptive(
    norm_w_bar: f64,
    epsilon: f64,
    tau: f64,
    gamma0: f64,
) -> Result<u64, DomainError> {
    positive("norm_w_bar", norm_w_bar)?;
    positive("epsilon", epsilon)?;
    let energy = gain_energy_bound(tau, gamma0)?;
    let budget = ac_x_bound(energy, norm_w_bar)?;
    let q = 0.5 - tau;
    let p = 0.5 + tau;
    let sum_upper = |m: u64| gamma0 * (1.0 + (q * (m as f64).ln()).exp_m1() / q);
    let excess = |m: u64| m as f64 - epsilon * sum_upper(m);
    if excess(1) > budget {
        return Ok(0);
    }
    // The excess is convex in m and decreasing up to (εγ₀)^(1/p); from there on
    // it is increasing, and on [1, start] it never exceeds excess(1).
    let turn = (epsilon * gamma0).powf(1.0 / p);
    let start = if turn >= u64::MAX as f64 {
        return Ok(u64::MAX);
    } else {
        (turn.floor() as u64).max(1)
    };
    Ok(largest_satisfying(start, |m| excess(m) <= budget))
}

/// `(w̄, ε, μ)` describing a stream that is normal inside the `(ε − μ)`-ball.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub w_bar: Vector,
    pub epsilon: f64,
    pub mu: f64,
    /// Bound on `max_t ‖y_t‖₂`, when known.
    pub radius_bound: Option<f64>,
}

impl GroundTruth {
    pub fn new(w_bar: Vector, epsilon: f64, mu: f64) -> Result<Self, DomainError> {
        positive("epsilon", epsilon)?;
        non_negative("mu", mu)?;
        if mu >= epsilon {
            return Err(DomainError::EmptyBall { mu, epsilon });
        }
        Ok(Self {
            w_bar,
            epsilon,
            mu,
            radius_bound: None,
        })
    }

    pub fn with_radius_bound(mut self, r: f64) -> Result<Self, DomainError> {
        self.radius_bound = Some(positive("radius_bound", r)?);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.w_bar.dim()
    }

    /// Radius `ε − μ` of the ball holding normal transactions.
    pub fn normal_radius(&self) -> f64 {
        self.epsilon - self.mu
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationReport {
    /// `T`
    pub samples: u64,
    /// Transactions with `‖y − w̄‖ ≥ ε`.
    pub p_t: u64,
    /// `1 − p_T/T`, or 1 for an empty stream.
    pub r_t: f64,
    /// `Σ (‖y − w̄‖ − (ε − μ))₊²`
    pub sigma_t: f64,
}

pub fn sigma_size<Y: AsRef<[f64]>>(
    stream: &[Y],
    truth: &GroundTruth,
) -> Result<ContaminationReport, DomainError> {
    let center = truth.w_bar.as_slice();
    let inner = truth.normal_radius();
    let mut p_t = 0u64;
    let mut sigma_t = 0.0;
    for (index, y) in stream.iter().enumerate() {
        let y = y.as_ref();
        if y.len() != center.len() {
            return Err(DomainError::Dimension {
                expected: center.len(),
                got: y.len(),
                index,
            });
        }
        let d = distance(y, center);
        if d >= truth.epsilon {
            p_t += 1;
        }
        let excess = d - inner;
        if excess > 0.0 {
            sigma_t += excess * excess;
        }
    }
    let samples = stream.len() as u64;
    let r_t = if samples == 0 {
        1.0
    } else {
        1.0 - p_t as f64 / samples as f64
    };
    Ok(ContaminationReport {
        samples,
        p_t,
        r_t,
        sigma_t,
    })
}

/// Slack granted to the inequality checks for accumulated rounding.
const AUDIT_REL_SLACK: f64 = 1e-12;
/// Tolerance of the telescoping identity, relative to `max(1, ‖w‖²)`.
pub const TELESCOPING_TOLERANCE: f64 = 1e-9;

/// Outcome of checking a [`DiagnosticsTrace`] against the proof inequalities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    /// `Σdγvᵀw + ½Σdγ²`; must be ≥ 0.
    pub cross_term_margin: f64,
    pub cross_term_ok: bool,
    /// `γ₀²ζ(1+2τ) − Σdγ²`; `None` when no energy bound applies (constant gain).
    pub energy_margin: Option<f64>,
    pub energy_ok: bool,
    /// `|‖w‖² − (Σdγ² + 2Σdγvᵀw)| / max(1, ‖w‖²)`
    pub telescoping_residual: f64,
    pub telescoping_ok: bool,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.cross_term_ok && self.energy_ok && self.telescoping_ok
    }
}

fn audit(trace: &DiagnosticsTrace, energy: Option<f64>) -> AuditReport {
    let scale = trace.sum_d_gamma_sq.max(1.0);
    let cross_term_margin = trace.sum_d_gamma_vw + 0.5 * trace.sum_d_gamma_sq;
    let energy_margin = energy.map(|e| e - trace.sum_d_gamma_sq);
    let telescoping_residual = trace.telescoping_residual().abs() / trace.w_norm_sq.max(1.0);
    AuditReport {
        cross_term_margin,
        cross_term_ok: cross_term_margin >= -AUDIT_REL_SLACK * scale,
        energy_margin,
        energy_ok: match (energy, energy_margin) {
            (Some(e), Some(m)) => m >= -AUDIT_REL_SLACK * e,
            _ => true,
        },
        telescoping_residual,
        telescoping_ok: telescoping_residual <= TELESCOPING_TOLERANCE,
    }
}

/// Check a power-decay trace: the cross-term lower bound, the ζ energy bound
/// and the telescoping identity. Never fails; inspect the report.
pub fn audit_trace(trace: &DiagnosticsTrace, tau: f64, gamma0: f64) -> AuditReport {
    audit(trace, gain_energy_bound(tau, gamma0).ok())
}

/// [`audit_trace`] with parameters taken from the detector's schedule; the
/// energy check is skipped for a constant gain.
pub fn audit_detector(detector: &Detector) -> AuditReport {
    let energy = match detector.schedule() {
        GainSchedule::PowerDecay { gamma0, tau } => gain_energy_bound(tau, gamma0).ok(),
        GainSchedule::Constant { .. } => None,
    };
    audit(detector.trace(), energy)
}
