//! The FADO state machines.
//!
//! A [`Detector`] keeps a centre `w` and decides for every incoming
//! transaction `y` whether `‖y − w‖₂` reaches the current radius. An alarm
//! doubles as a learning step: the centre moves by `γ · v` with
//! `v = (y − w)/‖y − w‖₂`, so a single transaction can shift the centre by
//! at most `γ` regardless of how far away it lies.
//!
//! Two radius modes are supported:
//!
//! - [`DetectorMode::FixedRadius`]: the radius `ε` is given. The k-th alarm
//!   uses the gain `γ₀ · k^-(1/2+τ)` (post-increment count), or the constant
//!   gain for tracking applications.
//! - [`DetectorMode::AdaptiveRadius`]: the radius is `1/γ` where
//!   `γ = γ₀ · (m+1)^-(1/2+τ)` is evaluated from the mistake count `m`
//!   *before* the decision, so the radius grows slowly with every mistake.

mod checkpoint;

pub use checkpoint::{CheckpointError, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vector::{check_finite, norm_sq, VectorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("gain γ₀ must be positive and finite, got {0}")]
    InvalidGamma0(f64),
    #[error("decay exponent τ must lie in (0, 1/2), got {0}")]
    InvalidTau(f64),
    #[error("constant gain must be positive and finite, got {0}")]
    InvalidConstantGain(f64),
    #[error("radius ε must be non-negative and finite, got {0}")]
    InvalidEpsilon(f64),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GainError {
    #[error("power-decay gain is undefined for a mistake count of zero")]
    ZeroMistakes,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("transaction has dimension {got}, detector expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("transaction rejected: {0}")]
    NonFinite(#[from] VectorError),
}

#[derive(Debug, Error, Clone, PartialEq)]
#[error("transaction {index}: {source}")]
pub struct StreamError {
    pub index: usize,
    #[source]
    pub source: StepError,
}

/// Maps a mistake count to a step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum GainSchedule {
    /// `γ = γ₀ · k^-(1/2+τ)`, square-summable but not summable.
    PowerDecay { gamma0: f64, tau: f64 },
    /// `γ` independent of the mistake count (tracking).
    Constant { gamma: f64 },
}

impl GainSchedule {
    pub fn power_decay(gamma0: f64, tau: f64) -> Result<Self, ConfigError> {
        let s = Self::PowerDecay { gamma0, tau };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(gamma: f64) -> Result<Self, ConfigError> {
        let s = Self::Constant { gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            Self::PowerDecay { gamma0, tau } => {
                if !(gamma0.is_finite() && gamma0 > 0.0) {
                    return Err(ConfigError::InvalidGamma0(gamma0));
                }
                if !(tau > 0.0 && tau < 0.5) {
                    return Err(ConfigError::InvalidTau(tau));
                }
                Ok(())
            }
            Self::Constant { gamma } => {
                if gamma.is_finite() && gamma > 0.0 {
                    Ok(())
                } else {
                    Err(ConfigError::InvalidConstantGain(gamma))
                }
            }
        }
    }

    /// Gain used by the `mistakes`-th alarm of a fixed-radius detector
    /// (`γ₀ · m^-(1/2+τ)`, so the first alarm uses `γ₀`).
    pub fn gain(&self, mistakes: u64) -> Result<f64, GainError> {
        match *self {
            Self::PowerDecay { gamma0, tau } => {
                if mistakes == 0 {
                    return Err(GainError::ZeroMistakes);
                }
                Ok(gamma0 * (mistakes as f64).powf(-(0.5 + tau)))
            }
            Self::Constant { gamma } => Ok(gamma),
        }
    }

    /// Gain of the adaptive-radius detector after `mistakes` alarms:
    /// `γ₀ · (m+1)^-(1/2+τ)`, well defined at `m = 0`.
    pub fn adaptive_gain(&self, mistakes: u64) -> f64 {
        match *self {
            Self::PowerDecay { gamma0, tau } => gamma0 * (mistakes as f64 + 1.0).powf(-(0.5 + tau)),
            Self::Constant { gamma } => gamma,
        }
    }
}

/// Free-function form of [`GainSchedule::gain`].
pub fn gain_value(schedule: &GainSchedule, mistakes: u64) -> Result<f64, GainError> {
    schedule.gain(mistakes)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DetectorMode {
    /// Alarm iff `‖y − w‖₂ ≥ ε`. `ε = 0` flags every transaction.
    FixedRadius { epsilon: f64 },
    /// Alarm iff `‖y − w‖₂ ≥ 1/γ` with `γ` taken before the decision.
    AdaptiveRadius,
}

impl DetectorMode {
    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            Self::FixedRadius { epsilon } if !(epsilon.is_finite() && epsilon >= 0.0) => {
                Err(ConfigError::InvalidEpsilon(epsilon))
            }
            _ => Ok(()),
        }
    }
}

/// Result of judging one transaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    /// `d_t`; true iff `distance >= threshold`.
    pub alarm: bool,
    /// `‖y_t − w_{t−1}‖₂`.
    pub distance: f64,
    /// Radius the distance was compared against.
    pub threshold: f64,
    /// Step length applied to the centre, 0 without an alarm.
    pub gain_applied: f64,
}

/// Running sums from the mistake-bound analysis.
///
/// With binary `d_s`, `d_s² = d_s`, so `sum_d_gamma_sq` serves for both
/// `Σ d_s γ_s²` and `Σ d_s² γ_s²`. Every step maintains
/// `w_norm_sq = sum_d_gamma_sq + 2·sum_d_gamma_vw` up to rounding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsTrace {
    /// `Σ d_s γ_s²`
    pub sum_d_gamma_sq: f64,
    /// `Σ d_s γ_s`
    pub sum_d_gamma: f64,
    /// `Σ d_s γ_s v_sᵀ w_{s−1}`
    pub sum_d_gamma_vw: f64,
    /// `‖w_t‖₂²`, recomputed from the centre after every update.
    pub w_norm_sq: f64,
}

impl DiagnosticsTrace {
    /// `w_norm_sq − (Σ d γ² + 2 Σ d γ vᵀw)`.
    pub fn telescoping_residual(&self) -> f64 {
        self.w_norm_sq - (self.sum_d_gamma_sq + 2.0 * self.sum_d_gamma_vw)
    }
}

/// One FADO detector (centre, mistake count, step count, configuration and trace).
///
/// Single-writer: `step` takes `&mut self`. Independent detectors are plain
/// values and can be moved across threads freely.
#[derive(Debug, Clone, PartialEq)]
pub struct Detector {
    center: Vec<f64>,
    mistakes: u64,
    steps: u64,
    mode: DetectorMode,
    schedule: GainSchedule,
    trace: DiagnosticsTrace,
}

impl Detector {
    /// A detector centred at the origin with no mistakes.
    pub fn new(
        dim: usize,
        mode: DetectorMode,
        schedule: GainSchedule,
    ) -> Result<Self, ConfigError> {
        if dim == 0 {
            return Err(ConfigError::ZeroDimension);
        }
        mode.validate()?;
        schedule.validate()?;
        Ok(Self {
            center: vec![0.0; dim],
            mistakes: 0,
            steps: 0,
            mode,
            schedule,
            trace: DiagnosticsTrace::default(),
        })
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// `m_t`, the number of alarms so far.
    pub fn mistakes(&self) -> u64 {
        self.mistakes
    }

    /// `t`, the number of transactions judged so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn mode(&self) -> DetectorMode {
        self.mode
    }

    pub fn schedule(&self) -> GainSchedule {
        self.schedule
    }

    pub fn trace(&self) -> &DiagnosticsTrace {
        &self.trace
    }

    /// Radius the next transaction will be compared against.
    pub fn current_radius(&self) -> f64 {
        match self.mode {
            DetectorMode::FixedRadius { epsilon } => epsilon,
            DetectorMode::AdaptiveRadius => 1.0 / self.schedule.adaptive_gain(self.mistakes),
        }
    }

    fn check_input(&self, y: &[f64]) -> Result<(), StepError> {
        if y.len() != self.center.len() {
            return Err(StepError::DimensionMismatch {
                expected: self.center.len(),
                got: y.len(),
            });
        }
        check_finite(y)?;
        Ok(())
    }

    /// Whether `y` would raise an alarm, without touching the state.
    pub fn would_alarm(&self, y: &[f64]) -> Result<bool, StepError> {
        self.check_input(y)?;
        Ok(crate::vector::distance(y, &self.center) >= self.current_radius())
    }

    /// Judge one transaction and, on an alarm, move the centre.
    pub fn step(&mut self, y: &[f64]) -> Result<StepOutcome, StepError> {
        self.check_input(y)?;

        let (dist_sq, diff_dot_w) =
            self.center
                .iter()
                .zip(y)
                .fold((0.0, 0.0), |(dd, dw), (&w, &yi)| {
                    let d = yi - w;
                    (dd + d * d, dw + d * w)
                });
        let distance = dist_sq.sqrt();

        let (threshold, pre_gain) = match self.mode {
            DetectorMode::FixedRadius { epsilon } => (epsilon, None),
            DetectorMode::AdaptiveRadius => {
                let g = self.schedule.adaptive_gain(self.mistakes);
                (1.0 / g, Some(g))
            }
        };

        self.steps += 1;
        if distance < threshold {
            return Ok(StepOutcome {
                alarm: false,
                distance,
                threshold,
                gain_applied: 0.0,
            });
        }

        self.mistakes += 1;
        let inv = 1.0 / distance;
        if !inv.is_finite() {
            // Only reachable with ε = 0: the direction is undefined, count the alarm only.
            return Ok(StepOutcome {
                alarm: true,
                distance,
                threshold,
                gain_applied: 0.0,
            });
        }

        let gain = match pre_gain {
            Some(g) => g,
            None => self
                .schedule
                .gain(self.mistakes)
                .expect("mistake count is positive after an alarm"),
        };
        let v_dot_w = diff_dot_w * inv;
        for (w, &yi) in self.center.iter_mut().zip(y) {
            *w += gain * ((yi - *w) * inv);
        }

        self.trace.sum_d_gamma_sq += gain * gain;
        self.trace.sum_d_gamma += gain;
        self.trace.sum_d_gamma_vw += gain * v_dot_w;
        self.trace.w_norm_sq = norm_sq(&self.center);

        Ok(StepOutcome {
            alarm: true,
            distance,
            threshold,
            gain_applied: gain,
        })
    }

    /// Apply [`step`](Self::step) to every transaction in order.
    pub fn run_stream<I, Y>(&mut self, stream: I) -> Result<Vec<StepOutcome>, StreamError>
    where
        I: IntoIterator<Item = Y>,
        Y: AsRef<[f64]>,
    {
        stream
            .into_iter()
            .enumerate()
            .map(|(index, y)| {
                self.step(y.as_ref())
                    .map_err(|source| StreamError { index, source })
            })
            .collect()
    }

    /// Serialize to the checkpoint format.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        checkpoint::encode(self)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self, CheckpointError> {
        checkpoint::decode(bytes)
    }
}
