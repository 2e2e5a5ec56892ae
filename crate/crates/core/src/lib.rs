//! Mistake-driven online fault detection.
//!
//! The crate is organised around a single state machine, [`Detector`], which
//! judges a stream of transactions `y_t ∈ ℝⁿ` against a ball `(w_t, ε_t)` and
//! moves the centre by a unit-norm step each time it raises an alarm. Around
//! it sit:
//!
//! - [`bounds`]: explicit-constant mistake and power bounds, plus auditors
//!   that check the proof inequalities against a run's [`DiagnosticsTrace`].
//! - [`streamgen`]: seeded generators for realizable, near-boundary and
//!   contaminated streams with ground-truth bookkeeping.
//! - [`experiments`]: parameter sweeps, power evaluation and result emission.
//! - [`scene`]: frame-sequence scene-change detection with a constant gain.
//! - [`io`]: the binary and CSV vector-stream formats.

pub mod bounds;
pub mod detector;
pub mod experiments;
pub mod io;
pub mod scene;
pub mod streamgen;
mod vector;

pub use bounds::{ContaminationReport, GroundTruth};
pub use detector::{
    ConfigError, Detector, DetectorMode, DiagnosticsTrace, GainSchedule, StepError, StepOutcome,
    StreamError,
};
pub use vector::{Vector, VectorError};
