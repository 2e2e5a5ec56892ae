//! Seeded generators for synthetic transaction streams.
//!
//! Every generator draws from [`SplitMix64`] and turns uniforms into normals
//! with the Box–Muller transform evaluated through `libm`, so a given
//! `(spec, seed)` yields the same bits on every platform.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bounds::{DomainError, GroundTruth};
use crate::vector::{distance, Vector};

/// Mixed into the seed of the label generator of a contaminated stream, so
/// the sample generator sees the same sequence as a clean stream.
const LABEL_SALT: u64 = 0xD1B5_4A32_D192_ED03;

const TWO_POW_M53: f64 = 1.0 / (1u64 << 53) as f64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenError {
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error("invalid design: {0}")]
    Design(String),
}

/// The splitmix64 generator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * TWO_POW_M53
    }

    /// Two independent standard normals from one Box–Muller draw.
    pub fn normal_pair(&mut self) -> (f64, f64) {
        let u1 = self.next_f64().max(TWO_POW_M53);
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = 2.0 * std::f64::consts::PI * u2;
        (r * libm::cos(theta), r * libm::sin(theta))
    }
}

/// Uniform sample from the closed ball of `radius` around `center`.
///
/// Draws `⌈n/2⌉` Box–Muller pairs (the spare normal of an odd dimension is
/// dropped), normalises, and scales by `radius · U^(1/n)`. A draw that lands
/// outside the ball through rounding is discarded.
pub fn sample_ball_uniform(center: &[f64], radius: f64, rng: &mut SplitMix64) -> Vector {
    assert!(
        radius > 0.0 && radius.is_finite(),
        "radius must be positive"
    );
    let n = center.len();
    assert!(n > 0, "dimension must be at least 1");
    let mut dir = vec![0.0; n];
    loop {
        for chunk in dir.chunks_mut(2) {
            let (a, b) = rng.normal_pair();
            chunk[0] = a;
            if let Some(slot) = chunk.get_mut(1) {
                *slot = b;
            }
        }
        let len = libm::sqrt(dir.iter().map(|z| z * z).sum::<f64>());
        let u = rng.next_f64();
        if len == 0.0 {
            continue;
        }
        let scale = radius * libm::pow(u, 1.0 / n as f64) / len;
        let point: Vec<f64> = center
            .iter()
            .zip(&dir)
            .map(|(c, z)| c + scale * z)
            .collect();
        if distance(&point, center) <= radius {
            return Vector::from_vec_unchecked(point);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Design {
    /// Uniform in the `(ε − μ)`-ball.
    Ball,
    /// On the circle of radius `ε − μ` (2-D only).
    Circle,
    /// Ball samples with independently placed outliers.
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSpec {
    pub count: usize,
    pub truth: GroundTruth,
    pub contamination_fraction: f64,
    /// Outer radius of the outlier shell; must exceed `ε + outlier_delta_min`.
    pub outlier_radius_max: f64,
    /// Outliers keep at least this distance beyond `ε`.
    pub outlier_delta_min: f64,
    pub seed: u64,
    pub design: Design,
}

impl StreamSpec {
    /// A clean ball stream; outlier shell defaults to `[ε, 10ε]`.
    pub fn ball(truth: GroundTruth, count: usize, seed: u64) -> Self {
        let outlier_radius_max = 10.0 * truth.epsilon;
        Self {
            count,
            truth,
            contamination_fraction: 0.0,
            outlier_radius_max,
            outlier_delta_min: 0.0,
            seed,
            design: Design::Ball,
        }
    }

    pub fn circle(truth: GroundTruth, count: usize, seed: u64) -> Self {
        Self {
            design: Design::Circle,
            ..Self::ball(truth, count, seed)
        }
    }

    pub fn mixture(truth: GroundTruth, count: usize, fraction: f64, seed: u64) -> Self {
        Self {
            design: Design::Mixture,
            contamination_fraction: fraction,
            ..Self::ball(truth, count, seed)
        }
    }

    pub fn dim(&self) -> usize {
        self.truth.dim()
    }

    fn check_design(&self, expected: Design) -> Result<(), GenError> {
        if self.design != expected {
            return Err(GenError::Design(format!(
                "expected a {expected:?} spec, got {:?}",
                self.design
            )));
        }
        if self.truth.mu >= self.truth.epsilon {
            return Err(DomainError::EmptyBall {
                mu: self.truth.mu,
                epsilon: self.truth.epsilon,
            }
            .into());
        }
        Ok(())
    }
}

pub fn gen_realizable_stream(spec: &StreamSpec) -> Result<(Vec<Vector>, GroundTruth), GenError> {
    spec.check_design(Design::Ball)?;
    if spec.contamination_fraction != 0.0 {
        return Err(GenError::Design(
            "a realizable stream has no contamination".into(),
        ));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let center = spec.truth.w_bar.as_slice();
    let radius = spec.truth.normal_radius();
    let samples = (0..spec.count)
        .map(|_| sample_ball_uniform(center, radius, &mut rng))
        .collect();
    Ok((samples, spec.truth.clone()))
}

pub fn gen_circle_stream(spec: &StreamSpec) -> Result<(Vec<Vector>, GroundTruth), GenError> {
    spec.check_design(Design::Circle)?;
    if spec.dim() != 2 {
        return Err(GenError::Design(format!(
            "circle streams are 2-D, got dimension {}",
            spec.dim()
        )));
    }
    let mut rng = SplitMix64::new(spec.seed);
    let c = spec.truth.w_bar.as_slice();
    let r = spec.truth.normal_radius();
    let samples = (0..spec.count)
        .map(|_| {
            let theta = 2.0 * std::f64::consts::PI * rng.next_f64();
            Vector::from_vec_unchecked(vec![
                c[0] + r * libm::cos(theta),
                c[1] + r * libm::sin(theta),
            ])
        })
        .collect();
    Ok((samples, spec.truth.clone()))
}

fn check_shell(truth: &GroundTruth, delta_min: f64, radius_max: f64) -> Result<f64, GenError> {
    let inner = truth.epsilon + delta_min;
    if !(delta_min >= 0.0 && delta_min.is_finite()) {
        return Err(GenError::Design(format!(
            "outlier margin must be non-negative, got {delta_min}"
        )));
    }
    if !(radius_max.is_finite() && radius_max > inner) {
        return Err(GenError::Design(format!(
            "outlier shell [{inner}, {radius_max}] is empty"
        )));
    }
    Ok(inner)
}

/// Outliers uniform in the shell `ε + δ_min ≤ ‖y − w̄‖ ≤ radius_max`, with
/// the total number of ball draws spent on them.
pub fn gen_outliers_counted(
    truth: &GroundTruth,
    count: usize,
    delta_min: f64,
    radius_max: f64,
    rng: &mut SplitMix64,
) -> Result<(Vec<Vector>, u64), GenError> {
    let inner = check_shell(truth, delta_min, radius_max)?;
    let center = truth.w_bar.as_slice();
    let mut draws = 0u64;
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let y = sample_ball_uniform(center, radius_max, rng);
        draws += 1;
        if distance(y.as_slice(), center) >= inner {
            out.push(y);
        }
    }
    Ok((out, draws))
}

pub fn gen_outliers(
    truth: &GroundTruth,
    count: usize,
    delta_min: f64,
    radius_max: f64,
    rng: &mut SplitMix64,
) -> Result<Vec<Vector>, GenError> {
    gen_outliers_counted(truth, count, delta_min, radius_max, rng).map(|(v, _)| v)
}

/// A contaminated stream with its per-position outlier labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledStream {
    pub samples: Vec<Vector>,
    pub outlier: Vec<bool>,
    /// Realized number of outliers.
    pub p_t: u64,
    pub truth: GroundTruth,
}

/// Each position is independently an outlier with probability
/// `contamination_fraction`. Positions are drawn from a second generator so
/// that fraction 0 reproduces [`gen_realizable_stream`] exactly.
pub fn gen_contaminated_stream(spec: &StreamSpec) -> Result<LabeledStream, GenError> {
    spec.check_design(Design::Mixture)?;
    let f = spec.contamination_fraction;
    if !(0.0..1.0).contains(&f) {
        return Err(GenError::Design(format!(
            "contamination fraction must lie in [0, 1), got {f}"
        )));
    }
    let inner = check_shell(&spec.truth, spec.outlier_delta_min, spec.outlier_radius_max)?;
    let mut rng = SplitMix64::new(spec.seed);
    let mut labels = SplitMix64::new(spec.seed ^ LABEL_SALT);
    let center = spec.truth.w_bar.as_slice();
    let radius = spec.truth.normal_radius();
    let mut samples = Vec::with_capacity(spec.count);
    let mut outlier = Vec::with_capacity(spec.count);
    for _ in 0..spec.count {
        let is_outlier = labels.next_f64() < f;
        let y = if is_outlier {
            loop {
                let y = sample_ball_uniform(center, spec.outlier_radius_max, &mut rng);
                if distance(y.as_slice(), center) >= inner {
                    break y;
                }
            }
        } else {
            sample_ball_uniform(center, radius, &mut rng)
        };
        samples.push(y);
        outlier.push(is_outlier);
    }
    let p_t = outlier.iter().filter(|&&o| o).count() as u64;
    Ok(LabeledStream {
        samples,
        outlier,
        p_t,
        truth: spec.truth.clone(),
    })
}

/// Dispatch on `spec.design`; labels are all `false` for clean designs.
pub fn generate(spec: &StreamSpec) -> Result<LabeledStream, GenError> {
    let clean = |(samples, truth): (Vec<Vector>, GroundTruth)| LabeledStream {
        outlier: vec![false; samples.len()],
        samples,
        p_t: 0,
        truth,
    };
    match spec.design {
        Design::Ball => gen_realizable_stream(spec).map(clean),
        Design::Circle => gen_circle_stream(spec).map(clean),
        Design::Mixture => gen_contaminated_stream(spec),
    }
}
