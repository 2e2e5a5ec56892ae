//! Checkpoint format, little-endian throughout:
//!
//! ```text
//! "FADOCKPT"            8 bytes
//! version               u32 (= 1)
//! mode tag              u8  (0 = fixed radius, 1 = adaptive radius)
//! epsilon               f64 (fixed radius only)
//! schedule tag          u8  (0 = power decay, 1 = constant)
//! schedule parameters   f64 × 2 (γ₀, τ) or f64 × 1 (γ)
//! n, t, m               u64 × 3
//! trace                 f64 × 4 (Σdγ², Σdγ, Σdγvᵀw, ‖w‖²)
//! centre                f64 × n
//! crc32                 u32 over every preceding byte
//! ```

use thiserror::Error;

use super::{Detector, DetectorMode, DiagnosticsTrace, GainSchedule};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"FADOCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CheckpointError {
    #[error("not a detector checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated at byte {0}")]
    Truncated(usize),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("unknown {what} tag {tag}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{0} trailing bytes after checkpoint")]
    TrailingBytes(usize),
    #[error("inconsistent checkpoint: {0}")]
    Inconsistent(String),
}

pub(super) fn encode(d: &Detector) -> Vec<u8> {
    let mut out = Vec::with_capacity(96 + 8 * d.center.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    match d.mode {
        DetectorMode::FixedRadius { epsilon } => {
            out.push(0);
            out.extend_from_slice(&epsilon.to_le_bytes());
        }
        DetectorMode::AdaptiveRadius => out.push(1),
    }
    match d.schedule {
        GainSchedule::PowerDecay { gamma0, tau } => {
            out.push(0);
            out.extend_from_slice(&gamma0.to_le_bytes());
            out.extend_from_slice(&tau.to_le_bytes());
        }
        GainSchedule::Constant { gamma } => {
            out.push(1);
            out.extend_from_slice(&gamma.to_le_bytes());
        }
    }
    for v in [d.center.len() as u64, d.steps, d.mistakes] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    let t = &d.trace;
    for v in [
        t.sum_d_gamma_sq,
        t.sum_d_gamma,
        t.sum_d_gamma_vw,
        t.w_norm_sq,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for w in &d.center {
        out.extend_from_slice(&w.to_le_bytes());
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(CheckpointError::Truncated(self.bytes.len()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        let v = f64::from_le_bytes(self.take(8)?.try_into().unwrap());
        if v.is_finite() {
            Ok(v)
        } else {
            Err(CheckpointError::NonFinite(what))
        }
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<Detector, CheckpointError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::UnsupportedVersion(version));
    }
    let mode = match r.u8()? {
        0 => DetectorMode::FixedRadius {
            epsilon: r.f64("epsilon")?,
        },
        1 => DetectorMode::AdaptiveRadius,
        tag => return Err(CheckpointError::UnknownTag { what: "mode", tag }),
    };
    let schedule = match r.u8()? {
        0 => GainSchedule::PowerDecay {
            gamma0: r.f64("gamma0")?,
            tau: r.f64("tau")?,
        },
        1 => GainSchedule::Constant {
            gamma: r.f64("gamma")?,
        },
        tag => {
            return Err(CheckpointError::UnknownTag {
                what: "schedule",
                tag,
            })
        }
    };
    let dim = r.u64()?;
    let steps = r.u64()?;
    let mistakes = r.u64()?;
    let trace = DiagnosticsTrace {
        sum_d_gamma_sq: r.f64("trace")?,
        sum_d_gamma: r.f64("trace")?,
        sum_d_gamma_vw: r.f64("trace")?,
        w_norm_sq: r.f64("trace")?,
    };
    // The centre and checksum must fit in what is left.
    let remaining = bytes.len() - r.pos;
    let dim = usize::try_from(dim)
        .ok()
        .filter(|&n| n.checked_mul(8).is_some_and(|b| b + 4 <= remaining))
        .ok_or(CheckpointError::Truncated(bytes.len()))?;
    let mut center = Vec::with_capacity(dim);
    for _ in 0..dim {
        center.push(r.f64("centre")?);
    }
    let body_end = r.pos;
    let stored = r.u32()?;
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(CheckpointError::Checksum { stored, computed });
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }

    if dim == 0 {
        return Err(CheckpointError::Inconsistent("zero dimension".into()));
    }
    if mistakes > steps {
        return Err(CheckpointError::Inconsistent(format!(
            "mistake count {mistakes} exceeds step count {steps}"
        )));
    }
    mode.validate()
        .and(schedule.validate())
        .map_err(|e| CheckpointError::Inconsistent(e.to_string()))?;

    Ok(Detector {
        center,
        mistakes,
        steps,
        mode,
        schedule,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Detector {
        let mut d = Detector::new(
            3,
            DetectorMode::FixedRadius { epsilon: 0.75 },
            GainSchedule::power_decay(1.0, 0.25).unwrap(),
        )
        .unwrap();
        for i in 0..50 {
            let x = i as f64;
            d.step(&[x.sin() * 3.0, x.cos(), (x * 0.3).sin() - 1.0])
                .unwrap();
        }
        d
    }

    fn bit_identical(a: &Detector, b: &Detector) -> bool {
        let bits = |d: &Detector| -> Vec<u64> {
            let t = d.trace();
            d.center()
                .iter()
                .chain(
                    [
                        t.sum_d_gamma_sq,
                        t.sum_d_gamma,
                        t.sum_d_gamma_vw,
                        t.w_norm_sq,
                    ]
                    .iter(),
                )
                .map(|v| v.to_bits())
                .collect()
        };
        bits(a) == bits(b)
            && a.mistakes() == b.mistakes()
            && a.steps() == b.steps()
            && a.mode() == b.mode()
            && a.schedule() == b.schedule()
    }

    #[test]
    fn layout_of_fresh_state() {
        let d = Detector::new(
            2,
            DetectorMode::AdaptiveRadius,
            GainSchedule::constant(1.0).unwrap(),
        )
        .unwrap();
        let bytes = d.to_checkpoint();
        // magic + version + mode tag + schedule tag + γ + 3×u64 + 4×f64 + 2×f64 + crc
        assert_eq!(bytes.len(), 8 + 4 + 1 + 1 + 8 + 24 + 32 + 16 + 4);
        assert_eq!(&bytes[..8], b"FADOCKPT");
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes[12], 1);
        assert_eq!(bytes[13], 1);
        assert_eq!(Detector::from_checkpoint(&bytes).unwrap(), d);
    }

    #[test]
    fn round_trip_after_steps() {
        let d = sample();
        let back = Detector::from_checkpoint(&d.to_checkpoint()).unwrap();
        assert!(bit_identical(&d, &back));
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = sample().to_checkpoint();
        bytes[0] = b'X';
        assert_eq!(
            Detector::from_checkpoint(&bytes),
            Err(CheckpointError::BadMagic)
        );
    }

    #[test]
    fn flipped_payload_bit_fails_checksum() {
        let mut bytes = sample().to_checkpoint();
        let i = bytes.len() - 10;
        bytes[i] ^= 0x01;
        assert!(matches!(
            Detector::from_checkpoint(&bytes),
            Err(CheckpointError::Checksum { .. })
        ));
    }

    #[test]
    fn truncation_and_trailing_bytes() {
        let bytes = sample().to_checkpoint();
        for cut in [0, 5, 12, 40, bytes.len() - 1] {
            assert!(
                Detector::from_checkpoint(&bytes[..cut]).is_err(),
                "cut {cut}"
            );
        }
        let mut longer = bytes.clone();
        longer.push(0);
        assert!(Detector::from_checkpoint(&longer).is_err());
    }

    #[test]
    fn wrong_version_and_non_finite() {
        let mut bytes = sample().to_checkpoint();
        bytes[8] = 2;
        assert_eq!(
            Detector::from_checkpoint(&bytes),
            Err(CheckpointError::UnsupportedVersion(2))
        );

        // Forge a NaN epsilon with a valid checksum.
        let mut bytes = sample().to_checkpoint();
        bytes[13..21].copy_from_slice(&f64::NAN.to_le_bytes());
        let n = bytes.len() - 4;
        let crc = crc32fast::hash(&bytes[..n]);
        bytes[n..].copy_from_slice(&crc.to_le_bytes());
        assert_eq!(
            Detector::from_checkpoint(&bytes),
            Err(CheckpointError::NonFinite("epsilon"))
        );
    }

    #[test]
    fn resumed_run_matches_uninterrupted() {
        let stream: Vec<[f64; 3]> = (0..200)
            .map(|i| {
                let x = i as f64 * 0.37;
                [2.0 + x.sin(), 2.0 + x.cos(), 1.0 + (2.0 * x).sin() * 0.5]
            })
            .collect();
        let mut full = sample();
        let mut half = sample();
        full.run_stream(&stream).unwrap();
        half.run_stream(&stream[..100]).unwrap();
        let mut resumed = Detector::from_checkpoint(&half.to_checkpoint()).unwrap();
        resumed.run_stream(&stream[100..]).unwrap();
        assert!(bit_identical(&full, &resumed));
    }
}
