//! Scene-change detection on grayscale frame sequences.
//!
//! Each frame becomes a vector in `[0, 1]ⁿ` (`n = width·height`, row-major,
//! pixel `v ↦ v/255`) and is fed to a fixed-radius detector with a constant
//! gain. The centre then acts as a slowly updated memory of the current
//! scene, and alarms cluster right after cuts.
//!
//! Frames come from binary PGM files or from a packed file, little-endian:
//!
//! ```text
//! "FADOFRMS"   8 bytes
//! version      u32 (= 1)
//! width        u32
//! height       u32
//! T            u64
//! pixels       T·width·height bytes, row-major
//! ```

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{ConfigError, Detector, DetectorMode, GainSchedule, StepError};
use crate::streamgen::SplitMix64;

pub const FRAMES_MAGIC: &[u8; 8] = b"FADOFRMS";
pub const FRAMES_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("frame {index}: {msg}")]
    Format { index: usize, msg: String },
    #[error("frame {index} is {got_w}×{got_h}, expected {want_w}×{want_h}")]
    DimensionMismatch {
        index: usize,
        want_w: usize,
        want_h: usize,
        got_w: usize,
        got_h: usize,
    },
    #[error("frame sequence is empty")]
    Empty,
    #[error("packed frame file: {0}")]
    Packed(String),
    #[error("detector state has dimension {got}, image needs {expected}")]
    StateDimension { expected: usize, got: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("frame {index}: {source}")]
    Step {
        index: usize,
        #[source]
        source: StepError,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> SceneError + '_ {
    move |source| SceneError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    pub width: usize,
    pub height: usize,
    /// One `width·height` byte buffer per frame, row-major.
    pub frames: Vec<Vec<u8>>,
    pub source: String,
}

impl FrameSequence {
    pub fn new(
        width: usize,
        height: usize,
        frames: Vec<Vec<u8>>,
        source: impl Into<String>,
    ) -> Result<Self, SceneError> {
        let n = width * height;
        if n == 0 {
            return Err(SceneError::Format {
                index: 0,
                msg: "zero-sized frame".into(),
            });
        }
        for (index, f) in frames.iter().enumerate() {
            if f.len() != n {
                return Err(SceneError::Format {
                    index,
                    msg: format!("{} pixels, expected {n}", f.len()),
                });
            }
        }
        Ok(Self {
            width,
            height,
            frames,
            source: source.into(),
        })
    }

    pub fn dim(&self) -> usize {
        self.width * self.height
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// A decoded 8-bit grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

/// Decode a binary (`P5`) PGM with `maxval ≤ 255`. Pixel values are kept as
/// stored.
pub fn decode_pgm(bytes: &[u8]) -> Result<GrayImage, String> {
    let mut pos = 0;
    let token = |pos: &mut usize| -> Result<String, String> {
        loop {
            match bytes.get(*pos) {
                Some(b'#') => {
                    while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                        *pos += 1;
                    }
                }
                Some(b) if b.is_ascii_whitespace() => *pos += 1,
                Some(_) => break,
                None => return Err("truncated header".into()),
            }
        }
        let start = *pos;
        while bytes.get(*pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            *pos += 1;
        }
        Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
    };
    if token(&mut pos)? != "P5" {
        return Err("not a binary PGM (expected P5)".into());
    }
    let number = |what: &str, pos: &mut usize| -> Result<usize, String> {
        let t = token(pos)?;
        t.parse::<usize>()
            .map_err(|_| format!("bad {what} {t:?} in header"))
    };
    let width = number("width", &mut pos)?;
    let height = number("height", &mut pos)?;
    let maxval = number("maxval", &mut pos)?;
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} not in 1..=255"));
    }
    if width == 0 || height == 0 {
        return Err("zero-sized image".into());
    }
    // Exactly one whitespace byte separates the header from the raster.
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err("truncated header".into());
    }
    pos += 1;
    let n = width
        .checked_mul(height)
        .ok_or_else(|| "image too large".to_string())?;
    let raster = &bytes[pos..];
    if raster.len() < n {
        return Err(format!("raster has {} bytes, expected {n}", raster.len()));
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raster[..n].to_vec(),
    })
}

pub fn encode_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(pixels.len(), width * height, "pixel count mismatch");
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn load_pgm_sequence<P: AsRef<Path>>(paths: &[P]) -> Result<FrameSequence, SceneError> {
    if paths.is_empty() {
        return Err(SceneError::Empty);
    }
    let mut frames = Vec::with_capacity(paths.len());
    let (mut w, mut h) = (0, 0);
    for (index, p) in paths.iter().enumerate() {
        let p = p.as_ref();
        let bytes = fs::read(p).map_err(io_err(p))?;
        let img = decode_pgm(&bytes).map_err(|msg| SceneError::Format { index, msg })?;
        if index == 0 {
            (w, h) = (img.width, img.height);
        } else if (img.width, img.height) != (w, h) {
            return Err(SceneError::DimensionMismatch {
                index,
                want_w: w,
                want_h: h,
                got_w: img.width,
                got_h: img.height,
            });
        }
        frames.push(img.pixels);
    }
    let source = paths[0].as_ref().display().to_string();
    FrameSequence::new(w, h, frames, source)
}

pub fn encode_packed(seq: &FrameSequence) -> Vec<u8> {
    let mut out = Vec::with_capacity(28 + seq.len() * seq.dim());
    out.extend_from_slice(FRAMES_MAGIC);
    out.extend_from_slice(&FRAMES_VERSION.to_le_bytes());
    out.extend_from_slice(&(seq.width as u32).to_le_bytes());
    out.extend_from_slice(&(seq.height as u32).to_le_bytes());
    out.extend_from_slice(&(seq.len() as u64).to_le_bytes());
    for f in &seq.frames {
        out.extend_from_slice(f);
    }
    out
}

pub fn decode_packed(bytes: &[u8], source: &str) -> Result<FrameSequence, SceneError> {
    let bad = |m: &str| SceneError::Packed(m.to_string());
    if bytes.len() < 28 {
        return Err(bad("truncated header"));
    }
    if &bytes[..8] != FRAMES_MAGIC {
        return Err(bad("bad magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != FRAMES_VERSION {
        return Err(SceneError::Packed(format!("unsupported version {version}")));
    }
    let width = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let height = u32::from_le_bytes(bytes[16..20].try_into().unwrap()) as usize;
    let count = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
    let n = width * height;
    if n == 0 {
        return Err(bad("zero-sized frames"));
    }
    let body = &bytes[28..];
    if (body.len() as u64) != count.saturating_mul(n as u64) {
        return Err(SceneError::Packed(format!(
            "expected {count} frames of {n} bytes, found {} bytes",
            body.len()
        )));
    }
    let frames = body.chunks_exact(n).map(<[u8]>::to_vec).collect();
    FrameSequence::new(width, height, frames, source)
}

pub fn read_packed(path: &Path) -> Result<FrameSequence, SceneError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    decode_packed(&bytes, &path.display().to_string())
}

pub fn write_packed(seq: &FrameSequence, path: &Path) -> Result<(), SceneError> {
    fs::write(path, encode_packed(seq)).map_err(io_err(path))
}

/// Row-major flattening with `v ↦ v/255`.
pub fn frame_to_vector(frame: &[u8]) -> Vec<f64> {
    frame.iter().map(|&v| v as f64 / 255.0).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    pub index: usize,
    pub alarm: bool,
    pub distance: f64,
    pub radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionTimeline {
    pub records: Vec<FrameRecord>,
    pub total_alarms: u64,
}

impl DetectionTimeline {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `alarms / T`, 0 for an empty timeline.
    pub fn alarm_rate(&self) -> f64 {
        if self.records.is_empty() {
            0.0
        } else {
            self.total_alarms as f64 / self.records.len() as f64
        }
    }

    pub fn alarms_in(&self, range: std::ops::Range<usize>) -> u64 {
        self.records[range].iter().filter(|r| r.alarm).count() as u64
    }
}

/// A detector configured for scene tracking: fixed radius `epsilon`,
/// constant gain `gamma`.
pub fn scene_detector(dim: usize, epsilon: f64, gamma: f64) -> Result<Detector, SceneError> {
    Ok(Detector::new(
        dim,
        DetectorMode::FixedRadius { epsilon },
        GainSchedule::constant(gamma)?,
    )?)
}

/// Continue `detector` over `frames`; frame indices in the timeline start at
/// `first_index`.
pub fn run_scene_detection_from(
    detector: &mut Detector,
    frames: &FrameSequence,
    first_index: usize,
) -> Result<DetectionTimeline, SceneError> {
    if detector.dim() != frames.dim() {
        return Err(SceneError::StateDimension {
            expected: frames.dim(),
            got: detector.dim(),
        });
    }
    let mut records = Vec::with_capacity(frames.len());
    let mut y = vec![0.0; frames.dim()];
    for (i, f) in frames.frames.iter().enumerate() {
        for (dst, &v) in y.iter_mut().zip(f) {
            *dst = v as f64 / 255.0;
        }
        let index = first_index + i;
        let out = detector
            .step(&y)
            .map_err(|source| SceneError::Step { index, source })?;
        records.push(FrameRecord {
            index,
            alarm: out.alarm,
            distance: out.distance,
            radius: out.threshold,
        });
    }
    let total_alarms = records.iter().filter(|r| r.alarm).count() as u64;
    Ok(DetectionTimeline {
        records,
        total_alarms,
    })
}

pub fn run_scene_detection(
    frames: &FrameSequence,
    epsilon: f64,
    gamma: f64,
) -> Result<(DetectionTimeline, Detector), SceneError> {
    if frames.is_empty() {
        return Err(SceneError::Empty);
    }
    let mut detector = scene_detector(frames.dim(), epsilon, gamma)?;
    let timeline = run_scene_detection_from(&mut detector, frames, 0)?;
    Ok((timeline, detector))
}

/// Clips of `frames_per_clip` frames, each a fresh uniformly random base
/// image plus independent integer noise in `[−noise, noise]` per pixel,
/// clipped to `[0, 255]`. Returns the frames and the first frame index of
/// every clip after the first.
pub fn gen_synthetic_clips(
    width: usize,
    height: usize,
    num_clips: usize,
    frames_per_clip: usize,
    noise_amplitude: u8,
    seed: u64,
) -> (FrameSequence, Vec<usize>) {
    assert!(width > 0 && height > 0, "frame size must be positive");
    let n = width * height;
    let mut rng = SplitMix64::new(seed);
    let span = 2 * noise_amplitude as u64 + 1;
    let mut frames = Vec::with_capacity(num_clips * frames_per_clip);
    for _ in 0..num_clips {
        let base: Vec<u8> = (0..n).map(|_| (rng.next_u64() >> 56) as u8).collect();
        for _ in 0..frames_per_clip {
            let frame = base
                .iter()
                .map(|&b| {
                    if noise_amplitude == 0 {
                        return b;
                    }
                    let offset = (rng.next_u64() % span) as i32 - noise_amplitude as i32;
                    (b as i32 + offset).clamp(0, 255) as u8
                })
                .collect();
            frames.push(frame);
        }
    }
    let transitions = (1..num_clips).map(|k| k * frames_per_clip).collect();
    let seq = FrameSequence::new(width, height, frames, format!("synthetic seed {seed}"))
        .expect("generated frames have the right size");
    (seq, transitions)
}

/// Centre as 8-bit pixels: clamp to `[0, 1]`, scale by 255, round half up.
pub fn snapshot_pixels(center: &[f64]) -> Vec<u8> {
    center
        .iter()
        .map(|&w| (w.clamp(0.0, 1.0) * 255.0 + 0.5).floor() as u8)
        .collect()
}

pub fn write_memory_snapshot(
    detector: &Detector,
    width: usize,
    height: usize,
    path: &Path,
) -> Result<(), SceneError> {
    if detector.dim() != width * height {
        return Err(SceneError::StateDimension {
            expected: width * height,
            got: detector.dim(),
        });
    }
    let bytes = encode_pgm(width, height, &snapshot_pixels(detector.center()));
    fs::write(path, bytes).map_err(io_err(path))
}

/// For each transition, frames until the first alarm at or after it, as
/// long as that alarm comes before the next transition.
pub fn detection_latencies(
    timeline: &DetectionTimeline,
    transitions: &[usize],
) -> Vec<Option<usize>> {
    transitions
        .iter()
        .enumerate()
        .map(|(k, &start)| {
            let end = transitions
                .get(k + 1)
                .copied()
                .unwrap_or(timeline.len())
                .min(timeline.len());
            (start.min(end)..end)
                .find(|&i| timeline.records[i].alarm)
                .map(|i| i - start)
        })
        .collect()
}

/// Timeline as CSV (`frame,alarm,distance,radius,is_true_transition`)
/// followed by `#`-prefixed summary lines.
pub fn write_timeline_csv<W: Write>(
    mut w: W,
    timeline: &DetectionTimeline,
    transitions: Option<&[usize]>,
) -> std::io::Result<()> {
    let mut buf = ryu::Buffer::new();
    writeln!(w, "frame,alarm,distance,radius,is_true_transition")?;
    let mut cut = transitions.unwrap_or(&[]).iter().peekable();
    for r in &timeline.records {
        while cut.next_if(|&&t| t < r.index).is_some() {}
        let is_cut = cut.next_if(|&&t| t == r.index).is_some();
        write!(w, "{},{},", r.index, r.alarm as u8)?;
        write!(w, "{},", buf.format(r.distance))?;
        writeln!(w, "{},{}", buf.format(r.radius), is_cut as u8)?;
    }
    writeln!(w, "# total_alarms={}", timeline.total_alarms)?;
    writeln!(w, "# frames={}", timeline.len())?;
    writeln!(w, "# alarm_rate={}", buf.format(timeline.alarm_rate()))?;
    if let Some(t) = transitions {
        for (start, lat) in t.iter().zip(detection_latencies(timeline, t)) {
            match lat {
                Some(l) => writeln!(w, "# latency transition={start} frames={l}")?,
                None => writeln!(w, "# latency transition={start} frames=none")?,
            }
        }
    }
    w.flush()
}

pub fn timeline_to_csv(
    timeline: &DetectionTimeline,
    transitions: Option<&[usize]>,
    path: &Path,
) -> Result<(), SceneError> {
    let mut out = Vec::new();
    write_timeline_csv(&mut out, timeline, transitions).map_err(io_err(path))?;
    fs::write(path, out).map_err(io_err(path))
}
