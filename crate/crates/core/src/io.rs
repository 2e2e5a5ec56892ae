//! Vector-stream files.
//!
//! Binary layout, little-endian:
//!
//! ```text
//! "FADOVECS"   8 bytes
//! version      u32 (= 1)
//! n            u64
//! T            u64
//! values       T·n × f64, row-major
//! ```
//!
//! The CSV form has one vector per line, no header, values written in
//! shortest round-trip notation. [`read_stream`] picks the format by the file
//! extension (`.csv` or anything else).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use thiserror::Error;

use crate::vector::{Vector, VectorError};

pub const STREAM_MAGIC: &[u8; 8] = b"FADOVECS";
pub const STREAM_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum StreamFileError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("not a vector stream (bad magic)")]
    BadMagic,
    #[error("unsupported stream version {0}")]
    UnsupportedVersion(u32),
    #[error("stream truncated: header promises {expected} values, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("stream dimension must be at least 1")]
    ZeroDimension,
    #[error("line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("vector {index}: {source}")]
    Vector {
        index: usize,
        #[source]
        source: VectorError,
    },
    #[error("vector {index} has dimension {got}, expected {expected}")]
    Dimension {
        index: usize,
        expected: usize,
        got: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamFormat {
    Binary,
    Csv,
}

impl StreamFormat {
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Self::Csv,
            _ => Self::Binary,
        }
    }
}

fn check_dims<Y: AsRef<[f64]>>(stream: &[Y]) -> Result<usize, StreamFileError> {
    let n = stream.first().map_or(0, |y| y.as_ref().len());
    for (index, y) in stream.iter().enumerate() {
        if y.as_ref().len() != n {
            return Err(StreamFileError::Dimension {
                index,
                expected: n,
                got: y.as_ref().len(),
            });
        }
    }
    Ok(n)
}

/// Write the binary form. An empty stream needs its dimension from `dim`.
pub fn write_binary<W: Write, Y: AsRef<[f64]>>(
    mut w: W,
    dim: usize,
    stream: &[Y],
) -> Result<(), StreamFileError> {
    let n = if stream.is_empty() {
        dim
    } else {
        check_dims(stream)?
    };
    if n == 0 {
        return Err(StreamFileError::ZeroDimension);
    }
    if n != dim {
        return Err(StreamFileError::Dimension {
            index: 0,
            expected: dim,
            got: n,
        });
    }
    w.write_all(STREAM_MAGIC)?;
    w.write_all(&STREAM_VERSION.to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&(stream.len() as u64).to_le_bytes())?;
    for y in stream {
        for v in y.as_ref() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Read the binary form, returning `(n, vectors)`.
pub fn read_binary<R: Read>(mut r: R) -> Result<(usize, Vec<Vector>), StreamFileError> {
    let mut header = [0u8; 28];
    r.read_exact(&mut header).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => StreamFileError::BadMagic,
        _ => e.into(),
    })?;
    if &header[..8] != STREAM_MAGIC {
        return Err(StreamFileError::BadMagic);
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != STREAM_VERSION {
        return Err(StreamFileError::UnsupportedVersion(version));
    }
    let n = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let t = u64::from_le_bytes(header[20..28].try_into().unwrap());
    if n == 0 {
        return Err(StreamFileError::ZeroDimension);
    }
    let expected = n.saturating_mul(t);
    let mut body = Vec::new();
    r.read_to_end(&mut body)?;
    let found = (body.len() / 8) as u64;
    if found != expected || body.len() % 8 != 0 {
        return Err(StreamFileError::Truncated { expected, found });
    }
    let n = n as usize;
    let values: Vec<f64> = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let vectors = values
        .chunks_exact(n)
        .enumerate()
        .map(|(index, row)| {
            Vector::new(row.to_vec()).map_err(|source| StreamFileError::Vector { index, source })
        })
        .collect::<Result<_, _>>()?;
    Ok((n, vectors))
}

pub fn write_csv<W: Write, Y: AsRef<[f64]>>(mut w: W, stream: &[Y]) -> Result<(), StreamFileError> {
    check_dims(stream)?;
    let mut buf = ryu::Buffer::new();
    for y in stream {
        let mut first = true;
        for v in y.as_ref() {
            if !first {
                w.write_all(b",")?;
            }
            first = false;
            w.write_all(buf.format(*v).as_bytes())?;
        }
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Read the CSV form. Blank lines are skipped; every row must have the same
/// number of fields.
pub fn read_csv<R: Read>(r: R) -> Result<Vec<Vector>, StreamFileError> {
    let mut out: Vec<Vector> = Vec::new();
    for (i, line) in BufReader::new(r).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|f| {
                f.trim().parse::<f64>().map_err(|e| StreamFileError::Csv {
                    line: i + 1,
                    msg: format!("{f:?}: {e}"),
                })
            })
            .collect::<Result<Vec<f64>, _>>()?;
        let index = out.len();
        if let Some(first) = out.first() {
            if first.dim() != row.len() {
                return Err(StreamFileError::Dimension {
                    index,
                    expected: first.dim(),
                    got: row.len(),
                });
            }
        }
        out.push(Vector::new(row).map_err(|source| StreamFileError::Vector { index, source })?);
    }
    Ok(out)
}

pub fn read_stream(path: &Path) -> Result<Vec<Vector>, StreamFileError> {
    let f = File::open(path)?;
    match StreamFormat::from_path(path) {
        StreamFormat::Csv => read_csv(f),
        StreamFormat::Binary => read_binary(BufReader::new(f)).map(|(_, v)| v),
    }
}

pub fn write_stream<Y: AsRef<[f64]>>(
    path: &Path,
    dim: usize,
    stream: &[Y],
) -> Result<(), StreamFileError> {
    let w = BufWriter::new(File::create(path)?);
    match StreamFormat::from_path(path) {
        StreamFormat::Csv => write_csv(w, stream),
        StreamFormat::Binary => write_binary(w, dim, stream),
    }
}
