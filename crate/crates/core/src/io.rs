//! Signal file formats.
//!
//! * `raw-f64-le`: 16-byte header (`b"GPSB"`, `u32` ndim, `u32` dims[2]) then
//!   little-endian `f64` samples. 1-D files store `dims = [n, 1]`.
//! * CSV: comma-separated decimals. A single row is a 1-D signal; several
//!   rows form a 2-D buffer with one row per `y`.
//! * PGM: binary P5, maxval ≤ 255. Saving quantizes to 8 bits.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{Shape, SignalBuffer};

const MAGIC: &[u8; 4] = b"GPSB";
const MAX_SAMPLES: usize = 1 << 28;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FileFormat {
    Csv,
    RawF64Le,
    PgmP5,
}

impl FileFormat {
    /// Guesses the format from the file extension (`.csv`, `.pgm`, anything
    /// else is raw).
    pub fn from_path(path: &Path) -> FileFormat {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("csv") => FileFormat::Csv,
            Some("pgm") => FileFormat::PgmP5,
            _ => FileFormat::RawF64Le,
        }
    }
}

/// Formats a float with 17 significant digits, which round-trips every `f64`.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 {
        // keep the sign of negative zero out of regression files
        return "0.0000000000000000e0".to_string();
    }
    format!("{x:.16e}")
}

/// `serde_json` formatter that writes every float through [`format_f64`].
struct SeventeenDigits;

impl serde_json::ser::Formatter for SeventeenDigits {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }
}

/// Compact single-line JSON with 17-significant-digit floats.
pub fn to_json_line<T: Serialize + ?Sized>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SeventeenDigits);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits UTF-8"))
}

pub fn load(path: &Path, format: FileFormat) -> Result<SignalBuffer> {
    let bytes = fs::read(path)?;
    match format {
        FileFormat::RawF64Le => decode_raw(&bytes),
        FileFormat::Csv => decode_csv(std::str::from_utf8(&bytes).map_err(|e| Error::Format(e.to_string()))?),
        FileFormat::PgmP5 => decode_pgm(&bytes),
    }
}

pub fn save(path: &Path, format: FileFormat, buf: &SignalBuffer) -> Result<()> {
    let bytes = match format {
        FileFormat::RawF64Le => encode_raw(buf),
        FileFormat::Csv => encode_csv(buf).into_bytes(),
        FileFormat::PgmP5 => encode_pgm(buf)?,
    };
    let mut f = fs::File::create(path)?;
    f.write_all(&bytes)?;
    Ok(())
}

pub fn encode_raw(buf: &SignalBuffer) -> Vec<u8> {
    let [d0, d1] = buf.shape().dims();
    let mut out = Vec::with_capacity(16 + 8 * buf.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(buf.shape().ndim() as u32).to_le_bytes());
    out.extend_from_slice(&(d0 as u32).to_le_bytes());
    out.extend_from_slice(&(d1 as u32).to_le_bytes());
    for v in buf.samples() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_raw(bytes: &[u8]) -> Result<SignalBuffer> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing GPSB header".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (ndim, d0, d1) = (word(4), word(8), word(12));
    let shape = match ndim {
        1 if d1 == 1 => Shape::D1(d0),
        2 => Shape::D2 { nx: d0, ny: d1 },
        _ => return Err(Error::Format(format!("bad dimensions ndim={ndim} dims=[{d0}, {d1}]"))),
    };
    let count = d0
        .checked_mul(d1)
        .filter(|&c| c <= MAX_SAMPLES)
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    let body = &bytes[16..];
    if body.len() != count * 8 {
        return Err(Error::Format(format!(
            "expected {} payload bytes, found {}",
            count * 8,
            body.len()
        )));
    }
    let samples = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    SignalBuffer::new(shape, samples)
}

pub fn encode_csv(buf: &SignalBuffer) -> String {
    let row = |vals: &[f64]| {
        let mut s = vals.iter().map(|v| format_f64(*v)).collect::<Vec<_>>().join(",");
        s.push('\n');
        s
    };
    match buf.shape() {
        Shape::D1(_) => row(buf.samples()),
        Shape::D2 { nx, .. } => buf.samples().chunks(nx.max(1)).map(row).collect(),
    }
}

pub fn decode_csv(text: &str) -> Result<SignalBuffer> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Format(format!("line {}: {e}", lineno + 1)))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Format("empty CSV".into()));
    }
    let nx = rows[0].len();
    if rows.iter().any(|r| r.len() != nx) {
        return Err(Error::Format("ragged CSV rows".into()));
    }
    let ny = rows.len();
    let samples: Vec<f64> = rows.into_iter().flatten().collect();
    let shape = if ny == 1 || nx == 1 {
        Shape::D1(samples.len())
    } else {
        Shape::D2 { nx, ny }
    };
    SignalBuffer::new(shape, samples)
}

pub fn encode_pgm(buf: &SignalBuffer) -> Result<Vec<u8>> {
    let Shape::D2 { nx, ny } = buf.shape() else {
        return Err(Error::Format("PGM requires a 2-D buffer".into()));
    };
    let mut out = format!("P5\n{nx} {ny}\n255\n").into_bytes();
    out.extend(buf.samples().iter().map(|v| v.round().clamp(0.0, 255.0) as u8));
    Ok(out)
}

pub fn decode_pgm(bytes: &[u8]) -> Result<SignalBuffer> {
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token()? != "P5" {
        return Err(Error::Format("not a binary PGM (P5)".into()));
    }
    let num = |t: String| {
        t.parse::<usize>()
            .map_err(|_| Error::Format(format!("bad PGM header field {t:?}")))
    };
    let nx = num(token()?)?;
    let ny = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 255 {
        return Err(Error::Format(format!("unsupported PGM maxval {maxval}")));
    }
    let count = nx
        .checked_mul(ny)
        .filter(|&c| c > 0 && c <= MAX_SAMPLES)
        .ok_or_else(|| Error::Format("dimension overflow".into()))?;
    // exactly one whitespace byte separates the header from the raster
    let start = pos + 1;
    let raster = bytes
        .get(start..start + count)
        .ok_or_else(|| Error::Format("truncated PGM raster".into()))?;
    let samples = raster.iter().map(|&b| b as f64).collect();
    SignalBuffer::new(Shape::D2 { nx, ny }, samples)
}
