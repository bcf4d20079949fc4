//! Text model and calibration formats.
//!
//! Model file:
//!
//! ```text
//! QEPNET v1 <L> <d1>
//! <rows> <cols> <kind> <gamma>
//! <hex payload>            (inline mode only)
//! ...
//! ```
//!
//! Payloads are row-major little-endian `f64`. In inline mode each layer
//! line is followed by its payload as lowercase hex; in binary mode the
//! payloads of all layers are concatenated into the sibling `<path>.bin`.
//! The calibration file has a `<d1> <m>` header and the same payload rules.

use std::fs;
use std::path::{Path, PathBuf};

use super::{Activation, CalibrationSet, Layer, NetworkSpec};
use crate::error::{QepError, Result};
use crate::numerics::Matrix;

const MAGIC: &str = "QEPNET";
const VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PayloadMode {
    #[default]
    Inline,
    Binary,
}

/// A serialized file: the text part and, in binary mode, the sibling payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Encoded {
    pub text: String,
    pub payload: Option<Vec<u8>>,
}

pub fn sibling_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

fn to_bytes(m: &Matrix) -> Vec<u8> {
    m.as_slice().iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn from_bytes(rows: usize, cols: usize, bytes: &[u8], line: usize) -> Result<Matrix> {
    if bytes.len() != rows * cols * 8 {
        return Err(QepError::Parse {
            line,
            message: format!("expected {} payload bytes, found {}", rows * cols * 8, bytes.len()),
        });
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Matrix::new(rows, cols, data)
}

fn parse_err(line: usize, message: impl Into<String>) -> QepError {
    QepError::Parse {
        line,
        message: message.into(),
    }
}

fn field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    let tok = tok.ok_or_else(|| parse_err(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| parse_err(line, format!("invalid {what} '{tok}'")))
}

fn decode_hex(s: &str, line: usize) -> Result<Vec<u8>> {
    hex::decode(s.trim()).map_err(|e| parse_err(line, format!("bad hex payload: {e}")))
}

fn write_files(path: &Path, enc: &Encoded) -> Result<()> {
    let io = |p: &Path| {
        let p = p.display().to_string();
        move |source| QepError::Io { path: p, source }
    };
    fs::write(path, &enc.text).map_err(io(path))?;
    if let Some(bytes) = &enc.payload {
        let bin = sibling_path(path);
        fs::write(&bin, bytes).map_err(io(&bin))?;
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| QepError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read_sibling(path: &Path) -> Result<Vec<u8>> {
    let bin = sibling_path(path);
    fs::read(&bin).map_err(|source| QepError::Io {
        path: bin.display().to_string(),
        source,
    })
}

pub fn encode_network(net: &NetworkSpec, mode: PayloadMode) -> Encoded {
    let mut text = format!("{MAGIC} {VERSION} {} {}\n", net.depth(), net.input_dim());
    let mut payload = Vec::new();
    for layer in net.layers() {
        let (r, c) = layer.weights.shape();
        let act = layer.activation;
        text.push_str(&format!("{r} {c} {} {}\n", act.kind(), act.gamma()));
        let bytes = to_bytes(&layer.weights);
        match mode {
            PayloadMode::Inline => {
                text.push_str(&hex::encode(&bytes));
                text.push('\n');
            }
            PayloadMode::Binary => payload.extend(bytes),
        }
    }
    Encoded {
        text,
        payload: (mode == PayloadMode::Binary).then_some(payload),
    }
}

/// Parses a model. `payload` is consulted only when the text carries no
/// inline hex lines.
pub fn decode_network(text: &str, payload: Option<&[u8]>) -> Result<NetworkSpec> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let header = lines.first().ok_or_else(|| parse_err(1, "empty model file"))?;
    let mut tok = header.split_whitespace();
    if tok.next() != Some(MAGIC) || tok.next() != Some(VERSION) {
        return Err(parse_err(1, format!("expected '{MAGIC} {VERSION}' header")));
    }
    let depth: usize = field(tok.next(), 1, "layer count")?;
    let input_dim: usize = field(tok.next(), 1, "input dimension")?;
    if tok.next().is_some() {
        return Err(parse_err(1, "trailing tokens in header"));
    }
    if depth == 0 {
        return Err(parse_err(1, "layer count must be positive"));
    }
    let inline = match lines.len() - 1 {
        n if n == 2 * depth => true,
        n if n == depth => false,
        n => return Err(parse_err(1, format!("expected {depth} or {} body lines, found {n}", 2 * depth))),
    };
    let step = if inline { 2 } else { 1 };
    let mut offset = 0usize;
    let mut layers = Vec::with_capacity(depth);
    for l in 0..depth {
        let idx = 1 + l * step;
        let line_no = idx + 1;
        let mut tok = lines[idx].split_whitespace();
        let rows: usize = field(tok.next(), line_no, "row count")?;
        let cols: usize = field(tok.next(), line_no, "column count")?;
        let kind: String = field(tok.next(), line_no, "activation kind")?;
        let gamma: f64 = field(tok.next(), line_no, "gamma")?;
        if tok.next().is_some() {
            return Err(parse_err(line_no, "trailing tokens in layer line"));
        }
        if rows == 0 || cols == 0 {
            return Err(parse_err(line_no, "layer dimensions must be positive"));
        }
        let act = Activation::from_kind(&kind, gamma).map_err(|e| parse_err(line_no, e.to_string()))?;
        let weights = if inline {
            let bytes = decode_hex(lines[idx + 1], line_no + 1)?;
            from_bytes(rows, cols, &bytes, line_no + 1)?
        } else {
            let payload = payload.ok_or_else(|| parse_err(line_no, "binary payload missing"))?;
            let len = rows * cols * 8;
            let chunk = payload
                .get(offset..offset + len)
                .ok_or_else(|| parse_err(line_no, "binary payload too short"))?;
            offset += len;
            from_bytes(rows, cols, chunk, line_no)?
        };
        layers.push(Layer::new(weights, act));
    }
    if let Some(p) = payload.filter(|_| !inline) {
        if p.len() != offset {
            return Err(parse_err(1, format!("binary payload has {} trailing bytes", p.len() - offset)));
        }
    }
    NetworkSpec::new(input_dim, layers)
}

pub fn write_network(path: &Path, net: &NetworkSpec, mode: PayloadMode) -> Result<()> {
    write_files(path, &encode_network(net, mode))
}

pub fn read_network(path: &Path) -> Result<NetworkSpec> {
    let text = read_text(path)?;
    let depth_lines = text.lines().filter(|l| !l.trim().is_empty()).count();
    let declared = text
        .lines()
        .next()
        .and_then(|h| h.split_whitespace().nth(2))
        .and_then(|t| t.parse::<usize>().ok());
    let binary = declared.is_some_and(|d| depth_lines == d + 1);
    if binary {
        let payload = read_sibling(path)?;
        decode_network(&text, Some(&payload))
    } else {
        decode_network(&text, None)
    }
}

pub fn encode_calibration(calib: &CalibrationSet, mode: PayloadMode) -> Encoded {
    let bytes = to_bytes(calib.x());
    let mut text = format!("{} {}\n", calib.dim(), calib.samples());
    match mode {
        PayloadMode::Inline => {
            text.push_str(&hex::encode(&bytes));
            text.push('\n');
            Encoded { text, payload: None }
        }
        PayloadMode::Binary => Encoded {
            text,
            payload: Some(bytes),
        },
    }
}

pub fn decode_calibration(text: &str, payload: Option<&[u8]>) -> Result<CalibrationSet> {
    let lines: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let header = lines.first().ok_or_else(|| parse_err(1, "empty calibration file"))?;
    let mut tok = header.split_whitespace();
    let d: usize = field(tok.next(), 1, "input dimension")?;
    let m: usize = field(tok.next(), 1, "sample count")?;
    if tok.next().is_some() {
        return Err(parse_err(1, "trailing tokens in header"));
    }
    if d == 0 || m == 0 {
        return Err(parse_err(1, "calibration dimensions must be positive"));
    }
    let x = match (lines.len(), payload) {
        (2, _) => from_bytes(d, m, &decode_hex(lines[1], 2)?, 2)?,
        (1, Some(p)) => from_bytes(d, m, p, 1)?,
        (1, None) => return Err(parse_err(1, "binary payload missing")),
        (n, _) => return Err(parse_err(3, format!("expected at most 2 lines, found {n}"))),
    };
    Ok(CalibrationSet::new(x))
}

pub fn write_calibration(path: &Path, calib: &CalibrationSet, mode: PayloadMode) -> Result<()> {
    write_files(path, &encode_calibration(calib, mode))
}

pub fn read_calibration(path: &Path) -> Result<CalibrationSet> {
    let text = read_text(path)?;
    if text.lines().filter(|l| !l.trim().is_empty()).count() == 1 {
        let payload = read_sibling(path)?;
        decode_calibration(&text, Some(&payload))
    } else {
        decode_calibration(&text, None)
    }
}
