//! Versioned checkpoint container: a plain-text key/value header followed by
//! named, shape-tagged tensors of raw little-endian `f64`.
//!
//! Layout:
//!
//! ```text
//! ordcast-checkpoint v1\n
//! key=value\n            (any number of lines, order preserved)
//! ---\n
//! name rows cols\n       (then exactly rows*cols*8 bytes of LE f64)
//! ...                    (next tensor immediately after)
//! ```
//!
//! Tensor payloads are raw bit patterns, so save/load round-trips are
//! bit-exact. Header floats written with `format_f64` use Rust's shortest
//! round-trip formatting and parse back to the identical bits.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

const MAGIC: &str = "ordcast-checkpoint v1";

/// A named row-major tensor. Vectors are stored with `rows == 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl NamedTensor {
    pub fn new(name: impl Into<String>, rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if rows * cols != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "tensor {name}: {rows}x{cols} declared but {} values supplied",
                data.len()
            )));
        }
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(Error::Checkpoint(format!(
                "tensor name {name:?} must be nonempty, without whitespace"
            )));
        }
        Ok(NamedTensor {
            name,
            rows,
            cols,
            data,
        })
    }
}

/// In-memory checkpoint: ordered header entries plus named tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    header: Vec<(String, String)>,
    tensors: Vec<NamedTensor>,
}

/// Formats an `f64` so that parsing the string returns the identical bits.
pub fn format_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x}")
    } else {
        // `inf`/`NaN` never belong in a checkpoint; keep them detectable.
        format!("{x:?}")
    }
}

impl Checkpoint {
    pub fn new() -> Self {
        Checkpoint::default()
    }

    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        let key = key.into();
        let value = value.into();
        debug_assert!(!key.contains('=') && !key.contains('\n'));
        debug_assert!(!value.contains('\n'));
        if let Some(entry) = self.header.iter_mut().find(|(k, _)| *k == key) {
            entry.1 = value;
        } else {
            self.header.push((key, value));
        }
    }

    pub fn set_f64(&mut self, key: impl Into<String>, value: f64) {
        self.set(key, format_f64(value));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.header
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::Checkpoint(format!("missing header key {key:?}")))
    }

    pub fn require_f64(&self, key: &str) -> Result<f64> {
        self.require(key)?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("header key {key:?}: {e}")))
    }

    pub fn require_usize(&self, key: &str) -> Result<usize> {
        self.require(key)?
            .parse()
            .map_err(|e| Error::Checkpoint(format!("header key {key:?}: {e}")))
    }

    pub fn push_tensor(&mut self, tensor: NamedTensor) -> Result<()> {
        if self.tensors.iter().any(|t| t.name == tensor.name) {
            return Err(Error::Checkpoint(format!(
                "duplicate tensor name {:?}",
                tensor.name
            )));
        }
        self.tensors.push(tensor);
        Ok(())
    }

    pub fn tensor(&self, name: &str) -> Result<&NamedTensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name:?}")))
    }

    pub fn tensors(&self) -> &[NamedTensor] {
        &self.tensors
    }

    pub fn header(&self) -> &[(String, String)] {
        &self.header
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        writeln!(w, "{MAGIC}")?;
        for (k, v) in &self.header {
            writeln!(w, "{k}={v}")?;
        }
        writeln!(w, "---")?;
        for t in &self.tensors {
            writeln!(w, "{} {} {}", t.name, t.rows, t.cols)?;
            let mut bytes = Vec::with_capacity(t.data.len() * 8);
            for &x in &t.data {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
            w.write_all(&bytes)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let mut buf = Vec::new();
        r.read_to_end(&mut buf)?;
        Checkpoint::from_bytes(&buf)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::read_from(&mut BufReader::new(File::open(path)?))
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut pos = 0usize;
        let magic = read_line(buf, &mut pos)?;
        if magic != MAGIC {
            return Err(Error::Checkpoint(format!(
                "bad magic line {magic:?}, expected {MAGIC:?}"
            )));
        }
        let mut ckpt = Checkpoint::new();
        loop {
            let line = read_line(buf, &mut pos)?;
            if line == "---" {
                break;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Checkpoint(format!("malformed header line {line:?}"))
            })?;
            ckpt.header.push((k.to_string(), v.to_string()));
        }
        while pos < buf.len() {
            let line = read_line(buf, &mut pos)?;
            let mut parts = line.split(' ');
            let name = parts
                .next()
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Checkpoint("empty tensor name line".into()))?;
            let rows: usize = parse_dim(parts.next(), name)?;
            let cols: usize = parse_dim(parts.next(), name)?;
            if parts.next().is_some() {
                return Err(Error::Checkpoint(format!(
                    "trailing tokens on tensor line for {name:?}"
                )));
            }
            let n_bytes = rows
                .checked_mul(cols)
                .and_then(|n| n.checked_mul(8))
                .ok_or_else(|| Error::Checkpoint(format!("tensor {name:?} too large")))?;
            if pos + n_bytes > buf.len() {
                return Err(Error::Checkpoint(format!(
                    "tensor {name:?} truncated: needs {n_bytes} bytes"
                )));
            }
            let mut data = Vec::with_capacity(rows * cols);
            for chunk in buf[pos..pos + n_bytes].chunks_exact(8) {
                data.push(f64::from_le_bytes(chunk.try_into().unwrap()));
            }
            pos += n_bytes;
            ckpt.push_tensor(NamedTensor::new(name, rows, cols, data)?)?;
        }
        Ok(ckpt)
    }

    /// Header as a map (ignores duplicate keys; last wins).
    pub fn header_map(&self) -> BTreeMap<&str, &str> {
        self.header
            .iter()
            .map(|(k, v)| (k.as_str(), v.as_str()))
            .collect()
    }
}

fn parse_dim(tok: Option<&str>, name: &str) -> Result<usize> {
    tok.ok_or_else(|| Error::Checkpoint(format!("tensor {name:?}: missing dimension")))?
        .parse()
        .map_err(|e| Error::Checkpoint(format!("tensor {name:?}: bad dimension ({e})")))
}

fn read_line(buf: &[u8], pos: &mut usize) -> Result<String> {
    let start = *pos;
    while *pos < buf.len() && buf[*pos] != b'\n' {
        *pos += 1;
    }
    if *pos >= buf.len() {
        return Err(Error::Checkpoint("unexpected end of file in text line".into()));
    }
    let line = std::str::from_utf8(&buf[start..*pos])
        .map_err(|_| Error::Checkpoint("non-UTF-8 text line".into()))?
        .to_string();
    *pos += 1;
    Ok(line)
}
