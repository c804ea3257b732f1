//! Binary matrix files: one ASCII header line followed by row-major
//! little-endian `f32` values.
//!
//! | kind        | header                                 |
//! |-------------|----------------------------------------|
//! | descriptors | `BOWG-DESC v1 <count> <dim>`           |
//! | codebook    | `BOWG-CB v1 <k> <dim>`                 |
//! | inverter    | `BOWG-INV v1 <dim+1> <patch_size>`     |

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixKind {
    Descriptors,
    Codebook,
    Inverter,
}

impl MatrixKind {
    fn magic(self) -> &'static str {
        match self {
            MatrixKind::Descriptors => "BOWG-DESC",
            MatrixKind::Codebook => "BOWG-CB",
            MatrixKind::Inverter => "BOWG-INV",
        }
    }
}

/// Encodes a header and payload. For inverters `b` is the patch side and the
/// payload holds `a * b * b` values; otherwise it holds `a * b`.
pub fn encode_matrix(kind: MatrixKind, a: usize, b: usize, values: &[f32]) -> Vec<u8> {
    let header = format!("{} v1 {a} {b}\n", kind.magic());
    let mut out = Vec::with_capacity(header.len() + values.len() * 4);
    out.extend_from_slice(header.as_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_matrix(kind: MatrixKind, bytes: &[u8], path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::malformed(path, "missing header line"))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| Error::malformed(path, "header is not ASCII"))?;
    let fields: Vec<&str> = header.split(' ').collect();
    if fields.len() != 4 || fields[0] != kind.magic() || fields[1] != "v1" {
        return Err(Error::malformed(
            path,
            format!("expected '{} v1 <a> <b>', got '{header}'", kind.magic()),
        ));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::malformed(path, format!("bad header field '{s}'")))
    };
    let (a, b) = (parse(fields[2])?, parse(fields[3])?);
    let count = match kind {
        MatrixKind::Inverter => a * b * b,
        _ => a * b,
    };
    let payload = &bytes[nl + 1..];
    if payload.len() != count * 4 {
        return Err(Error::malformed(
            path,
            format!("expected {} payload bytes, found {}", count * 4, payload.len()),
        ));
    }
    let values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok((a, b, values))
}

pub(crate) fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))?;
    f.sync_all().map_err(|e| Error::io(path, e))
}

pub(crate) fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}
