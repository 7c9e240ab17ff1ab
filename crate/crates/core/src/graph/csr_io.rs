//! Binary CSR file format.
//!
//! ```text
//! magic    4 bytes  "NMD1"
//! version  u64      1
//! n        u64      |V|
//! entries  u64      2|E|
//! offsets  (n+1) x u64
//! targets  entries x u64
//! weights  entries x f32
//! ```
//! All integers and floats are little-endian. Rows must be strictly sorted.

use std::fs;
use std::path::Path;

use super::{GlobalGraph, GraphError};
use crate::error::Error;
use crate::VertexId;

pub const CSR_MAGIC: [u8; 4] = *b"NMD1";
pub const CSR_VERSION: u64 = 1;
const HEADER_LEN: u64 = 4 + 3 * 8;

/// Exact byte length of the encoding of a graph with `n` vertices and
/// `entries` CSR entries, or `None` on overflow.
pub fn encoded_len(n: u64, entries: u64) -> Option<u64> {
    let offsets = n.checked_add(1)?.checked_mul(8)?;
    let targets = entries.checked_mul(8)?;
    let weights = entries.checked_mul(4)?;
    HEADER_LEN
        .checked_add(offsets)?
        .checked_add(targets)?
        .checked_add(weights)
}

pub fn encode_binary_csr(graph: &GlobalGraph) -> Vec<u8> {
    let n = graph.num_vertices() as u64;
    let entries = graph.num_entries() as u64;
    let mut out = Vec::with_capacity(encoded_len(n, entries).unwrap_or(0) as usize);
    out.extend_from_slice(&CSR_MAGIC);
    out.extend_from_slice(&CSR_VERSION.to_le_bytes());
    out.extend_from_slice(&n.to_le_bytes());
    out.extend_from_slice(&entries.to_le_bytes());
    for &o in graph.row_offsets() {
        out.extend_from_slice(&o.to_le_bytes());
    }
    for &v in graph.all_neighbors() {
        out.extend_from_slice(&(v as u64).to_le_bytes());
    }
    for &w in graph.all_weights() {
        out.extend_from_slice(&w.to_le_bytes());
    }
    out
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn u64(&mut self) -> Result<u64, GraphError> {
        let end = self.pos + 8;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| truncated(self.pos))?;
        self.pos = end;
        Ok(u64::from_le_bytes(chunk.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, GraphError> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or_else(|| truncated(self.pos))?;
        self.pos = end;
        Ok(f32::from_le_bytes(chunk.try_into().unwrap()))
    }
}

fn truncated(offset: usize) -> GraphError {
    GraphError::Format {
        offset: offset as u64,
        message: "unexpected end of data".into(),
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> GraphError {
    GraphError::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

/// Decodes and validates a binary CSR image. Never panics on malformed input.
pub fn decode_binary_csr(bytes: &[u8]) -> Result<GlobalGraph, GraphError> {
    if bytes.len() < 4 {
        return Err(truncated(bytes.len()));
    }
    if bytes[..4] != CSR_MAGIC {
        return Err(format_err(0, "bad magic"));
    }
    let mut cur = Cursor { bytes, pos: 4 };
    let version = cur.u64()?;
    if version != CSR_VERSION {
        return Err(format_err(4, format!("unsupported version {version}")));
    }
    let n = cur.u64()?;
    let entries = cur.u64()?;
    if n > VertexId::MAX as u64 {
        return Err(format_err(12, format!("vertex count {n} exceeds supported range")));
    }
    let expected = encoded_len(n, entries)
        .ok_or_else(|| format_err(12, "header sizes overflow"))?;
    let actual = bytes.len() as u64;
    if actual < expected {
        return Err(format_err(actual as usize, format!("truncated: header predicts {expected} bytes")));
    }
    if actual > expected {
        return Err(format_err(expected as usize, "trailing bytes after weights"));
    }

    let (n, entries) = (n as usize, entries as usize);
    let offsets_at = cur.pos;
    let mut row_offsets = Vec::with_capacity(n + 1);
    for i in 0..=n {
        let o = cur.u64()?;
        let at = offsets_at + 8 * i;
        if i == 0 && o != 0 {
            return Err(format_err(at, "first row offset must be 0"));
        }
        if i > 0 && o < row_offsets[i - 1] {
            return Err(format_err(at, "row offsets decrease"));
        }
        row_offsets.push(o);
    }
    if row_offsets[n] != entries as u64 {
        return Err(format_err(offsets_at + 8 * n, "last row offset differs from entry count"));
    }
    let targets_at = cur.pos;
    let mut neighbors = Vec::with_capacity(entries);
    for i in 0..entries {
        let v = cur.u64()?;
        if v >= n as u64 {
            return Err(format_err(targets_at + 8 * i, format!("neighbor {v} out of range")));
        }
        neighbors.push(v as VertexId);
    }
    let weights_at = cur.pos;
    let mut weights = Vec::with_capacity(entries);
    for i in 0..entries {
        let w = cur.f32()?;
        if !w.is_finite() || w < 0.0 {
            return Err(format_err(weights_at + 4 * i, format!("invalid weight {w}")));
        }
        weights.push(w);
    }
    GlobalGraph::from_csr(row_offsets, neighbors, weights, None).map_err(|e| match e {
        GraphError::Invalid(msg) => format_err(offsets_at, msg),
        other => other,
    })
}

pub fn write_binary_csr(graph: &GlobalGraph, path: impl AsRef<Path>) -> Result<(), Error> {
    let path = path.as_ref();
    fs::write(path, encode_binary_csr(graph)).map_err(|e| Error::io(path, e))
}

pub fn read_binary_csr(path: impl AsRef<Path>) -> Result<GlobalGraph, Error> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_binary_csr(&bytes)?)
}
