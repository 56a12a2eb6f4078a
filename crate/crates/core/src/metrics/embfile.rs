//! Precomputed embedding files.
//!
//! Text layout (UTF-8, `\n` line endings):
//!
//! ```text
//! tunelab-embeddings 1
//! dim <d>
//! count <n>
//! tag <free text to end of line>
//! <n lines of d decimal floats separated by single spaces>
//! ```
//!
//! Binary layout (little-endian):
//!
//! ```text
//! bytes 0..8    magic "TLEMBED\0"
//! u32           version = 1
//! u32           dim
//! u64           count
//! u32           tag length in bytes, then the UTF-8 tag
//! f64 × d × n   row-major vectors
//! ```
//!
//! [`read_embeddings`] picks the layout from the first bytes.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::similarity::EmbeddingSet;
use crate::error::{Error, Result};

pub const TEXT_MAGIC: &str = "tunelab-embeddings";
pub const BINARY_MAGIC: &[u8; 8] = b"TLEMBED\0";
pub const EMBEDDING_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingEncoding {
    Text,
    Binary,
}

fn load_err(path: &Path, field: &str, detail: impl Into<String>) -> Error {
    Error::Load {
        path: path.to_path_buf(),
        field: field.to_string(),
        detail: detail.into(),
    }
}

pub fn encode_text(set: &EmbeddingSet) -> String {
    let mut s = format!(
        "{TEXT_MAGIC} {EMBEDDING_FORMAT_VERSION}\ndim {}\ncount {}\ntag {}\n",
        set.dim().unwrap_or(0),
        set.len(),
        set.source.replace('\n', " ")
    );
    for v in &set.vectors {
        let row: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn encode_binary(set: &EmbeddingSet) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(BINARY_MAGIC);
    out.write_u32::<LittleEndian>(EMBEDDING_FORMAT_VERSION).unwrap();
    out.write_u32::<LittleEndian>(set.dim().unwrap_or(0) as u32).unwrap();
    out.write_u64::<LittleEndian>(set.len() as u64).unwrap();
    out.write_u32::<LittleEndian>(set.source.len() as u32).unwrap();
    out.write_all(set.source.as_bytes()).unwrap();
    for x in set.vectors.iter().flatten() {
        out.write_f64::<LittleEndian>(*x).unwrap();
    }
    out
}

fn header_field<'a>(path: &Path, line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| load_err(path, key, "missing header line"))?;
    line.strip_prefix(key)
        .and_then(|r| r.strip_prefix(' ').or(if r.is_empty() { Some("") } else { None }))
        .ok_or_else(|| load_err(path, key, format!("expected `{key} ...`, got {line:?}")))
}

pub fn decode_text(path: &Path, text: &str) -> Result<EmbeddingSet> {
    let mut lines = text.lines();
    let version = header_field(path, lines.next(), TEXT_MAGIC)?;
    if version.trim() != EMBEDDING_FORMAT_VERSION.to_string() {
        return Err(load_err(path, "version", format!("unsupported version {version:?}")));
    }
    let dim: usize = header_field(path, lines.next(), "dim")?
        .trim()
        .parse()
        .map_err(|e| load_err(path, "dim", format!("{e}")))?;
    let count: usize = header_field(path, lines.next(), "count")?
        .trim()
        .parse()
        .map_err(|e| load_err(path, "count", format!("{e}")))?;
    let tag = header_field(path, lines.next(), "tag")?.to_string();
    let mut vectors = Vec::with_capacity(count);
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| load_err(path, &format!("row {i}"), format!("{e}")))?;
        if row.len() != dim {
            return Err(load_err(
                path,
                &format!("row {i}"),
                format!("{} values, expected {dim}", row.len()),
            ));
        }
        vectors.push(row);
    }
    if vectors.len() != count {
        return Err(load_err(
            path,
            "count",
            format!("header says {count}, found {} rows", vectors.len()),
        ));
    }
    EmbeddingSet::new(vectors, tag).map_err(|e| load_err(path, "vectors", e.to_string()))
}

pub fn decode_binary(path: &Path, bytes: &[u8]) -> Result<EmbeddingSet> {
    let mut r = bytes;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|e| load_err(path, "magic", e.to_string()))?;
    if &magic != BINARY_MAGIC {
        return Err(load_err(path, "magic", "not a binary embedding file"));
    }
    let trunc = |field: &str, e: std::io::Error| load_err(path, field, format!("truncated: {e}"));
    let version = r.read_u32::<LittleEndian>().map_err(|e| trunc("version", e))?;
    if version != EMBEDDING_FORMAT_VERSION {
        return Err(load_err(path, "version", format!("unsupported version {version}")));
    }
    let dim = r.read_u32::<LittleEndian>().map_err(|e| trunc("dim", e))? as usize;
    let count = r.read_u64::<LittleEndian>().map_err(|e| trunc("count", e))? as usize;
    let tag_len = r.read_u32::<LittleEndian>().map_err(|e| trunc("tag", e))? as usize;
    if tag_len > r.len() {
        return Err(load_err(path, "tag", "truncated"));
    }
    let (tag_bytes, rest) = r.split_at(tag_len);
    let tag = String::from_utf8(tag_bytes.to_vec()).map_err(|e| load_err(path, "tag", e.to_string()))?;
    let expected = dim.checked_mul(count).and_then(|n| n.checked_mul(8));
    if expected != Some(rest.len()) {
        return Err(load_err(
            path,
            "vectors",
            format!("{} payload bytes for {count} × {dim} floats", rest.len()),
        ));
    }
    let mut r = rest;
    let mut vectors = Vec::with_capacity(count);
    for _ in 0..count {
        let mut row = Vec::with_capacity(dim);
        for _ in 0..dim {
            row.push(r.read_f64::<LittleEndian>().map_err(|e| trunc("vectors", e))?);
        }
        vectors.push(row);
    }
    EmbeddingSet::new(vectors, tag).map_err(|e| load_err(path, "vectors", e.to_string()))
}

pub fn write_embeddings(path: &Path, set: &EmbeddingSet, encoding: EmbeddingEncoding) -> Result<()> {
    let bytes = match encoding {
        EmbeddingEncoding::Text => encode_text(set).into_bytes(),
        EmbeddingEncoding::Binary => encode_binary(set),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        decode_binary(path, &bytes)
    } else {
        let text = std::str::from_utf8(&bytes).map_err(|e| load_err(path, "encoding", e.to_string()))?;
        decode_text(path, text)
    }
}
