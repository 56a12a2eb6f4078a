//! Binary checkpoint format.
//!
//! ```text
//! magic    8 bytes  "TUNELAB\0"
//! version  u32 LE
//! "META"   4 bytes, then u64 LE length, then that many bytes of UTF-8 JSON
//! "TENS"   4 bytes, then u32 LE tensor count, then per tensor:
//!          u32 LE name length, name bytes (UTF-8),
//!          u32 LE rank, rank × u64 LE dims,
//!          product(dims) × f64 LE values (row-major)
//! ```
//!
//! The JSON carries the model config, the vocabulary, the trainable-row
//! flags, and a free-form `extra` object. All floating-point state lives in
//! the tensor section so it roundtrips bit-exactly.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::denoiser::Denoiser;
use super::model::{ModelConfig, ModelState};
use super::schedule::make_schedule;
use crate::codec::{Codec, NormStats};
use crate::error::{Error, Result};
use crate::text::{EmbeddingTable, TextEncoder, Vocab};

pub const MAGIC: &[u8; 8] = b"TUNELAB\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Meta {
    config: ModelConfig,
    vocab: Vocab,
    trainable_rows: Vec<bool>,
    #[serde(default)]
    extra: serde_json::Value,
}

struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn io_fmt(e: std::io::Error) -> Error {
    fmt_err(format!("truncated or unreadable checkpoint: {e}"))
}

/// Serialize a model plus arbitrary JSON metadata.
pub fn write_checkpoint<W: Write>(model: &ModelState, extra: serde_json::Value, mut w: W) -> Result<()> {
    let meta = Meta {
        config: model.config.clone(),
        vocab: model.vocab.clone(),
        trainable_rows: model.table.trainable.clone(),
        extra,
    };
    let json = serde_json::to_vec(&meta).map_err(|e| fmt_err(e.to_string()))?;
    let mut tensors: Vec<(String, Vec<usize>, &[f64])> = Vec::new();
    let d = &model.denoiser;
    tensors.push(("denoiser.w1".into(), d.w1.shape().to_vec(), d.w1.as_slice().unwrap()));
    tensors.push(("denoiser.b1".into(), d.b1.shape().to_vec(), d.b1.as_slice().unwrap()));
    tensors.push(("denoiser.w2".into(), d.w2.shape().to_vec(), d.w2.as_slice().unwrap()));
    tensors.push(("denoiser.b2".into(), d.b2.shape().to_vec(), d.b2.as_slice().unwrap()));
    tensors.push(("denoiser.w3".into(), d.w3.shape().to_vec(), d.w3.as_slice().unwrap()));
    let t = &model.text;
    tensors.push(("text.w1".into(), t.w1.shape().to_vec(), t.w1.as_slice().unwrap()));
    tensors.push(("text.b1".into(), t.b1.shape().to_vec(), t.b1.as_slice().unwrap()));
    tensors.push(("text.w2".into(), t.w2.shape().to_vec(), t.w2.as_slice().unwrap()));
    tensors.push(("text.b2".into(), t.b2.shape().to_vec(), t.b2.as_slice().unwrap()));
    let e = &model.table.vectors;
    tensors.push(("embedding.table".into(), e.shape().to_vec(), e.as_slice().unwrap()));
    let norm = model.codec.norm();
    tensors.push(("codec.norm.mean".into(), vec![norm.mean.len()], &norm.mean));
    tensors.push(("codec.norm.std".into(), vec![norm.std.len()], &norm.std));

    let mut inner = || -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
        w.write_all(b"META")?;
        w.write_u64::<LittleEndian>(json.len() as u64)?;
        w.write_all(&json)?;
        w.write_all(b"TENS")?;
        w.write_u32::<LittleEndian>(tensors.len() as u32)?;
        for (name, dims, data) in &tensors {
            w.write_u32::<LittleEndian>(name.len() as u32)?;
            w.write_all(name.as_bytes())?;
            w.write_u32::<LittleEndian>(dims.len() as u32)?;
            for &dim in dims {
                w.write_u64::<LittleEndian>(dim as u64)?;
            }
            for &v in *data {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
        w.flush()
    };
    inner().map_err(|e| fmt_err(format!("failed to write checkpoint: {e}")))
}

/// Parse a checkpoint, returning the model and its `extra` metadata.
pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ModelState, serde_json::Value)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io_fmt)?;
    if &magic != MAGIC {
        return Err(fmt_err("not a checkpoint (bad magic)"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_fmt)?;
    if version != FORMAT_VERSION {
        return Err(Error::Unsupported(format!("checkpoint format version {version}")));
    }
    expect_tag(&mut r, b"META")?;
    let len = r.read_u64::<LittleEndian>().map_err(io_fmt)? as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io_fmt)?;
    let meta: Meta = serde_json::from_slice(&json).map_err(|e| fmt_err(format!("bad metadata: {e}")))?;
    expect_tag(&mut r, b"TENS")?;
    let count = r.read_u32::<LittleEndian>().map_err(io_fmt)?;
    let mut tensors = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.read_u32::<LittleEndian>().map_err(io_fmt)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name).map_err(io_fmt)?;
        let name = String::from_utf8(name).map_err(|_| fmt_err("tensor name is not UTF-8"))?;
        let rank = r.read_u32::<LittleEndian>().map_err(io_fmt)? as usize;
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            dims.push(r.read_u64::<LittleEndian>().map_err(io_fmt)? as usize);
        }
        let n: usize = dims.iter().product();
        let mut data = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut data).map_err(io_fmt)?;
        tensors.insert(name, Tensor { dims, data });
    }

    let mut take2 = |name: &str| -> Result<Array2<f64>> {
        let t = tensors
            .remove(name)
            .ok_or_else(|| fmt_err(format!("missing tensor {name}")))?;
        if t.dims.len() != 2 {
            return Err(fmt_err(format!("tensor {name} should be rank 2")));
        }
        Array2::from_shape_vec((t.dims[0], t.dims[1]), t.data).map_err(|e| fmt_err(e.to_string()))
    };
    let w1 = take2("denoiser.w1")?;
    let w2 = take2("denoiser.w2")?;
    let w3 = take2("denoiser.w3")?;
    let tw1 = take2("text.w1")?;
    let tw2 = take2("text.w2")?;
    let table = take2("embedding.table")?;
    let mut take1 = |name: &str| -> Result<Vec<f64>> {
        let t = tensors
            .remove(name)
            .ok_or_else(|| fmt_err(format!("missing tensor {name}")))?;
        if t.dims.len() != 1 {
            return Err(fmt_err(format!("tensor {name} should be rank 1")));
        }
        Ok(t.data)
    };
    let b1 = Array1::from(take1("denoiser.b1")?);
    let b2 = Array1::from(take1("denoiser.b2")?);
    let tb1 = Array1::from(take1("text.b1")?);
    let tb2 = Array1::from(take1("text.b2")?);
    let mean = take1("codec.norm.mean")?;
    let std = take1("codec.norm.std")?;

    let Meta {
        config,
        vocab,
        trainable_rows,
        extra,
    } = meta;
    if table.nrows() != vocab.len() || trainable_rows.len() != vocab.len() {
        return Err(fmt_err("embedding table does not match vocabulary"));
    }
    let shape = config.denoiser_shape();
    if w1.shape() != [shape.input_dim(), shape.hidden] || w3.shape() != [shape.hidden, shape.latent_dim] {
        return Err(fmt_err("denoiser tensors do not match the model config"));
    }
    let schedule = make_schedule(config.n_steps, config.beta_1, config.beta_n)?;
    let codec = Codec::new(config.codec.clone(), NormStats { mean, std })?;
    let model = ModelState {
        schedule,
        denoiser: Denoiser { w1, b1, w2, b2, w3 },
        text: TextEncoder {
            w1: tw1,
            b1: tb1,
            w2: tw2,
            b2: tb2,
        },
        vocab,
        table: EmbeddingTable {
            vectors: table,
            trainable: trainable_rows,
        },
        codec,
        config,
    };
    Ok((model, extra))
}

fn expect_tag<R: Read>(r: &mut R, tag: &[u8; 4]) -> Result<()> {
    let mut got = [0u8; 4];
    r.read_exact(&mut got).map_err(io_fmt)?;
    if &got != tag {
        return Err(fmt_err(format!(
            "expected section {}, found {:?}",
            String::from_utf8_lossy(tag),
            String::from_utf8_lossy(&got)
        )));
    }
    Ok(())
}

pub fn save_checkpoint(model: &ModelState, extra: serde_json::Value, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, extra, std::io::BufWriter::new(file))
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelState, serde_json::Value)> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
