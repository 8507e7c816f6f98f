//! Binary model checkpoints.
//!
//! Layout: the 8-byte magic `WCPARSE1`, a little-endian `u64` header length,
//! a JSON header (dimensions, vocabulary, run metadata, tensor names and
//! shapes), then every tensor's values as little-endian `f64` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelDims, ParserParams, Tensors, TENSOR_NAMES};
use crate::conllu::Vocab;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"WCPARSE1";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParserParams,
    pub vocab: Vocab,
    /// Free-form run description, usually the resolved run config.
    pub metadata: serde_json::Value,
}

#[derive(Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    dims: ModelDims,
    vocab: Vocab,
    metadata: serde_json::Value,
    tensors: Vec<TensorHeader>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn write_checkpoint<W: Write>(mut out: W, ckpt: &Checkpoint) -> std::io::Result<()> {
    let t = &ckpt.params.tensors;
    let header = Header {
        dims: ckpt.params.dims,
        vocab: ckpt.vocab.clone(),
        metadata: ckpt.metadata.clone(),
        tensors: TENSOR_NAMES
            .iter()
            .zip(t.shapes())
            .map(|(name, shape)| TensorHeader {
                name: name.to_string(),
                shape,
            })
            .collect(),
    };
    let header = serde_json::to_vec(&header)?;
    out.write_all(MAGIC)?;
    out.write_all(&(header.len() as u64).to_le_bytes())?;
    out.write_all(&header)?;
    for slice in t.slices() {
        for x in slice {
            out.write_all(&x.to_le_bytes())?;
        }
    }
    out.flush()
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<Checkpoint> {
    let mut magic = [0u8; 8];
    input
        .read_exact(&mut magic)
        .map_err(|_| bad("truncated file"))?;
    if &magic != MAGIC {
        return Err(bad("not a parser checkpoint"));
    }
    let mut len = [0u8; 8];
    input
        .read_exact(&mut len)
        .map_err(|_| bad("truncated header"))?;
    let len = u64::from_le_bytes(len) as usize;
    let mut header = vec![0u8; len];
    input
        .read_exact(&mut header)
        .map_err(|_| bad("truncated header"))?;
    let header: Header =
        serde_json::from_slice(&header).map_err(|e| bad(format!("header: {e}")))?;

    let n_labels = header.vocab.n_labels();
    let mut tensors = Tensors::zeros(
        &header.dims,
        header.vocab.n_words(),
        header.vocab.n_upos(),
        n_labels,
    );
    let expected = tensors.shapes();
    if header.tensors.len() != TENSOR_NAMES.len() {
        return Err(bad("unexpected tensor count"));
    }
    for ((declared, shape), name) in header.tensors.iter().zip(&expected).zip(TENSOR_NAMES) {
        if declared.name != name || &declared.shape != shape {
            return Err(bad(format!(
                "tensor `{}` {:?} does not match expected `{name}` {shape:?}",
                declared.name, declared.shape
            )));
        }
    }
    let mut buf = [0u8; 8];
    for slice in tensors.slices_mut() {
        for x in slice.iter_mut() {
            input
                .read_exact(&mut buf)
                .map_err(|_| bad("truncated tensor data"))?;
            *x = f64::from_le_bytes(buf);
        }
    }
    Ok(Checkpoint {
        params: ParserParams {
            dims: header.dims,
            tensors,
        },
        vocab: header.vocab,
        metadata: header.metadata,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, ckpt).map_err(|e| Error::io(path, e))?;
    crate::io::write_atomic(path, &bytes)
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
