//! `SGA1` checkpoint files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "SGA1" | version u32
//! c_v d_q c_s h w att_dim mlp_hidden k : u32 | dropout f32 | attention u32
//! vocabulary count u32, then per entry: len u32, UTF-8 bytes, frequency u64
//! parameters as f32 in the order of `PARAM_NAMES`, shapes implied by dims
//! ```

use thiserror::Error;

use super::model::{param_shapes, AttentionMode, ModelDims, ModelParams};
use super::tensor::Tensor;
use crate::qagen::AnswerVocabulary;

pub const MAGIC: &[u8; 4] = b"SGA1";
pub const VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq)]
pub enum CheckpointError {
    #[error("not an SGA1 checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("vocabulary entry is not UTF-8")]
    BadUtf8,
    #[error("unknown attention mode {0}")]
    BadAttention(u32),
    #[error("vocabulary has {vocab} answers but the model has {k} outputs")]
    VocabularyMismatch { vocab: usize, k: usize },
    #[error("{0} trailing bytes after parameters")]
    Trailing(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub dims: ModelDims,
    pub vocabulary: AnswerVocabulary,
    pub params: ModelParams,
}

impl Checkpoint {
    pub fn new(dims: ModelDims, vocabulary: AnswerVocabulary, params: ModelParams) -> Result<Self, CheckpointError> {
        if vocabulary.len() != dims.k {
            return Err(CheckpointError::VocabularyMismatch {
                vocab: vocabulary.len(),
                k: dims.k,
            });
        }
        params.check_dims(&dims).expect("params match dims");
        Ok(Checkpoint {
            dims,
            vocabulary,
            params,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        let u32_ = |out: &mut Vec<u8>, v: u32| out.extend_from_slice(&v.to_le_bytes());
        u32_(&mut out, VERSION);
        let d = &self.dims;
        for v in [d.c_v, d.d_q, d.c_s, d.h, d.w, d.att_dim, d.mlp_hidden, d.k] {
            u32_(&mut out, v as u32);
        }
        out.extend_from_slice(&d.dropout.to_le_bytes());
        u32_(&mut out, d.attention.code());
        u32_(&mut out, self.vocabulary.len() as u32);
        for (answer, freq) in self.vocabulary.entries() {
            u32_(&mut out, answer.len() as u32);
            out.extend_from_slice(answer.as_bytes());
            out.extend_from_slice(&freq.to_le_bytes());
        }
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut d = [0usize; 8];
        for v in &mut d {
            *v = r.u32()? as usize;
        }
        let dropout = f32::from_le_bytes(r.take(4)?.try_into().unwrap());
        let code = r.u32()?;
        let attention = AttentionMode::from_code(code).ok_or(CheckpointError::BadAttention(code))?;
        let dims = ModelDims {
            c_v: d[0],
            d_q: d[1],
            c_s: d[2],
            h: d[3],
            w: d[4],
            att_dim: d[5],
            mlp_hidden: d[6],
            k: d[7],
            dropout,
            attention,
        };
        let n = r.u32()? as usize;
        let mut entries = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let len = r.u32()? as usize;
            let s = std::str::from_utf8(r.take(len)?).map_err(|_| CheckpointError::BadUtf8)?;
            let freq = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
            entries.push((s.to_string(), freq));
        }
        let vocabulary = AnswerVocabulary::from_entries(entries);
        if vocabulary.len() != dims.k {
            return Err(CheckpointError::VocabularyMismatch {
                vocab: vocabulary.len(),
                k: dims.k,
            });
        }
        let mut tensors = Vec::with_capacity(10);
        for shape in param_shapes(&dims) {
            let count = shape[0].checked_mul(shape[1]).ok_or(CheckpointError::Truncated)?;
            let raw = r.take(count.checked_mul(4).ok_or(CheckpointError::Truncated)?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(Tensor::new(&shape, data));
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }
        Ok(Checkpoint {
            dims,
            vocabulary,
            params: ModelParams::from_tensors(tensors),
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated)?;
        let s = self.bytes.get(self.pos..end).ok_or(CheckpointError::Truncated)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
