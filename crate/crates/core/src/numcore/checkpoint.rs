//! Flat binary checkpoint of named parameter tensors.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic      4 bytes   "PTCK"
//! version    u32       1
//! meta_len   u32       followed by meta_len bytes of UTF-8 (JSON)
//! count      u32       number of tensors
//! per tensor:
//!   name_len u16, name bytes (UTF-8)
//!   dtype    u8        4 = f32, 8 = f64
//!   ndim     u8        followed by ndim u32 dimensions
//!   data     product(dims) values of the given dtype
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::params::ParamStore;
use super::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PTCK";
pub const VERSION: u32 = 1;
const MAX_NDIM: u8 = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DType {
    F32,
    F64,
}

impl DType {
    fn code(self) -> u8 {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("truncated checkpoint at byte {0}")]
    Truncated(usize),
    #[error("invalid utf-8 in {0}")]
    Utf8(&'static str),
    #[error("unknown dtype code {0}")]
    DType(u8),
    #[error("tensor rank {0} exceeds limit")]
    Rank(u8),
    #[error("duplicate tensor name {0:?}")]
    Duplicate(String),
    #[error("{0} trailing bytes after last tensor")]
    Trailing(usize),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Parameters plus a free-form metadata string (model config, vocabulary).
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: String,
    pub params: ParamStore,
}

impl Checkpoint {
    pub fn encode(&self, dtype: DType) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.meta.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.as_bytes());
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(dtype.code());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &v in t.data() {
                match dtype {
                    DType::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                    DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
                }
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let meta_len = r.u32()? as usize;
        let meta = std::str::from_utf8(r.take(meta_len)?)
            .map_err(|_| CheckpointError::Utf8("metadata"))?
            .to_owned();
        let count = r.u32()?;
        let mut params = ParamStore::new();
        for _ in 0..count {
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| CheckpointError::Utf8("tensor name"))?
                .to_owned();
            let width = match r.u8()? {
                4 => 4usize,
                8 => 8usize,
                other => return Err(CheckpointError::DType(other)),
            };
            let ndim = r.u8()?;
            if ndim > MAX_NDIM {
                return Err(CheckpointError::Rank(ndim));
            }
            let mut shape = Vec::with_capacity(ndim as usize);
            let mut numel: usize = 1;
            for _ in 0..ndim {
                let d = r.u32()? as usize;
                numel = numel.checked_mul(d).ok_or(CheckpointError::Truncated(r.pos))?;
                shape.push(d);
            }
            let nbytes = numel.checked_mul(width).ok_or(CheckpointError::Truncated(r.pos))?;
            let raw = r.take(nbytes)?;
            let data: Vec<f64> = if width == 4 {
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
                    .collect()
            } else {
                raw.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                    .collect()
            };
            if params.id(&name).is_some() {
                return Err(CheckpointError::Duplicate(name));
            }
            let tensor = Tensor::new(shape, data).expect("length checked against shape");
            params.insert(&name, tensor);
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::Trailing(bytes.len() - r.pos));
        }
        Ok(Checkpoint { meta, params })
    }

    pub fn save(&self, path: &Path, dtype: DType) -> Result<(), CheckpointError> {
        fs::write(path, self.encode(dtype))?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).ok_or(CheckpointError::Truncated(self.pos))?;
        let slice = self
            .bytes
            .get(self.pos..end)
            .ok_or(CheckpointError::Truncated(self.pos))?;
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}
