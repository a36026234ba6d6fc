//! Binary checkpoint format. All integers and floats are little-endian.
//!
//! ```text
//! magic        8 bytes   "PURGECKP"
//! format       u32       CHECKPOINT_FORMAT
//! V            u32       vocabulary size
//! k            u32       context order
//! rows         u64       number of context rows
//! vocabulary   V × (u32 byte length, UTF-8 bytes), in id order
//! fallback     V × f64
//! context rows rows × (k × u32 context ids, V × f64 logits), ascending by ids
//! step         u64       training step the parameters were taken at
//! seed         u64       root seed of the producing run
//! config hash  u32 byte length, UTF-8 bytes
//! ```

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use super::{ContextKey, Policy};
use crate::corpus::Vocabulary;
use crate::error::{Error, Result};
use crate::seed::sha256_hex;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"PURGECKP";
pub const CHECKPOINT_FORMAT: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CheckpointMeta {
    pub step: u64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub vocab: Vocabulary,
    pub policy: Policy,
    pub meta: CheckpointMeta,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let p = &self.policy;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT.to_le_bytes());
        out.extend_from_slice(&(p.vocab_size() as u32).to_le_bytes());
        out.extend_from_slice(&(p.order() as u32).to_le_bytes());
        out.extend_from_slice(&(p.rows().len() as u64).to_le_bytes());
        for tok in self.vocab.tokens() {
            out.extend_from_slice(&(tok.len() as u32).to_le_bytes());
            out.extend_from_slice(tok.as_bytes());
        }
        for x in p.fallback() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        for (key, row) in p.rows() {
            for id in key.ids() {
                out.extend_from_slice(&id.to_le_bytes());
            }
            for x in row {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.meta.step.to_le_bytes());
        out.extend_from_slice(&self.meta.seed.to_le_bytes());
        out.extend_from_slice(&(self.meta.config_hash.len() as u32).to_le_bytes());
        out.extend_from_slice(self.meta.config_hash.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Format("not a checkpoint (bad magic)".into()));
        }
        let format = read_u32(&mut r)?;
        if format != CHECKPOINT_FORMAT {
            return Err(Error::Format(format!("unsupported checkpoint format {format}")));
        }
        let v = read_u32(&mut r)? as usize;
        let k = read_u32(&mut r)? as usize;
        let n_rows = read_u64(&mut r)? as usize;
        if k == 0 {
            return Err(Error::Format("context order 0".into()));
        }
        let mut tokens = Vec::with_capacity(v);
        for _ in 0..v {
            tokens.push(read_string(&mut r)?);
        }
        let vocab = Vocabulary::from_tokens(tokens)?;
        let fallback = read_row(&mut r, v)?;
        let mut rows = BTreeMap::new();
        for _ in 0..n_rows {
            let ids = (0..k)
                .map(|_| {
                    let id = read_u32(&mut r)?;
                    if id as usize >= v {
                        return Err(Error::Format(format!("context id {id} out of range")));
                    }
                    Ok(id)
                })
                .collect::<Result<Vec<_>>>()?;
            rows.insert(ContextKey::new(ids), read_row(&mut r, v)?);
        }
        let step = read_u64(&mut r)?;
        let seed = read_u64(&mut r)?;
        let config_hash = read_string(&mut r)?;
        if !r.is_empty() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        let policy = Policy::from_parts(k, &vocab, rows, fallback);
        if !policy.is_finite() {
            return Err(Error::Format("non-finite parameter in checkpoint".into()));
        }
        Ok(Self {
            vocab,
            policy,
            meta: CheckpointMeta { step, seed, config_hash },
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// SHA-256 of the serialized checkpoint.
    pub fn hash(&self) -> String {
        sha256_hex(&self.to_bytes())
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format("truncated checkpoint".into()))
}

fn read_u32(r: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64(r: &mut &[u8]) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_string(r: &mut &[u8]) -> Result<String> {
    let len = read_u32(r)? as usize;
    if len > r.len() {
        return Err(Error::Format("truncated checkpoint".into()));
    }
    let mut b = vec![0u8; len];
    read_exact(r, &mut b)?;
    String::from_utf8(b).map_err(|_| Error::Format("invalid UTF-8 in checkpoint".into()))
}

fn read_row(r: &mut &[u8], v: usize) -> Result<Vec<f64>> {
    (0..v)
        .map(|_| {
            let mut b = [0u8; 8];
            read_exact(r, &mut b)?;
            Ok(f64::from_le_bytes(b))
        })
        .collect()
}
