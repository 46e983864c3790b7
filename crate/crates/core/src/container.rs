//! Model container: a JSON header indexing a sequence of DESC1 blocks.
//!
//! ```text
//! "DPAK1" | header_len: u64 LE | header JSON (header_len bytes) | DESC1 blocks...
//! ```
//!
//! The header is `{"model": <kind>, "meta": {...}, "blocks": [{"name", "rows", "dim"}, ...]}`
//! and the blocks follow in the listed order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datamodel::{decode_descriptor_bytes, encode_descriptor_bytes, DescriptorMatrix};
use crate::error::{Error, Result};

pub const PACK_MAGIC: &[u8; 5] = b"DPAK1";

#[derive(Debug, Serialize, Deserialize)]
struct BlockEntry {
    name: String,
    rows: usize,
    dim: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    model: String,
    meta: serde_json::Value,
    blocks: Vec<BlockEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelPack {
    pub model: String,
    pub meta: serde_json::Value,
    pub blocks: Vec<(String, DescriptorMatrix)>,
}

impl ModelPack {
    pub fn new(model: impl Into<String>, meta: serde_json::Value) -> Self {
        Self {
            model: model.into(),
            meta,
            blocks: Vec::new(),
        }
    }

    pub fn with_block(mut self, name: impl Into<String>, m: DescriptorMatrix) -> Self {
        self.blocks.push((name.into(), m));
        self
    }

    pub fn block(&self, name: &str) -> Option<&DescriptorMatrix> {
        self.blocks.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model.clone(),
            meta: self.meta.clone(),
            blocks: self
                .blocks
                .iter()
                .map(|(name, m)| BlockEntry {
                    name: name.clone(),
                    rows: m.rows(),
                    dim: m.dim(),
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let mut out = Vec::new();
        out.extend_from_slice(PACK_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in &self.blocks {
            out.extend_from_slice(&encode_descriptor_bytes(m));
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::Container {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        if bytes.len() < 13 || &bytes[..5] != PACK_MAGIC {
            return Err(bad("missing DPAK1 magic"));
        }
        let len = u64::from_le_bytes(bytes[5..13].try_into().unwrap()) as usize;
        let body = &bytes[13..];
        if body.len() < len {
            return Err(bad("truncated header"));
        }
        let header: Header = serde_json::from_slice(&body[..len]).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        let mut rest = &body[len..];
        let mut blocks = Vec::with_capacity(header.blocks.len());
        for entry in header.blocks {
            let (m, used) = decode_descriptor_bytes(rest, path)?;
            if m.rows() != entry.rows || m.dim() != entry.dim {
                return Err(bad(&format!("block `{}` shape disagrees with header", entry.name)));
            }
            blocks.push((entry.name, m));
            rest = &rest[used..];
        }
        if !rest.is_empty() {
            return Err(bad("trailing bytes after last block"));
        }
        Ok(Self {
            model: header.model,
            meta: header.meta,
            blocks,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    /// Checks the model tag and fetches a named block.
    pub(crate) fn expect(&self, model: &str, path: &Path) -> Result<()> {
        if self.model != model {
            return Err(Error::Container {
                path: path.to_path_buf(),
                reason: format!("expected a `{model}` model, found `{}`", self.model),
            });
        }
        Ok(())
    }

    pub(crate) fn require(&self, name: &str, path: &Path) -> Result<&DescriptorMatrix> {
        self.block(name).ok_or_else(|| Error::Container {
            path: path.to_path_buf(),
            reason: format!("missing block `{name}`"),
        })
    }

    pub(crate) fn meta_usize(&self, key: &str, path: &Path) -> Result<usize> {
        self.meta
            .get(key)
            .and_then(serde_json::Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Container {
                path: path.to_path_buf(),
                reason: format!("missing integer meta field `{key}`"),
            })
    }

    pub(crate) fn meta_f64(&self, key: &str, path: &Path) -> Result<f64> {
        self.meta
            .get(key)
            .and_then(serde_json::Value::as_f64)
            .ok_or_else(|| Error::Container {
                path: path.to_path_buf(),
                reason: format!("missing numeric meta field `{key}`"),
            })
    }
}

/// Rounds an f64 slice into a DESC1 block.
pub(crate) fn block_f64(rows: usize, dim: usize, values: &[f64]) -> Result<DescriptorMatrix> {
    DescriptorMatrix::new(rows, dim, values.iter().map(|&v| v as f32).collect())
}

pub(crate) fn block_values_f64(m: &DescriptorMatrix) -> Vec<f64> {
    m.values().iter().map(|&v| v as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn pack_roundtrip() {
        let pack = ModelPack::new("test", json!({"k": 3, "alpha": 0.2}))
            .with_block("a", DescriptorMatrix::new(1, 2, vec![1.0, 2.0]).unwrap())
            .with_block("b", DescriptorMatrix::new(2, 1, vec![3.0, 4.0]).unwrap());
        let bytes = pack.to_bytes();
        let back = ModelPack::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, pack);
        assert_eq!(back.meta_usize("k", Path::new("mem")).unwrap(), 3);
        assert!(ModelPack::from_bytes(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
    }
}
