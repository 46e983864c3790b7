//! `DESC1` descriptor matrices and their on-disk format.
//!
//! Layout (all little-endian):
//!
//! ```text
//! "DESC1" | rows: u64 | dim: u64 | rows * dim f32 values, row-major
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const DESC1_MAGIC: &[u8; 5] = b"DESC1";
pub const DESC1_HEADER_LEN: usize = 5 + 8 + 8;

/// `rows` descriptors of dimension `dim`, stored row-major at 32-bit precision.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorMatrix {
    rows: usize,
    dim: usize,
    values: Vec<f32>,
}

impl DescriptorMatrix {
    pub fn new(rows: usize, dim: usize, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::param("descriptor dimension must be at least 1"));
        }
        if rows.checked_mul(dim) != Some(values.len()) {
            return Err(Error::param(format!(
                "descriptor matrix {rows}x{dim} needs {} values, got {}",
                rows.saturating_mul(dim),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite descriptor value at index {i}")));
        }
        Ok(Self { rows, dim, values })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(0, dim, Vec::new())
    }

    /// Builds a matrix from f64 rows, rounding to f32.
    pub fn from_rows_f64<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self> {
        let mut values = Vec::with_capacity(rows.len() * dim);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != dim {
                return Err(Error::param(format!(
                    "row {i} has length {}, expected {dim}",
                    r.len()
                )));
            }
            values.extend(r.iter().map(|&v| v as f32));
        }
        Self::new(rows.len(), dim, values)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f32> {
        self.values
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, f32> {
        self.values.chunks_exact(self.dim)
    }

    /// Rows at `indices`, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            rows: indices.len(),
            dim: self.dim,
            values,
        }
    }

    /// Stacks matrices of equal dimension vertically.
    pub fn vstack(parts: &[DescriptorMatrix]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| Error::param("cannot stack an empty list of matrices"))?;
        let dim = first.dim;
        let mut values = Vec::with_capacity(parts.iter().map(|p| p.values.len()).sum());
        for p in parts {
            if p.dim != dim {
                return Err(Error::param(format!(
                    "cannot stack matrices of dimension {dim} and {}",
                    p.dim
                )));
            }
            values.extend_from_slice(&p.values);
        }
        Ok(Self {
            rows: values.len() / dim,
            dim,
            values,
        })
    }

    /// Column means in f64. Returns `None` for an empty matrix.
    pub fn column_mean(&self) -> Option<Vec<f64>> {
        if self.rows == 0 {
            return None;
        }
        let mut mean = vec![0.0; self.dim];
        for r in self.iter_rows() {
            for (m, &v) in mean.iter_mut().zip(r) {
                *m += v as f64;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        Some(mean)
    }
}

/// Serializes `m` into DESC1 bytes.
pub fn encode_descriptor_bytes(m: &DescriptorMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(DESC1_HEADER_LEN + m.values.len() * 4);
    out.extend_from_slice(DESC1_MAGIC);
    out.extend_from_slice(&(m.rows as u64).to_le_bytes());
    out.extend_from_slice(&(m.dim as u64).to_le_bytes());
    for v in &m.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses a DESC1 block from the start of `bytes`, returning the matrix and
/// the number of bytes consumed. `path` is used only for error messages.
pub fn decode_descriptor_bytes(bytes: &[u8], path: &Path) -> Result<(DescriptorMatrix, usize)> {
    if bytes.len() < DESC1_MAGIC.len() || &bytes[..DESC1_MAGIC.len()] != DESC1_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    let corrupt = |reason: String| Error::Corrupt {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < DESC1_HEADER_LEN {
        return Err(corrupt("truncated header".into()));
    }
    let rows = u64::from_le_bytes(bytes[5..13].try_into().unwrap());
    let dim = u64::from_le_bytes(bytes[13..21].try_into().unwrap());
    if dim == 0 {
        return Err(corrupt("zero dimension".into()));
    }
    let count = rows
        .checked_mul(dim)
        .and_then(|c| usize::try_from(c).ok())
        .ok_or_else(|| corrupt(format!("header {rows}x{dim} overflows")))?;
    let payload_len = count
        .checked_mul(4)
        .ok_or_else(|| corrupt(format!("header {rows}x{dim} overflows")))?;
    let payload = &bytes[DESC1_HEADER_LEN..];
    if payload.len() < payload_len {
        return Err(corrupt(format!(
            "header {rows}x{dim} needs {payload_len} payload bytes, found {}",
            payload.len()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for (i, chunk) in payload[..payload_len].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::InvalidValue {
                path: path.to_path_buf(),
                index: i,
            });
        }
        values.push(v);
    }
    let m = DescriptorMatrix {
        rows: rows as usize,
        dim: dim as usize,
        values,
    };
    Ok((m, DESC1_HEADER_LEN + payload_len))
}

pub fn write_descriptor_file(path: impl AsRef<Path>, m: &DescriptorMatrix) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_descriptor_bytes(m))
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Reads only the `(rows, dim)` header of a DESC1 file.
pub fn read_descriptor_header(path: impl AsRef<Path>) -> Result<(usize, usize)> {
    let path = path.as_ref();
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut header = [0u8; DESC1_HEADER_LEN];
    let got = file.read(&mut header).map_err(|e| Error::io(path, e))?;
    if got < DESC1_MAGIC.len() || &header[..5] != DESC1_MAGIC {
        return Err(Error::BadMagic {
            path: path.to_path_buf(),
        });
    }
    if got < DESC1_HEADER_LEN {
        file.read_exact(&mut header[got..]).map_err(|_| Error::Corrupt {
            path: path.to_path_buf(),
            reason: "truncated header".into(),
        })?;
    }
    let rows = u64::from_le_bytes(header[5..13].try_into().unwrap()) as usize;
    let dim = u64::from_le_bytes(header[13..21].try_into().unwrap()) as usize;
    Ok((rows, dim))
}

/// Reads a DESC1 file. Trailing bytes after the declared payload are rejected.
pub fn read_descriptor_file(path: impl AsRef<Path>) -> Result<DescriptorMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let (m, used) = decode_descriptor_bytes(&bytes, path)?;
    if used != bytes.len() {
        return Err(Error::Corrupt {
            path: path.to_path_buf(),
            reason: format!("{} trailing bytes", bytes.len() - used),
        });
    }
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn empty_matrix_is_header_only() {
        let dir = tmp();
        let p = dir.path().join("e.desc");
        write_descriptor_file(&p, &DescriptorMatrix::empty(4).unwrap()).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 21);
        let back = read_descriptor_file(&p).unwrap();
        assert_eq!(back.rows(), 0);
        assert_eq!(back.dim(), 4);
    }

    #[test]
    fn small_roundtrip_payload() {
        let dir = tmp();
        let p = dir.path().join("a.desc");
        let m = DescriptorMatrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        write_descriptor_file(&p, &m).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len() - DESC1_HEADER_LEN, 24);
        assert_eq!(&bytes[..5], b"DESC1");
        assert_eq!(read_descriptor_file(&p).unwrap(), m);
    }

    #[test]
    fn lcd_block_payload_size() {
        // one frame of 7x7 locations with 512 channels
        let expected_payload: usize = (0..49).map(|_| 512 * std::mem::size_of::<f32>()).sum();
        assert_eq!(expected_payload, 100_352);
        let m = DescriptorMatrix::new(49, 512, vec![0.5; 49 * 512]).unwrap();
        let bytes = encode_descriptor_bytes(&m);
        assert_eq!(bytes.len() - DESC1_HEADER_LEN, expected_payload);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tmp();
        let p = dir.path().join("bad.desc");
        let mut bytes = encode_descriptor_bytes(&DescriptorMatrix::new(1, 1, vec![1.0]).unwrap());
        bytes[..5].copy_from_slice(b"DESX1");
        std::fs::write(&p, bytes).unwrap();
        let err = read_descriptor_file(&p).unwrap_err();
        assert!(err.to_string().contains("not a DESC1 file"), "{err}");
    }

    #[test]
    fn truncated_payload_rejected() {
        let dir = tmp();
        let p = dir.path().join("short.desc");
        let full = encode_descriptor_bytes(&DescriptorMatrix::new(5, 4, vec![1.0; 20]).unwrap());
        // keep only 3 of the 5 declared rows
        std::fs::write(&p, &full[..DESC1_HEADER_LEN + 3 * 4 * 4]).unwrap();
        let err = read_descriptor_file(&p).unwrap_err();
        assert!(err.to_string().contains("corrupt descriptor file"), "{err}");
    }

    #[test]
    fn non_finite_rejected() {
        let dir = tmp();
        let p = dir.path().join("nan.desc");
        let mut bytes = encode_descriptor_bytes(&DescriptorMatrix::new(1, 2, vec![1.0, 2.0]).unwrap());
        let n = bytes.len();
        bytes[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        std::fs::write(&p, bytes).unwrap();
        let err = read_descriptor_file(&p).unwrap_err();
        assert!(err.to_string().contains("invalid descriptor value"), "{err}");
    }

    #[test]
    fn missing_file_names_path() {
        let err = read_descriptor_file("/nonexistent/x.desc").unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.desc"));
    }

    #[test]
    fn constructor_checks_invariants() {
        assert!(DescriptorMatrix::new(2, 0, vec![]).is_err());
        assert!(DescriptorMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DescriptorMatrix::new(1, 2, vec![1.0, f32::INFINITY]).is_err());
    }

    proptest! {
        #[test]
        fn roundtrip_is_identity(
            (rows, dim, values) in (0usize..=100, 1usize..=64).prop_flat_map(|(r, d)| {
                (Just(r), Just(d), proptest::collection::vec(-1e30f32..1e30f32, r * d))
            })
        ) {
            let m = DescriptorMatrix::new(rows, dim, values).unwrap();
            let bytes = encode_descriptor_bytes(&m);
            let (back, used) = decode_descriptor_bytes(&bytes, Path::new("mem")).unwrap();
            prop_assert_eq!(used, bytes.len());
            prop_assert_eq!(back.values().len(), m.values().len());
            for (a, b) in back.values().iter().zip(m.values()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
