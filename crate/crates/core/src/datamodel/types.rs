use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::descriptor::{read_descriptor_file, write_descriptor_file, DescriptorMatrix};
use crate::error::{Error, Result};

/// Tolerance on the unit-norm invariant of normalized encodings.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// One frame of last-pooling-layer activations, `side x side x channels`.
///
/// Values are stored location-major: the `channels` responses of spatial
/// location `(r, c)` occupy `values[(r * side + c) * channels..][..channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTensor {
    side: usize,
    channels: usize,
    frame_index: usize,
    values: Vec<f32>,
}

impl ActivationTensor {
    pub fn new(side: usize, channels: usize, frame_index: usize, values: Vec<f32>) -> Result<Self> {
        if side == 0 || channels == 0 {
            return Err(Error::param(format!(
                "activation tensor needs side >= 1 and channels >= 1, got {side}x{side}x{channels}"
            )));
        }
        let expected = side * side * channels;
        if values.len() != expected {
            return Err(Error::param(format!(
                "activation tensor {side}x{side}x{channels} needs {expected} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            side,
            channels,
            frame_index,
            values,
        })
    }

    /// Builds a tensor from channel-major (`channels x side x side`) values,
    /// the layout most frameworks emit.
    pub fn from_channel_major(
        side: usize,
        channels: usize,
        frame_index: usize,
        chw: &[f32],
    ) -> Result<Self> {
        if chw.len() != side * side * channels {
            return Err(Error::param(format!(
                "channel-major tensor {channels}x{side}x{side} needs {} values, got {}",
                side * side * channels,
                chw.len()
            )));
        }
        let loc = side * side;
        let mut values = vec![0.0; chw.len()];
        for m in 0..channels {
            for p in 0..loc {
                values[p * channels + m] = chw[m * loc + p];
            }
        }
        Self::new(side, channels, frame_index, values)
    }

    /// Splits a stacked pool5 matrix (`side^2 * F` rows of `channels`) into frames.
    pub fn frames_from_matrix(m: &DescriptorMatrix, side: usize) -> Result<Vec<Self>> {
        if side == 0 {
            return Err(Error::param("pool5 side must be at least 1"));
        }
        let per_frame = side * side;
        if !m.rows().is_multiple_of(per_frame) {
            return Err(Error::param(format!(
                "pool5 matrix has {} rows, not a multiple of {side}x{side}",
                m.rows()
            )));
        }
        let block = per_frame * m.dim();
        m.values()
            .chunks_exact(block)
            .enumerate()
            .map(|(f, chunk)| Self::new(side, m.dim(), f, chunk.to_vec()))
            .collect()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frame_index(&self) -> usize {
        self.frame_index
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Response of filter `m` at spatial location `(r, c)`.
    pub fn at(&self, r: usize, c: usize, m: usize) -> f32 {
        self.values[(r * self.side + c) * self.channels + m]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncodingKind {
    Objects1k,
    Avgpool,
    Vlad,
    Fisher,
    LcdVlad,
    LcdFisher,
    Fused,
    /// A vector computed outside this pipeline (e.g. a trajectory Fisher
    /// vector) and read verbatim from a 1xD descriptor file.
    Precomputed,
}

impl EncodingKind {
    pub const ALL: [EncodingKind; 8] = [
        EncodingKind::Objects1k,
        EncodingKind::Avgpool,
        EncodingKind::Vlad,
        EncodingKind::Fisher,
        EncodingKind::LcdVlad,
        EncodingKind::LcdFisher,
        EncodingKind::Fused,
        EncodingKind::Precomputed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EncodingKind::Objects1k => "objects1k",
            EncodingKind::Avgpool => "avgpool",
            EncodingKind::Vlad => "vlad",
            EncodingKind::Fisher => "fisher",
            EncodingKind::LcdVlad => "lcd-vlad",
            EncodingKind::LcdFisher => "lcd-fisher",
            EncodingKind::Fused => "fused",
            EncodingKind::Precomputed => "precomputed",
        }
    }

    /// Kinds whose final step is L2 normalization.
    pub fn is_normalized(self) -> bool {
        matches!(
            self,
            EncodingKind::Vlad | EncodingKind::Fisher | EncodingKind::LcdVlad | EncodingKind::LcdFisher
        )
    }
}

impl fmt::Display for EncodingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EncodingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EncodingKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::param(format!("unknown encoding kind `{s}`")))
    }
}

/// A fixed-length per-video feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    kind: EncodingKind,
    values: Vec<f64>,
    source: String,
}

impl Encoding {
    pub fn new(kind: EncodingKind, values: Vec<f64>, source: impl Into<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("encoding must have at least one component"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::param(format!("non-finite encoding component at {i}")));
        }
        if kind.is_normalized() {
            let norm = l2_norm(&values);
            if norm != 0.0 && (norm - 1.0).abs() > UNIT_NORM_TOL {
                return Err(Error::param(format!(
                    "{kind} encoding must have unit L2 norm or be zero, got norm {norm}"
                )));
            }
        }
        Ok(Self {
            kind,
            values,
            source: source.into(),
        })
    }

    pub fn kind(&self) -> EncodingKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> &str {
        &self.source
    }
}

pub(crate) fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Serialize, Deserialize)]
struct EncodingSidecar {
    kind: EncodingKind,
    dim: usize,
    source: String,
}

/// Path of the JSON sidecar that accompanies an encoding's DESC1 file.
pub fn encoding_sidecar_path(desc_path: &Path) -> PathBuf {
    desc_path.with_extension("json")
}

/// Writes `enc` as a 1xD DESC1 file plus a JSON sidecar with kind and source.
pub fn write_encoding(desc_path: impl AsRef<Path>, enc: &Encoding) -> Result<()> {
    let desc_path = desc_path.as_ref();
    let m = DescriptorMatrix::from_rows_f64(enc.dim(), &[enc.values()])?;
    write_descriptor_file(desc_path, &m)?;
    let sidecar = EncodingSidecar {
        kind: enc.kind,
        dim: enc.dim(),
        source: enc.source.clone(),
    };
    let side = encoding_sidecar_path(desc_path);
    let text = serde_json::to_string_pretty(&sidecar).map_err(|e| Error::Json {
        path: side.clone(),
        source: e,
    })?;
    fs::write(&side, text + "\n").map_err(|e| Error::io(&side, e))
}

pub fn read_encoding(desc_path: impl AsRef<Path>) -> Result<Encoding> {
    let desc_path = desc_path.as_ref();
    let m = read_descriptor_file(desc_path)?;
    if m.rows() != 1 {
        return Err(Error::Corrupt {
            path: desc_path.to_path_buf(),
            reason: format!("encoding files hold exactly one row, found {}", m.rows()),
        });
    }
    let side = encoding_sidecar_path(desc_path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar: EncodingSidecar = serde_json::from_str(&text).map_err(|e| Error::Json {
        path: side.clone(),
        source: e,
    })?;
    if sidecar.dim != m.dim() {
        return Err(Error::Corrupt {
            path: desc_path.to_path_buf(),
            reason: format!("sidecar says dim {}, payload has {}", sidecar.dim, m.dim()),
        });
    }
    let values = m.values().iter().map(|&v| v as f64).collect();
    Encoding::new(sidecar.kind, values, sidecar.source)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_major_conversion() {
        // 2 channels over a 2x2 grid
        let chw: Vec<f32> = (0..8).map(|v| v as f32).collect();
        let t = ActivationTensor::from_channel_major(2, 2, 0, &chw).unwrap();
        assert_eq!(t.at(0, 0, 0), 0.0);
        assert_eq!(t.at(0, 0, 1), 4.0);
        assert_eq!(t.at(1, 1, 0), 3.0);
        assert_eq!(t.at(1, 1, 1), 7.0);
    }

    #[test]
    fn tensor_shape_checked() {
        assert!(ActivationTensor::new(0, 4, 0, vec![]).is_err());
        assert!(ActivationTensor::new(2, 2, 0, vec![0.0; 7]).is_err());
    }

    #[test]
    fn frames_split_from_stacked_matrix() {
        let m = DescriptorMatrix::new(2 * 4, 3, (0..24).map(|v| v as f32).collect()).unwrap();
        let frames = ActivationTensor::frames_from_matrix(&m, 2).unwrap();
        assert_eq!(frames.len(), 2);
        assert_eq!(frames[1].frame_index(), 1);
        assert_eq!(frames[1].values()[0], 12.0);
        assert!(ActivationTensor::frames_from_matrix(&m, 3).is_err());
    }

    #[test]
    fn normalized_encoding_rejects_non_unit() {
        assert!(Encoding::new(EncodingKind::Vlad, vec![1.0, 1.0], "").is_err());
        assert!(Encoding::new(EncodingKind::Vlad, vec![0.0, 0.0], "").is_ok());
        assert!(Encoding::new(EncodingKind::Avgpool, vec![1.0, 1.0], "").is_ok());
        assert!(Encoding::new(EncodingKind::Avgpool, vec![], "").is_err());
    }

    #[test]
    fn kind_names_roundtrip() {
        for k in EncodingKind::ALL {
            assert_eq!(k.as_str().parse::<EncodingKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn encoding_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("v.desc");
        let enc = Encoding::new(EncodingKind::Fisher, vec![0.6, -0.8], "fisher(layer=x)").unwrap();
        write_encoding(&p, &enc).unwrap();
        let back = read_encoding(&p).unwrap();
        assert_eq!(back.kind(), EncodingKind::Fisher);
        assert_eq!(back.source(), "fisher(layer=x)");
        for (a, b) in back.values().iter().zip(enc.values()) {
            assert!((a - b).abs() < 1e-7);
        }
    }
}
