//! Synthetic datasets: per-class Gaussian mixtures written in the standard
//! manifest + DESC1 layout.
//!
//! Every class owns a private mixture of `modes_per_class` unit-variance
//! Gaussians whose means are `separation * z / sqrt(2 d)` with
//! `z ~ N(0, I)`, so the expected distance between two means is about
//! `separation` and `separation = 0` makes all classes identical. Besides the `local`
//! descriptor layer, optional `pool5`, `fc6`/`fc7` and `softmax` layers can
//! be emitted so every encoder path has input.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{write_descriptor_file, write_manifest, Dataset, DescriptorMatrix, Split, VideoRecord};
use crate::error::{Error, Result};
use crate::sampling::rng;

pub const LOCAL_LAYER: &str = "local";
pub const POOL5_LAYER: &str = "pool5";
pub const FC6_LAYER: &str = "fc6";
pub const FC7_LAYER: &str = "fc7";
pub const SOFTMAX_LAYER: &str = "softmax";

/// Fraction of each class's videos assigned to training.
pub const TRAIN_FRACTION: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pool5Shape {
    pub side: usize,
    pub channels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub classes: usize,
    pub videos_per_class: usize,
    pub frames_per_video: usize,
    pub descriptor_dim: usize,
    pub modes_per_class: usize,
    pub separation: f64,
    pub seed: u64,
    #[serde(default)]
    pub pool5: Option<Pool5Shape>,
    /// Width of the `fc6` and `fc7` layers, when emitted.
    #[serde(default)]
    pub fc_dim: Option<usize>,
    /// Number of object categories in the `softmax` layer, when emitted.
    #[serde(default)]
    pub softmax_classes: Option<usize>,
    #[serde(default = "one")]
    pub splits: usize,
}

fn one() -> usize {
    1
}

impl SynthSpec {
    pub fn new(
        classes: usize,
        videos_per_class: usize,
        frames_per_video: usize,
        descriptor_dim: usize,
        modes_per_class: usize,
        separation: f64,
        seed: u64,
    ) -> Self {
        Self {
            classes,
            videos_per_class,
            frames_per_video,
            descriptor_dim,
            modes_per_class,
            separation,
            seed,
            pool5: None,
            fc_dim: None,
            softmax_classes: None,
            splits: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("classes", self.classes),
            ("videos_per_class", self.videos_per_class),
            ("frames_per_video", self.frames_per_video),
            ("descriptor_dim", self.descriptor_dim),
            ("modes_per_class", self.modes_per_class),
            ("splits", self.splits),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(Error::param(format!("synthetic spec: {name} must be at least 1")));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::param("synthetic spec: separation must be finite and >= 0"));
        }
        if let Some(p) = self.pool5 {
            if p.side == 0 || p.channels == 0 {
                return Err(Error::param("synthetic spec: pool5 side and channels must be >= 1"));
            }
        }
        if self.fc_dim == Some(0) || self.softmax_classes == Some(0) {
            return Err(Error::param("synthetic spec: layer widths must be >= 1"));
        }
        Ok(())
    }
}

/// splitmix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    rng(mix(mix(seed ^ mix(tag)) ^ index))
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

/// Per-class mode means for one layer, `classes x modes x dim`.
struct ClassMixtures {
    dim: usize,
    modes: usize,
    means: Vec<f64>,
}

impl ClassMixtures {
    fn new(spec: &SynthSpec, dim: usize, tag: u64) -> Self {
        let modes = spec.modes_per_class;
        let mut r = stream(spec.seed, tag, 0);
        // E|mu_a - mu_b|^2 = separation^2 for any two mode means.
        let scale = spec.separation / (2.0 * dim as f64).sqrt();
        let means = (0..spec.classes * modes * dim)
            .map(|_| scale * normal(&mut r))
            .collect();
        Self { dim, modes, means }
    }

    fn sample_rows(&self, class: usize, rows: usize, r: &mut ChaCha8Rng) -> Vec<f32> {
        let mut out = Vec::with_capacity(rows * self.dim);
        for _ in 0..rows {
            let g = r.random_range(0..self.modes);
            let base = (class * self.modes + g) * self.dim;
            for j in 0..self.dim {
                out.push((self.means[base + j] + normal(r)) as f32);
            }
        }
        out
    }
}

/// Converts a probability row to f32 and nudges small entries so the f64 sum
/// of the stored values is 1 within 1e-9.
fn softmax_row_f32(logits: &[f64]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    let mut row: Vec<f32> = exps.iter().map(|e| (e / total) as f32).collect();
    for _ in 0..8 {
        let residual = 1.0 - row.iter().map(|&v| v as f64).sum::<f64>();
        if residual.abs() < 1e-10 {
            break;
        }
        // the smallest entry that can absorb the residual has the finest spacing
        let target = row
            .iter()
            .enumerate()
            .filter(|(_, &v)| v as f64 >= 2.0 * residual.abs())
            .min_by(|a, b| a.1.total_cmp(b.1))
            .or_else(|| row.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)))
            .map(|(i, _)| i)
            .expect("non-empty row");
        row[target] = (row[target] as f64 + residual).max(0.0) as f32;
    }
    row
}

pub fn video_id(class: usize, index: usize) -> String {
    format!("c{class:03}_v{index:04}")
}

/// Generates the dataset under `out_dir` and writes `out_dir/manifest.json`.
pub fn generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Dataset> {
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    let data_dir = out_dir.join("data");
    fs::create_dir_all(&data_dir).map_err(|e| Error::io(&data_dir, e))?;

    let f = spec.frames_per_video;
    let local = ClassMixtures::new(spec, spec.descriptor_dim, 1);
    let pool5 = spec.pool5.map(|p| (p, ClassMixtures::new(spec, p.channels, 2)));
    let fc = spec
        .fc_dim
        .map(|d| (ClassMixtures::new(spec, d, 3), ClassMixtures::new(spec, d, 4)));
    let softmax = spec.softmax_classes.map(|n| ClassMixtures::new(spec, n, 5));

    let mut videos = Vec::with_capacity(spec.classes * spec.videos_per_class);
    for class in 0..spec.classes {
        for v in 0..spec.videos_per_class {
            let id = video_id(class, v);
            let serial = (class * spec.videos_per_class + v) as u64;
            let mut sources = BTreeMap::new();
            let mut emit = |layer: &str, rows: usize, dim: usize, values: Vec<f32>| -> Result<()> {
                let rel = PathBuf::from("data").join(format!("{id}.{layer}.desc"));
                let m = DescriptorMatrix::new(rows, dim, values)?;
                write_descriptor_file(out_dir.join(&rel), &m)?;
                sources.insert(layer.to_string(), rel);
                Ok(())
            };

            let mut r = stream(spec.seed, 11, serial);
            emit(LOCAL_LAYER, f, local.dim, local.sample_rows(class, f, &mut r))?;
            if let Some((shape, mix)) = &pool5 {
                let mut r = stream(spec.seed, 12, serial);
                let rows = shape.side * shape.side * f;
                emit(POOL5_LAYER, rows, mix.dim, mix.sample_rows(class, rows, &mut r))?;
            }
            if let Some((fc6, fc7)) = &fc {
                let mut r = stream(spec.seed, 13, serial);
                emit(FC6_LAYER, f, fc6.dim, fc6.sample_rows(class, f, &mut r))?;
                let mut r = stream(spec.seed, 14, serial);
                emit(FC7_LAYER, f, fc7.dim, fc7.sample_rows(class, f, &mut r))?;
            }
            if let Some(mix) = &softmax {
                let mut r = stream(spec.seed, 15, serial);
                let logits = mix.sample_rows(class, f, &mut r);
                let values = logits
                    .chunks_exact(mix.dim)
                    .flat_map(|row| {
                        let row: Vec<f64> = row.iter().map(|&v| v as f64).collect();
                        softmax_row_f32(&row)
                    })
                    .collect();
                emit(SOFTMAX_LAYER, f, mix.dim, values)?;
            }

            videos.push(VideoRecord {
                id,
                label: class,
                frame_count: f,
                sources,
                pool5_side: spec.pool5.map(|p| p.side),
            });
        }
    }

    let n_train = ((spec.videos_per_class as f64) * TRAIN_FRACTION).round() as usize;
    let mut splits = BTreeMap::new();
    for s in 0..spec.splits {
        let mut r = stream(spec.seed, 21, s as u64);
        let mut split = Split::default();
        for class in 0..spec.classes {
            let mut order: Vec<usize> = (0..spec.videos_per_class).collect();
            order.shuffle(&mut r);
            for (rank, &v) in order.iter().enumerate() {
                let id = video_id(class, v);
                if rank < n_train {
                    split.train.push(id);
                } else {
                    split.test.push(id);
                }
            }
        }
        split.train.sort();
        split.test.sort();
        splits.insert(format!("split{}", s + 1), split);
    }

    let ds = Dataset {
        classes: (0..spec.classes).map(|c| format!("class{c:03}")).collect(),
        videos,
        splits,
        base_dir: out_dir.to_path_buf(),
    };
    ds.validate()?;
    write_manifest(out_dir.join("manifest.json"), &ds)?;
    Ok(ds)
}
