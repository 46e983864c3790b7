//! One-vs-all linear SVMs trained by dual coordinate descent on the
//! L2-regularized hinge loss.
//!
//! Each binary problem solves
//!
//! ```text
//! min_w  0.5 |w|^2 + C * sum_i max(0, 1 - y_i w.x_i)
//! ```
//!
//! with the bias folded into `w` through a constant feature of value 1.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;
use serde_json::json;

use crate::container::{block_f64, block_values_f64, ModelPack};
use crate::datamodel::Encoding;
use crate::error::{Error, Result};
use crate::sampling::rng;

pub const DEFAULT_C: f64 = 100.0;
pub const DEFAULT_MAX_EPOCHS: usize = 1000;
pub const DEFAULT_EPS: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Stop when the spread of projected gradients falls below this.
    pub eps: f64,
}

impl SvmParams {
    pub fn new(c: f64, seed: u64) -> Self {
        Self {
            c,
            seed,
            max_epochs: DEFAULT_MAX_EPOCHS,
            eps: DEFAULT_EPS,
        }
    }
}

impl Default for SvmParams {
    fn default() -> Self {
        Self::new(DEFAULT_C, 0)
    }
}

/// Solution of one binary problem.
#[derive(Debug, Clone)]
pub struct BinarySvm {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub alpha: Vec<f64>,
    pub epochs: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl BinarySvm {
    /// `sum(alpha) - 0.5 |w|^2`, including the bias coordinate.
    pub fn dual_objective(&self) -> f64 {
        self.alpha.iter().sum::<f64>() - 0.5 * (dot(&self.weights, &self.weights) + self.bias * self.bias)
    }

    /// Primal objective of the current weights on `(xs, ys)`.
    pub fn primal_objective(&self, xs: &[&[f64]], ys: &[f64], c: f64) -> f64 {
        let hinge: f64 = xs
            .iter()
            .zip(ys)
            .map(|(x, &y)| (1.0 - y * (dot(&self.weights, x) + self.bias)).max(0.0))
            .sum();
        0.5 * (dot(&self.weights, &self.weights) + self.bias * self.bias) + c * hinge
    }
}

/// Dual coordinate descent with shrinking for one binary problem; `ys` are ±1.
pub fn train_binary(xs: &[&[f64]], ys: &[f64], params: &SvmParams) -> Result<BinarySvm> {
    let l = xs.len();
    if l == 0 || ys.len() != l {
        return Err(Error::param("binary SVM needs matching, non-empty inputs"));
    }
    if !(params.c > 0.0) {
        return Err(Error::param(format!("SVM C must be positive, got {}", params.c)));
    }
    let dim = xs[0].len();
    let c = params.c;
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut alpha = vec![0.0; l];
    let qd: Vec<f64> = xs.iter().map(|x| dot(x, x) + 1.0).collect();
    let mut index: Vec<usize> = (0..l).collect();
    let mut active = l;
    let mut pg_max_old = f64::INFINITY;
    let mut pg_min_old = f64::NEG_INFINITY;
    let mut rng = rng(params.seed);
    let mut epochs = 0;

    while epochs < params.max_epochs {
        let mut pg_max = f64::NEG_INFINITY;
        let mut pg_min = f64::INFINITY;
        index[..active].shuffle(&mut rng);
        let mut s = 0;
        while s < active {
            let i = index[s];
            let y = ys[i];
            let g = y * (dot(&w, xs[i]) + b) - 1.0;
            let mut pg = 0.0;
            if alpha[i] == 0.0 {
                if g > pg_max_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g < 0.0 {
                    pg = g;
                }
            } else if alpha[i] == c {
                if g < pg_min_old {
                    active -= 1;
                    index.swap(s, active);
                    continue;
                } else if g > 0.0 {
                    pg = g;
                }
            } else {
                pg = g;
            }
            pg_max = pg_max.max(pg);
            pg_min = pg_min.min(pg);
            if pg.abs() > 1e-12 {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).clamp(0.0, c);
                let step = (alpha[i] - old) * y;
                w.iter_mut().zip(xs[i]).for_each(|(wj, &xj)| *wj += step * xj);
                b += step;
            }
            s += 1;
        }
        epochs += 1;
        if pg_max - pg_min <= params.eps {
            if active == l {
                break;
            }
            active = l;
            pg_max_old = f64::INFINITY;
            pg_min_old = f64::NEG_INFINITY;
            continue;
        }
        pg_max_old = if pg_max <= 0.0 { f64::INFINITY } else { pg_max };
        pg_min_old = if pg_min >= 0.0 { f64::NEG_INFINITY } else { pg_min };
    }

    Ok(BinarySvm {
        weights: w,
        bias: b,
        alpha,
        epochs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvmModel {
    classes: usize,
    dim: usize,
    /// Row-major `classes x dim`.
    weights: Vec<f64>,
    biases: Vec<f64>,
    c_param: f64,
}

impl SvmModel {
    pub fn new(classes: usize, dim: usize, weights: Vec<f64>, biases: Vec<f64>, c_param: f64) -> Result<Self> {
        if classes < 2 {
            return Err(Error::param("one-vs-all model needs at least 2 classes"));
        }
        if dim == 0 || weights.len() != classes * dim || biases.len() != classes {
            return Err(Error::param("SVM weight/bias shape mismatch"));
        }
        if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
            return Err(Error::param("SVM weights must be finite"));
        }
        Ok(Self {
            classes,
            dim,
            weights,
            biases,
            c_param,
        })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c_param(&self) -> f64 {
        self.c_param
    }

    pub fn weights(&self, class: usize) -> &[f64] {
        &self.weights[class * self.dim..(class + 1) * self.dim]
    }

    pub fn bias(&self, class: usize) -> f64 {
        self.biases[class]
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::param(format!(
                "SVM expects dimension {}, got {}",
                self.dim,
                x.len()
            )));
        }
        Ok((0..self.classes)
            .map(|c| dot(self.weights(c), x) + self.biases[c])
            .collect())
    }

    /// Highest-scoring class; ties go to the lowest index.
    pub fn predict_values(&self, x: &[f64]) -> Result<usize> {
        let scores = self.scores(x)?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        Ok(best)
    }

    pub fn to_pack(&self) -> Result<ModelPack> {
        Ok(ModelPack::new(
            "svm",
            json!({"classes": self.classes, "dim": self.dim, "c_param": self.c_param}),
        )
        .with_block("weights", block_f64(self.classes, self.dim, &self.weights)?)
        .with_block("biases", block_f64(1, self.classes, &self.biases)?))
    }

    pub fn from_pack(pack: &ModelPack, path: &Path) -> Result<Self> {
        pack.expect("svm", path)?;
        let classes = pack.meta_usize("classes", path)?;
        let dim = pack.meta_usize("dim", path)?;
        let c_param = pack.meta_f64("c_param", path)?;
        let w = pack.require("weights", path)?;
        let b = pack.require("biases", path)?;
        if (w.rows(), w.dim()) != (classes, dim) || b.values().len() != classes {
            return Err(Error::Container {
                path: path.to_path_buf(),
                reason: "SVM block shapes disagree with header".into(),
            });
        }
        Self::new(classes, dim, block_values_f64(w), block_values_f64(b), c_param)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_pack()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pack(&ModelPack::read(path)?, path)
    }
}

fn check_features(features: &[Encoding]) -> Result<usize> {
    let dim = features
        .first()
        .map(Encoding::dim)
        .ok_or_else(|| Error::param("no feature vectors"))?;
    if let Some((i, f)) = features.iter().enumerate().find(|(_, f)| f.dim() != dim) {
        return Err(Error::param(format!(
            "feature {i} has dimension {}, expected {dim}",
            f.dim()
        )));
    }
    Ok(dim)
}

/// Trains one binary SVM per class (`max(label) + 1` classes).
pub fn train_one_vs_all(features: &[Encoding], labels: &[usize], c_param: f64, seed: u64) -> Result<SvmModel> {
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    train_one_vs_all_with(features, labels, classes, &SvmParams::new(c_param, seed))
}

pub fn train_one_vs_all_with(
    features: &[Encoding],
    labels: &[usize],
    classes: usize,
    params: &SvmParams,
) -> Result<SvmModel> {
    let dim = check_features(features)?;
    if labels.len() != features.len() {
        return Err(Error::param("features and labels differ in length"));
    }
    if classes < 2 {
        return Err(Error::Training("one-vs-all training needs at least 2 classes".into()));
    }
    if !(params.c > 0.0) {
        return Err(Error::param(format!("SVM C must be positive, got {}", params.c)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::param(format!("label {bad} out of range for {classes} classes")));
    }
    let mut counts = vec![0usize; classes];
    labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(c) = counts.iter().position(|&n| n == 0 || n == labels.len()) {
        return Err(Error::Training(format!(
            "class {c} needs at least one positive and one negative example"
        )));
    }

    let xs: Vec<&[f64]> = features.iter().map(Encoding::values).collect();
    let mut weights = Vec::with_capacity(classes * dim);
    let mut biases = Vec::with_capacity(classes);
    for class in 0..classes {
        let ys: Vec<f64> = labels
            .iter()
            .map(|&l| if l == class { 1.0 } else { -1.0 })
            .collect();
        let p = SvmParams {
            seed: params.seed.wrapping_add(class as u64),
            ..*params
        };
        let bin = train_binary(&xs, &ys, &p)?;
        weights.extend(bin.weights);
        biases.push(bin.bias);
    }
    SvmModel::new(classes, dim, weights, biases, params.c)
}

pub fn predict(model: &SvmModel, x: &Encoding) -> Result<usize> {
    model.predict_values(x.values())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub class: usize,
    pub support: usize,
    pub correct: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class: Vec<ClassStats>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

pub fn evaluate(model: &SvmModel, features: &[Encoding], labels: &[usize]) -> Result<Evaluation> {
    if features.is_empty() {
        return Err(Error::param("evaluation set is empty"));
    }
    if labels.len() != features.len() {
        return Err(Error::param("features and labels differ in length"));
    }
    let c = model.classes();
    let mut confusion = vec![vec![0usize; c]; c];
    for (f, &l) in features.iter().zip(labels) {
        if l >= c {
            return Err(Error::param(format!("label {l} out of range for {c} classes")));
        }
        confusion[l][predict(model, f)?] += 1;
    }
    let correct: usize = (0..c).map(|i| confusion[i][i]).sum();
    let per_class = (0..c)
        .map(|i| {
            let support: usize = confusion[i].iter().sum();
            ClassStats {
                class: i,
                support,
                correct: confusion[i][i],
                recall: if support == 0 {
                    0.0
                } else {
                    confusion[i][i] as f64 / support as f64
                },
            }
        })
        .collect();
    Ok(Evaluation {
        accuracy: correct as f64 / features.len() as f64,
        per_class,
        confusion,
    })
}
