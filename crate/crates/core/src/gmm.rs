//! Diagonal-covariance Gaussian mixtures fitted by EM.

use std::f64::consts::PI;
use std::path::Path;

use serde_json::json;

use crate::codebook::{fit_kmeans_traced, KMeansParams};
use crate::container::{block_f64, block_values_f64, ModelPack};
use crate::datamodel::DescriptorMatrix;
use crate::error::{Error, Result};

const MIN_FLOOR: f64 = 1e-6;
const REL_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    k: usize,
    dim: usize,
    priors: Vec<f64>,
    /// Row-major `k x dim`.
    means: Vec<f64>,
    /// Row-major `k x dim`.
    variances: Vec<f64>,
    variance_floor: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GmmParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl GmmParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Average log-likelihood of the samples under each successive model,
    /// starting with the k-means initialization.
    pub log_likelihood: Vec<f64>,
    pub iterations: usize,
}

/// `max(1e-6, 1e-4 * mean per-dimension sample variance)`.
pub fn variance_floor(samples: &DescriptorMatrix) -> f64 {
    let Some(mean) = samples.column_mean() else {
        return MIN_FLOOR;
    };
    let n = samples.rows() as f64;
    let mut var = vec![0.0; samples.dim()];
    for r in samples.iter_rows() {
        for ((v, &x), &m) in var.iter_mut().zip(r).zip(&mean) {
            let d = x as f64 - m;
            *v += d * d;
        }
    }
    let avg = var.iter().map(|v| v / n).sum::<f64>() / samples.dim() as f64;
    MIN_FLOOR.max(REL_FLOOR * avg)
}

impl GmmModel {
    pub fn new(
        priors: Vec<f64>,
        means: Vec<f64>,
        variances: Vec<f64>,
        dim: usize,
        variance_floor: f64,
    ) -> Result<Self> {
        let k = priors.len();
        if k == 0 || dim == 0 {
            return Err(Error::param("GMM needs k >= 1 and dim >= 1"));
        }
        if means.len() != k * dim || variances.len() != k * dim {
            return Err(Error::param("GMM means/variances length mismatch"));
        }
        if !(variance_floor > 0.0) {
            return Err(Error::param("GMM variance floor must be positive"));
        }
        if priors.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::param("GMM priors must be finite and nonnegative"));
        }
        let total: f64 = priors.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::param(format!("GMM priors sum to {total}, not 1")));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("GMM means must be finite"));
        }
        if variances.iter().any(|v| !(v.is_finite() && *v >= variance_floor)) {
            return Err(Error::param("GMM variances must be finite and at least the floor"));
        }
        Ok(Self {
            k,
            dim,
            priors,
            means,
            variances,
            variance_floor,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn priors(&self) -> &[f64] {
        &self.priors
    }

    pub fn mean(&self, k: usize) -> &[f64] {
        &self.means[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance(&self, k: usize) -> &[f64] {
        &self.variances[k * self.dim..(k + 1) * self.dim]
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }

    fn check_dim(&self, m: &DescriptorMatrix) -> Result<()> {
        if m.dim() != self.dim {
            return Err(Error::param(format!(
                "GMM dimension is {}, descriptors have {}",
                self.dim,
                m.dim()
            )));
        }
        Ok(())
    }

    /// Per-mode `log pi_k - 0.5 * sum_j ln(2 pi sigma^2_jk)`; `-inf` for empty modes.
    fn log_norms(&self) -> Vec<f64> {
        (0..self.k)
            .map(|k| {
                let logdet: f64 = self.variance(k).iter().map(|v| (2.0 * PI * v).ln()).sum();
                self.priors[k].ln() - 0.5 * logdet
            })
            .collect()
    }

    /// Writes the posteriors of `x` into `out` and returns `ln p(x)`.
    fn posterior_row(&self, x: &[f32], log_norms: &[f64], out: &mut [f64]) -> f64 {
        for (k, o) in out.iter_mut().enumerate() {
            let mahal: f64 = x
                .iter()
                .zip(self.mean(k))
                .zip(self.variance(k))
                .map(|((&xv, &mu), &var)| {
                    let d = xv as f64 - mu;
                    d * d / var
                })
                .sum();
            *o = log_norms[k] - 0.5 * mahal;
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            sum += *o;
        }
        out.iter_mut().for_each(|o| *o /= sum);
        max + sum.ln()
    }

    /// Soft assignments, row-major `rows x k`; every row sums to one.
    pub fn posteriors(&self, m: &DescriptorMatrix) -> Result<Vec<f64>> {
        self.check_dim(m)?;
        let norms = self.log_norms();
        let mut q = vec![0.0; m.rows() * self.k];
        for (row, out) in m.iter_rows().zip(q.chunks_exact_mut(self.k)) {
            self.posterior_row(row, &norms, out);
        }
        Ok(q)
    }

    /// Mean log-likelihood of the rows of `m`.
    pub fn average_log_likelihood(&self, m: &DescriptorMatrix) -> Result<f64> {
        self.check_dim(m)?;
        if m.is_empty() {
            return Err(Error::param("log-likelihood of an empty matrix"));
        }
        let norms = self.log_norms();
        let mut scratch = vec![0.0; self.k];
        let total: f64 = m
            .iter_rows()
            .map(|r| self.posterior_row(r, &norms, &mut scratch))
            .sum();
        Ok(total / m.rows() as f64)
    }

    pub fn to_pack(&self) -> Result<ModelPack> {
        Ok(ModelPack::new(
            "gmm",
            json!({"k": self.k, "dim": self.dim, "variance_floor": self.variance_floor}),
        )
        .with_block("priors", block_f64(1, self.k, &self.priors)?)
        .with_block("means", block_f64(self.k, self.dim, &self.means)?)
        .with_block("variances", block_f64(self.k, self.dim, &self.variances)?))
    }

    /// Loads from a container. Priors are renormalized and variances
    /// re-floored after the 32-bit round trip.
    pub fn from_pack(pack: &ModelPack, path: &Path) -> Result<Self> {
        pack.expect("gmm", path)?;
        let k = pack.meta_usize("k", path)?;
        let dim = pack.meta_usize("dim", path)?;
        let floor = pack.meta_f64("variance_floor", path)?;
        let priors = pack.require("priors", path)?;
        let means = pack.require("means", path)?;
        let variances = pack.require("variances", path)?;
        if priors.values().len() != k
            || (means.rows(), means.dim()) != (k, dim)
            || (variances.rows(), variances.dim()) != (k, dim)
        {
            return Err(Error::Container {
                path: path.to_path_buf(),
                reason: "GMM block shapes disagree with header".into(),
            });
        }
        let mut priors = block_values_f64(priors);
        let total: f64 = priors.iter().sum();
        priors.iter_mut().for_each(|p| *p /= total);
        let variances = block_values_f64(variances).into_iter().map(|v| v.max(floor)).collect();
        Self::new(priors, block_values_f64(means), variances, dim, floor)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_pack()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pack(&ModelPack::read(path)?, path)
    }
}

pub fn posteriors(model: &GmmModel, m: &DescriptorMatrix) -> Result<Vec<f64>> {
    model.posteriors(m)
}

pub fn fit_gmm(
    samples: &DescriptorMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<GmmModel> {
    fit_gmm_traced(
        samples,
        &GmmParams {
            k,
            seed,
            max_iter,
            tol,
        },
    )
    .map(|f| f.model)
}

fn init_from_kmeans(samples: &DescriptorMatrix, params: &GmmParams, floor: f64) -> Result<GmmModel> {
    let k = params.k;
    let d = samples.dim();
    let km = fit_kmeans_traced(
        samples,
        &KMeansParams {
            k,
            seed: params.seed,
            max_iter: params.max_iter,
            tol: params.tol,
        },
    )?;
    let mut counts = vec![0usize; k];
    let mut sq = vec![0.0; k * d];
    for (r, &c) in samples.iter_rows().zip(&km.assignments) {
        counts[c] += 1;
        let center = km.codebook.center(c);
        for ((s, &x), &mu) in sq[c * d..(c + 1) * d].iter_mut().zip(r).zip(center) {
            let diff = x as f64 - mu;
            *s += diff * diff;
        }
    }
    // an empty cell keeps a nominal weight of one point
    let weights: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let priors = weights.iter().map(|w| w / total).collect();
    let variances = (0..k * d)
        .map(|i| {
            let c = counts[i / d];
            if c == 0 {
                floor
            } else {
                (sq[i] / c as f64).max(floor)
            }
        })
        .collect();
    GmmModel::new(priors, km.codebook.centers().to_vec(), variances, d, floor)
}

/// One EM step: E-step under `model`, M-step producing the next model.
fn em_step(model: &GmmModel, samples: &DescriptorMatrix) -> Result<GmmModel> {
    let (k, d) = (model.k, model.dim);
    let q = model.posteriors(samples)?;
    let mut nk = vec![0.0; k];
    let mut sx = vec![0.0; k * d];
    for (r, qr) in samples.iter_rows().zip(q.chunks_exact(k)) {
        for (c, &w) in qr.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            nk[c] += w;
            for (s, &x) in sx[c * d..(c + 1) * d].iter_mut().zip(r) {
                *s += w * x as f64;
            }
        }
    }
    let mut means = model.means.clone();
    for c in 0..k {
        if nk[c] > 0.0 {
            for (m, &s) in means[c * d..(c + 1) * d].iter_mut().zip(&sx[c * d..]) {
                *m = s / nk[c];
            }
        }
    }
    let mut sq = vec![0.0; k * d];
    for (r, qr) in samples.iter_rows().zip(q.chunks_exact(k)) {
        for (c, &w) in qr.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for ((s, &x), &mu) in sq[c * d..(c + 1) * d].iter_mut().zip(r).zip(&means[c * d..]) {
                let diff = x as f64 - mu;
                *s += w * diff * diff;
            }
        }
    }
    let floor = model.variance_floor;
    let mut variances = model.variances.clone();
    for c in 0..k {
        if nk[c] > 0.0 {
            for (v, &s) in variances[c * d..(c + 1) * d].iter_mut().zip(&sq[c * d..]) {
                *v = (s / nk[c]).max(floor);
            }
        }
    }
    let total: f64 = nk.iter().sum();
    let priors = nk.iter().map(|n| n / total).collect();
    GmmModel::new(priors, means, variances, d, floor)
}

pub fn fit_gmm_traced(samples: &DescriptorMatrix, params: &GmmParams) -> Result<GmmFit> {
    if params.k == 0 {
        return Err(Error::param("GMM needs k >= 1"));
    }
    if samples.rows() < params.k {
        return Err(Error::param(format!(
            "GMM with k={} needs at least {} samples, got {}",
            params.k,
            params.k,
            samples.rows()
        )));
    }
    let floor = variance_floor(samples);
    let mut model = init_from_kmeans(samples, params, floor)?;
    let mut ll = vec![model.average_log_likelihood(samples)?];
    let mut iterations = 0;
    while iterations < params.max_iter {
        let next = em_step(&model, samples)?;
        let next_ll = next.average_log_likelihood(samples)?;
        iterations += 1;
        let gain = next_ll - ll[ll.len() - 1];
        model = next;
        ll.push(next_ll);
        if gain < params.tol {
            break;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: ll,
        iterations,
    })
}
