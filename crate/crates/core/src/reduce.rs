//! Principal component analysis by exact eigendecomposition.
//!
//! When there are fewer samples than dimensions the eigenproblem is solved on
//! the `n x n` Gram matrix instead of the `d x d` covariance; both share the
//! same non-zero spectrum and the principal directions are recovered as
//! `X_c^T u / sqrt((n - 1) lambda)`.

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde_json::json;

use crate::container::{block_f64, block_values_f64, ModelPack};
use crate::datamodel::DescriptorMatrix;
use crate::error::{Error, Result};
use crate::sampling::sample_rows;

/// Relative eigenvalue threshold below which a Gram-route direction is
/// treated as numerically null and replaced by an orthonormal completion.
const NULL_EIGEN_REL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct PcaOptions {
    pub target_dim: usize,
    pub seed: u64,
    /// Scale each component by `1/sqrt(explained variance)`. Off by default.
    pub whiten: bool,
    /// Subsample at most this many rows before fitting.
    pub max_samples: Option<usize>,
}

impl PcaOptions {
    pub fn new(target_dim: usize, seed: u64) -> Self {
        Self {
            target_dim,
            seed,
            whiten: false,
            max_samples: None,
        }
    }
}

/// Mean vector plus a `d x p` orthonormal basis, columns ordered by
/// decreasing explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    input_dim: usize,
    output_dim: usize,
    mean: Vec<f64>,
    /// Row-major `input_dim x output_dim`.
    basis: Vec<f64>,
    explained_variance: Vec<f64>,
    total_variance: f64,
    whiten: bool,
}

pub fn fit_pca(samples: &DescriptorMatrix, target_dim: usize, seed: u64) -> Result<PcaModel> {
    fit_pca_with(samples, &PcaOptions::new(target_dim, seed))
}

pub fn fit_pca_with(samples: &DescriptorMatrix, opts: &PcaOptions) -> Result<PcaModel> {
    let sampled;
    let samples = match opts.max_samples {
        Some(max) if max < samples.rows() => {
            sampled = sample_rows(samples, max, opts.seed);
            &sampled
        }
        _ => samples,
    };
    let n = samples.rows();
    let d = samples.dim();
    let p = opts.target_dim;
    if n < 2 {
        return Err(Error::param(format!("PCA needs at least 2 samples, got {n}")));
    }
    if p == 0 || p > d || p > n - 1 {
        return Err(Error::param(format!(
            "PCA target dimension {p} out of range 1..={} for {n} samples of dim {d}",
            d.min(n - 1)
        )));
    }

    let mean = samples.column_mean().expect("n >= 2");
    let centered = DMatrix::from_fn(n, d, |i, j| samples.row(i)[j] as f64 - mean[j]);
    let scale = 1.0 / (n - 1) as f64;

    let (eigvals, directions) = if d <= n {
        let cov = centered.tr_mul(&centered) * scale;
        let total = cov.trace();
        check_variance(total)?;
        let eig = SymmetricEigen::new(cov);
        let order = descending(&eig.eigenvalues);
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let vecs: Vec<Vec<f64>> = order[..p]
            .iter()
            .map(|&i| eig.eigenvectors.column(i).iter().copied().collect())
            .collect();
        (vals, vecs)
    } else {
        let gram = &centered * centered.transpose() * scale;
        check_variance(gram.trace())?;
        let eig = SymmetricEigen::new(gram);
        let order = descending(&eig.eigenvalues);
        let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        let top = vals[0];
        let mut vecs = Vec::with_capacity(p);
        for (c, &i) in order[..p].iter().enumerate() {
            if vals[c] <= top * NULL_EIGEN_REL {
                break;
            }
            let u = eig.eigenvectors.column(i);
            let v = centered.tr_mul(&u) / ((n - 1) as f64 * vals[c]).sqrt();
            vecs.push(v.iter().copied().collect());
        }
        (vals, vecs)
    };

    let mut columns = orthonormalize(directions, d, p);
    for col in &mut columns {
        fix_sign(col);
    }
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() * scale;
    let mut basis = vec![0.0; d * p];
    for (c, col) in columns.iter().enumerate() {
        for (j, &v) in col.iter().enumerate() {
            basis[j * p + c] = v;
        }
    }
    let mut explained_variance: Vec<f64> = eigvals.into_iter().take(p).collect();
    explained_variance.resize(p, 0.0);

    Ok(PcaModel {
        input_dim: d,
        output_dim: p,
        mean,
        basis,
        explained_variance,
        total_variance,
        whiten: opts.whiten,
    })
}

fn check_variance(total: f64) -> Result<()> {
    if !(total > 0.0) {
        return Err(Error::Degenerate("PCA input has zero variance".into()));
    }
    Ok(())
}

fn descending(vals: &nalgebra::DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
    order
}

/// Modified Gram-Schmidt over `cols`, then completes to `p` columns from the
/// standard basis if some directions were null.
fn orthonormalize(cols: Vec<Vec<f64>>, d: usize, p: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(p);
    let candidates = cols.into_iter().chain((0..d).map(|j| {
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        e
    }));
    for mut v in candidates {
        if out.len() == p {
            break;
        }
        for _ in 0..2 {
            for q in &out {
                let dot: f64 = v.iter().zip(q).map(|(a, b)| a * b).sum();
                v.iter_mut().zip(q).for_each(|(a, b)| *a -= dot * b);
            }
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            out.push(v);
        }
    }
    out
}

/// Makes the largest-magnitude component positive (first one on ties).
fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl PcaModel {
    /// Builds a model from parts; `basis` is row-major `input_dim x output_dim`.
    pub fn from_parts(
        mean: Vec<f64>,
        basis: Vec<f64>,
        output_dim: usize,
        explained_variance: Vec<f64>,
        whiten: bool,
    ) -> Result<Self> {
        let d = mean.len();
        if d == 0 || output_dim == 0 || output_dim > d {
            return Err(Error::param(format!("invalid PCA shape {d} -> {output_dim}")));
        }
        if basis.len() != d * output_dim || explained_variance.len() != output_dim {
            return Err(Error::param("PCA basis or variance length mismatch"));
        }
        let total_variance = explained_variance.iter().sum();
        Ok(Self {
            input_dim: d,
            output_dim,
            mean,
            basis,
            explained_variance,
            total_variance,
            whiten,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Entry `(j, c)` of the basis: component `j` of principal direction `c`.
    pub fn basis_at(&self, j: usize, c: usize) -> f64 {
        self.basis[j * self.output_dim + c]
    }

    pub fn basis_column(&self, c: usize) -> Vec<f64> {
        (0..self.input_dim).map(|j| self.basis_at(j, c)).collect()
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    pub fn whiten(&self) -> bool {
        self.whiten
    }

    /// Projects one row to `output_dim` components in f64.
    pub fn project_row(&self, row: &[f32]) -> Vec<f64> {
        let p = self.output_dim;
        let mut out = vec![0.0; p];
        for (j, (&x, &mu)) in row.iter().zip(&self.mean).enumerate() {
            let centered = x as f64 - mu;
            let b = &self.basis[j * p..(j + 1) * p];
            out.iter_mut().zip(b).for_each(|(o, &w)| *o += w * centered);
        }
        if self.whiten {
            for (o, &var) in out.iter_mut().zip(&self.explained_variance) {
                if var > 0.0 {
                    *o /= var.sqrt();
                }
            }
        }
        out
    }

    /// Maps projected coordinates back to input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let p = self.output_dim;
        (0..self.input_dim)
            .map(|j| {
                let b = &self.basis[j * p..(j + 1) * p];
                let mut acc = self.mean[j];
                for (c, (&w, &y)) in b.iter().zip(coords).enumerate() {
                    let y = if self.whiten {
                        y * self.explained_variance[c].max(0.0).sqrt()
                    } else {
                        y
                    };
                    acc += w * y;
                }
                acc
            })
            .collect()
    }

    /// Projects every row, returning row-major f64 values.
    pub fn project(&self, m: &DescriptorMatrix) -> Result<Vec<f64>> {
        self.check_dim(m)?;
        let mut out = Vec::with_capacity(m.rows() * self.output_dim);
        for row in m.iter_rows() {
            out.extend(self.project_row(row));
        }
        Ok(out)
    }

    fn check_dim(&self, m: &DescriptorMatrix) -> Result<()> {
        if m.dim() != self.input_dim {
            return Err(Error::param(format!(
                "PCA expects dimension {}, got {}",
                self.input_dim,
                m.dim()
            )));
        }
        Ok(())
    }

    pub fn to_pack(&self) -> Result<ModelPack> {
        Ok(ModelPack::new(
            "pca",
            json!({
                "input_dim": self.input_dim,
                "output_dim": self.output_dim,
                "whiten": self.whiten,
                "total_variance": self.total_variance,
            }),
        )
        .with_block("mean", block_f64(1, self.input_dim, &self.mean)?)
        .with_block("basis", block_f64(self.input_dim, self.output_dim, &self.basis)?)
        .with_block(
            "explained_variance",
            block_f64(1, self.output_dim, &self.explained_variance)?,
        ))
    }

    pub fn from_pack(pack: &ModelPack, path: &Path) -> Result<Self> {
        pack.expect("pca", path)?;
        let d = pack.meta_usize("input_dim", path)?;
        let p = pack.meta_usize("output_dim", path)?;
        let whiten = pack.meta.get("whiten").and_then(|v| v.as_bool()).unwrap_or(false);
        let mean = pack.require("mean", path)?;
        let basis = pack.require("basis", path)?;
        let var = pack.require("explained_variance", path)?;
        if mean.values().len() != d || basis.rows() != d || basis.dim() != p || var.values().len() != p {
            return Err(Error::Container {
                path: path.to_path_buf(),
                reason: "PCA block shapes disagree with header".into(),
            });
        }
        let mut model = Self::from_parts(
            block_values_f64(mean),
            block_values_f64(basis),
            p,
            block_values_f64(var),
            whiten,
        )?;
        model.total_variance = pack.meta_f64("total_variance", path)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_pack()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pack(&ModelPack::read(path)?, path)
    }
}

/// Projects every row of `m` through `model`, rounding to f32.
pub fn apply_pca(model: &PcaModel, m: &DescriptorMatrix) -> Result<DescriptorMatrix> {
    let projected = model.project(m)?;
    DescriptorMatrix::new(
        m.rows(),
        model.output_dim,
        projected.into_iter().map(|v| v as f32).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(n: usize, d: usize, seed: u64) -> DescriptorMatrix {
        let mut rng = crate::sampling::rng(seed);
        let values = (0..n * d)
            .map(|i| {
                let z: f64 = StandardNormal.sample(&mut rng);
                // anisotropic so eigenvalues are well separated
                (z * (1.0 + (i % d) as f64)) as f32
            })
            .collect();
        DescriptorMatrix::new(n, d, values).unwrap()
    }

    fn dot(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }

    #[test]
    fn line_y_equals_2x() {
        let pts: Vec<[f64; 2]> = [-2.0, -1.0, 0.5, 1.0, 3.0]
            .iter()
            .map(|&x| [x, 2.0 * x])
            .collect();
        let m = DescriptorMatrix::from_rows_f64(2, &pts).unwrap();
        let model = fit_pca(&m, 1, 0).unwrap();

        // oracle: direct eigendecomposition of the 2x2 covariance
        let mean = m.column_mean().unwrap();
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for r in m.iter_rows() {
            let (x, y) = (r[0] as f64 - mean[0], r[1] as f64 - mean[1]);
            sxx += x * x;
            sxy += x * y;
            syy += y * y;
        }
        let n1 = (m.rows() - 1) as f64;
        let (a, b, c) = (sxx / n1, sxy / n1, syy / n1);
        let lambda = 0.5 * (a + c + ((a - c).powi(2) + 4.0 * b * b).sqrt());
        let (vx, vy) = (b, lambda - a);
        let norm = (vx * vx + vy * vy).sqrt();
        let expected = [vx / norm, vy / norm];

        let col = model.basis_column(0);
        assert!((col[0] - expected[0]).abs() < 1e-9);
        assert!((col[1] - expected[1]).abs() < 1e-9);
        assert!((col[0] - 1.0 / 5f64.sqrt()).abs() < 1e-6);
        assert!((col[1] - 2.0 / 5f64.sqrt()).abs() < 1e-6);

        let proj = model.project(&m).unwrap();
        let var = proj.iter().map(|v| v * v).sum::<f64>() / n1;
        assert!((var - (a + c)).abs() < 1e-9, "{var} vs {}", a + c);
        assert!((model.total_variance() - (a + c)).abs() < 1e-9);
    }

    #[test]
    fn full_basis_is_isometry() {
        let m = random_matrix(40, 6, 1);
        let model = fit_pca(&m, 6, 0).unwrap();
        let proj = model.project(&m).unwrap();
        for i in 0..m.rows() {
            for k in (i + 1)..m.rows() {
                let orig: f64 = m
                    .row(i)
                    .iter()
                    .zip(m.row(k))
                    .map(|(a, b)| (*a as f64 - *b as f64).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let pd: f64 = proj[i * 6..(i + 1) * 6]
                    .iter()
                    .zip(&proj[k * 6..(k + 1) * 6])
                    .map(|(a, b)| (a - b).powi(2))
                    .sum::<f64>()
                    .sqrt();
                assert!((orig - pd).abs() < 1e-6);
            }
        }
        for i in 0..m.rows() {
            let rec = model.reconstruct(&proj[i * 6..(i + 1) * 6]);
            for (a, b) in rec.iter().zip(m.row(i)) {
                assert!((a - *b as f64).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn mean_row_maps_to_zero() {
        // integer data over 4 rows: the mean is exactly representable in f32
        let rows: Vec<[f64; 3]> = vec![[1.0, 2.0, 7.0], [3.0, -2.0, 5.0], [0.0, 4.0, 1.0], [4.0, 0.0, 3.0]];
        let m = DescriptorMatrix::from_rows_f64(3, &rows).unwrap();
        let model = fit_pca(&m, 2, 0).unwrap();
        let mean: Vec<f32> = model.mean().iter().map(|&v| v as f32).collect();
        assert_eq!(model.project_row(&mean), vec![0.0, 0.0]);
    }

    #[test]
    fn projection_is_centered_and_decorrelated() {
        for (n, d, p) in [(60, 8, 5), (12, 30, 6)] {
            let m = random_matrix(n, d, 3);
            let model = fit_pca(&m, p, 0).unwrap();
            let proj = model.project(&m).unwrap();
            for c in 0..p {
                let mean: f64 = (0..n).map(|i| proj[i * p + c]).sum::<f64>() / n as f64;
                assert!(mean.abs() < 1e-9, "mean {mean}");
            }
            for a in 0..p {
                for b in (a + 1)..p {
                    let cov: f64 =
                        (0..n).map(|i| proj[i * p + a] * proj[i * p + b]).sum::<f64>() / (n - 1) as f64;
                    assert!(cov.abs() < 1e-6, "cov({a},{b}) = {cov}");
                }
            }
            let ev = model.explained_variance();
            assert!(ev.windows(2).all(|w| w[0] >= w[1]));
            for a in 0..p {
                let ca = model.basis_column(a);
                for b in 0..p {
                    let expected = if a == b { 1.0 } else { 0.0 };
                    assert!((dot(&ca, &model.basis_column(b)) - expected).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn gram_and_covariance_routes_agree() {
        // 9 samples in 8 dims (covariance route) vs same data padded to 20 dims (Gram route)
        let m = random_matrix(9, 8, 4);
        let padded: Vec<f32> = m
            .iter_rows()
            .flat_map(|r| r.iter().copied().chain(std::iter::repeat(0.0).take(12)))
            .collect();
        let wide = DescriptorMatrix::new(9, 20, padded).unwrap();
        let a = fit_pca(&m, 4, 0).unwrap();
        let b = fit_pca(&wide, 4, 0).unwrap();
        for c in 0..4 {
            assert!((a.explained_variance()[c] - b.explained_variance()[c]).abs() < 1e-8);
            let ca = a.basis_column(c);
            let cb = b.basis_column(c);
            for j in 0..8 {
                assert!((ca[j] - cb[j]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn rank_deficient_basis_is_completed() {
        // 4 samples in 10 dims spanning one direction; ask for 3 components
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..10).map(|j| i as f64 * (j as f64 + 1.0)).collect())
            .collect();
        let m = DescriptorMatrix::from_rows_f64(10, &rows).unwrap();
        let model = fit_pca(&m, 3, 0).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expected = if a == b { 1.0 } else { 0.0 };
                assert!((dot(&model.basis_column(a), &model.basis_column(b)) - expected).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn sign_convention() {
        let m = random_matrix(30, 5, 5);
        let model = fit_pca(&m, 5, 0).unwrap();
        for c in 0..5 {
            let col = model.basis_column(c);
            let big = col.iter().copied().fold(0.0f64, |acc, v| if v.abs() > acc.abs() { v } else { acc });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn parameter_and_degenerate_errors() {
        let m = random_matrix(5, 4, 6);
        assert!(matches!(fit_pca(&m, 0, 0), Err(Error::Param(_))));
        assert!(matches!(fit_pca(&m, 5, 0), Err(Error::Param(_))));
        let small = random_matrix(3, 4, 6);
        assert!(matches!(fit_pca(&small, 3, 0), Err(Error::Param(_))));
        let one = random_matrix(1, 4, 6);
        assert!(matches!(fit_pca(&one, 1, 0), Err(Error::Param(_))));
        let flat = DescriptorMatrix::new(4, 2, vec![1.0; 8]).unwrap();
        assert!(matches!(fit_pca(&flat, 1, 0), Err(Error::Degenerate(_))));
        let model = fit_pca(&m, 2, 0).unwrap();
        let wrong = random_matrix(3, 3, 0);
        assert!(matches!(apply_pca(&model, &wrong), Err(Error::Param(_))));
    }

    #[test]
    fn fc6_sized_reduction_to_256() {
        let mut rng = crate::sampling::rng(9);
        let values: Vec<f32> = (0..300 * 4096).map(|_| rng.random::<f32>()).collect();
        let m = DescriptorMatrix::new(300, 4096, values).unwrap();
        let model = fit_pca(&m, 256, 0).unwrap();
        assert_eq!(model.output_dim(), 256);
        assert_eq!(apply_pca(&model, &m.select_rows(&[0, 1])).unwrap().dim(), 256);
    }

    #[test]
    fn pool5_rows_halved() {
        let m = random_matrix(600, 512, 10);
        let model = fit_pca(&m, 256, 0).unwrap();
        let out = apply_pca(&model, &m.select_rows(&[0, 1, 2])).unwrap();
        assert_eq!((out.rows(), out.dim()), (3, 256));
    }

    #[test]
    fn whitening_gives_unit_variance() {
        let m = random_matrix(80, 4, 11);
        let mut opts = PcaOptions::new(3, 0);
        opts.whiten = true;
        let model = fit_pca_with(&m, &opts).unwrap();
        let proj = model.project(&m).unwrap();
        for c in 0..3 {
            let var: f64 = (0..80).map(|i| proj[i * 3 + c].powi(2)).sum::<f64>() / 79.0;
            assert!((var - 1.0).abs() < 1e-6);
        }
        let rec = model.reconstruct(&proj[..3]);
        assert_eq!(rec.len(), 4);
    }

    #[test]
    fn subsampling_is_seeded() {
        let m = random_matrix(100, 4, 12);
        let mut opts = PcaOptions::new(2, 5);
        opts.max_samples = Some(30);
        let a = fit_pca_with(&m, &opts).unwrap();
        let b = fit_pca_with(&m, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pack_roundtrip_within_f32() {
        let m = random_matrix(50, 6, 13);
        let model = fit_pca(&m, 4, 0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pca.pack");
        model.save(&p).unwrap();
        let back = PcaModel::load(&p).unwrap();
        assert_eq!(back.output_dim(), 4);
        for (a, b) in back.basis.iter().zip(&model.basis) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
        // saving the reloaded model reproduces the file exactly
        let q = dir.path().join("pca2.pack");
        back.save(&q).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }
}
