//! Slow, direct reference implementations used to check the library.
#![allow(dead_code)]

use actionvec::codebook::Codebook;
use actionvec::datamodel::DescriptorMatrix;
use actionvec::gmm::GmmModel;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, dim: usize, scale: f64) -> DescriptorMatrix {
    let values = (0..rows * dim)
        .map(|_| (rng.random_range(-1.0..1.0) * scale) as f32)
        .collect();
    DescriptorMatrix::new(rows, dim, values).unwrap()
}

pub fn random_codebook(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> Codebook {
    let centers = (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    Codebook::new(k, dim, centers).unwrap()
}

pub fn random_gmm(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> GmmModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut priors: Vec<f64> = raw.iter().map(|p| p / total).collect();
    // Absorb rounding so the priors sum to one as closely as f64 allows.
    let rest: f64 = priors[1..].iter().sum();
    priors[0] = 1.0 - rest;
    let means = (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect();
    let variances = (0..k * dim).map(|_| rng.random_range(0.3..2.0)).collect();
    GmmModel::new(priors, means, variances, dim, 1e-6).unwrap()
}

/// Per center, the sum of `x - mu` over descriptors whose closest center
/// (lowest index on ties) is that center. Centers are scanned exhaustively.
pub fn vlad_oracle(centers: &[Vec<f64>], xs: &[Vec<f64>]) -> Vec<f64> {
    let d = centers[0].len();
    let mut out = vec![vec![0.0; d]; centers.len()];
    for x in xs {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in centers.iter().enumerate() {
            let dist: f64 = (0..d).map(|j| (x[j] - c[j]).powi(2)).sum();
            if dist < best_d {
                best_d = dist;
                best = i;
            }
        }
        for j in 0..d {
            out[best][j] += x[j] - centers[best][j];
        }
    }
    out.concat()
}

/// Product of univariate normal densities, evaluated directly.
pub fn diag_normal_pdf(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    x.iter()
        .zip(mean)
        .zip(var)
        .map(|((&x, &m), &v)| (-(x - m).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt())
        .product()
}

pub fn posterior_oracle(g: &GmmModel, x: &[f64]) -> Vec<f64> {
    let w: Vec<f64> = (0..g.k())
        .map(|k| g.priors()[k] * diag_normal_pdf(x, g.mean(k), g.variance(k)))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter().map(|v| v / total).collect()
}

/// First- and second-order Fisher statistics by a direct loop over
/// descriptors i, dimensions j and modes k; all `u` blocks then all `v`.
pub fn fisher_oracle(g: &GmmModel, xs: &[Vec<f64>]) -> Vec<f64> {
    let (kk, d) = (g.k(), g.dim());
    let n = xs.len() as f64;
    let q: Vec<Vec<f64>> = xs.iter().map(|x| posterior_oracle(g, x)).collect();
    let mut u = vec![0.0; kk * d];
    let mut v = vec![0.0; kk * d];
    for k in 0..kk {
        let pi = g.priors()[k];
        for j in 0..d {
            let mu = g.mean(k)[j];
            let sigma = g.variance(k)[j].sqrt();
            let mut su = 0.0;
            let mut sv = 0.0;
            for (i, x) in xs.iter().enumerate() {
                let z = (x[j] - mu) / sigma;
                su += q[i][k] * z;
                sv += q[i][k] * (z * z - 1.0);
            }
            u[k * d + j] = su / (n * pi.sqrt());
            v[k * d + j] = sv / (n * (2.0 * pi).sqrt());
        }
    }
    u.extend(v);
    u
}

pub fn rows_f64(m: &DescriptorMatrix) -> Vec<Vec<f64>> {
    m.iter_rows().map(|r| r.iter().map(|&v| v as f64).collect()).collect()
}

pub fn centers_of(cb: &Codebook) -> Vec<Vec<f64>> {
    (0..cb.k()).map(|i| cb.center(i).to_vec()).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// `0.5 |theta|^2 + C sum_i max(0, 1 - y_i theta.[x_i, 1])`, bias regularized.
pub fn svm_primal(theta: &[f64], xs: &[Vec<f64>], ys: &[f64], c: f64) -> f64 {
    let reg: f64 = 0.5 * theta.iter().map(|t| t * t).sum::<f64>();
    let d = theta.len() - 1;
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| {
            let s: f64 = (0..d).map(|j| theta[j] * x[j]).sum::<f64>() + theta[d];
            (1.0 - y * s).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Minimizes the primal by plain subgradient descent with the step schedule
/// for 1-strongly-convex objectives, tracking the best value seen as well
/// as a weighted iterate average.
pub fn svm_subgradient_oracle(xs: &[Vec<f64>], ys: &[f64], c: f64, iters: usize) -> f64 {
    let d = xs[0].len();
    let mut theta = vec![0.0; d + 1];
    let mut avg = vec![0.0; d + 1];
    let mut weight = 0.0;
    let mut best = svm_primal(&theta, xs, ys, c);
    for t in 1..=iters {
        let mut g = theta.clone();
        for (x, &y) in xs.iter().zip(ys) {
            let s: f64 = (0..d).map(|j| theta[j] * x[j]).sum::<f64>() + theta[d];
            if y * s < 1.0 {
                for j in 0..d {
                    g[j] -= c * y * x[j];
                }
                g[d] -= c * y;
            }
        }
        let step = 2.0 / (t as f64 + 1.0);
        for (th, gi) in theta.iter_mut().zip(&g) {
            *th -= step * gi;
        }
        let w = t as f64;
        weight += w;
        for (a, th) in avg.iter_mut().zip(&theta) {
            *a += w / weight * (th - *a);
        }
        if t % 64 == 0 || t == iters {
            best = best.min(svm_primal(&theta, xs, ys, c)).min(svm_primal(&avg, xs, ys, c));
        }
    }
    best
}
