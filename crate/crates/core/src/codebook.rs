//! K-means codebooks (k-means++ seeding, Lloyd iterations).

use std::path::Path;

use rand::Rng;
use serde_json::json;

use crate::container::{block_f64, block_values_f64, ModelPack};
use crate::datamodel::DescriptorMatrix;
use crate::error::{Error, Result};
use crate::sampling::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    k: usize,
    dim: usize,
    /// Row-major `k x dim`.
    centers: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct KMeansParams {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
}

impl KMeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
        }
    }
}

/// Result of a k-means run together with its convergence trace.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub codebook: Codebook,
    pub assignments: Vec<usize>,
    /// Within-cluster SSE after each assignment step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f32]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(c, &x)| {
            let d = x as f64 - c;
            d * d
        })
        .sum()
}

impl Codebook {
    pub fn new(k: usize, dim: usize, centers: Vec<f64>) -> Result<Self> {
        if k == 0 || dim == 0 {
            return Err(Error::param("codebook needs k >= 1 and dim >= 1"));
        }
        if centers.len() != k * dim {
            return Err(Error::param(format!(
                "codebook {k}x{dim} needs {} values, got {}",
                k * dim,
                centers.len()
            )));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("codebook centers must be finite"));
        }
        Ok(Self { k, dim, centers })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn center(&self, i: usize) -> &[f64] {
        &self.centers[i * self.dim..(i + 1) * self.dim]
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// Index of the nearest center and its squared distance; ties go to the lowest index.
    pub fn nearest(&self, x: &[f32]) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.k {
            let d = sq_dist(self.center(i), x);
            if d < best.1 {
                best = (i, d);
            }
        }
        best
    }

    pub fn assign(&self, x: &[f32]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::param(format!(
                "codebook dimension is {}, descriptor has {}",
                self.dim,
                x.len()
            )));
        }
        Ok(self.nearest(x).0)
    }

    pub fn to_pack(&self) -> Result<ModelPack> {
        Ok(
            ModelPack::new("codebook", json!({"k": self.k, "dim": self.dim}))
                .with_block("centers", block_f64(self.k, self.dim, &self.centers)?),
        )
    }

    pub fn from_pack(pack: &ModelPack, path: &Path) -> Result<Self> {
        pack.expect("codebook", path)?;
        let k = pack.meta_usize("k", path)?;
        let dim = pack.meta_usize("dim", path)?;
        let centers = pack.require("centers", path)?;
        if centers.rows() != k || centers.dim() != dim {
            return Err(Error::Container {
                path: path.to_path_buf(),
                reason: "codebook block shape disagrees with header".into(),
            });
        }
        Self::new(k, dim, block_values_f64(centers))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_pack()?.write(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_pack(&ModelPack::read(path)?, path)
    }
}

pub fn fit_kmeans(
    samples: &DescriptorMatrix,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<Codebook> {
    fit_kmeans_traced(
        samples,
        &KMeansParams {
            k,
            seed,
            max_iter,
            tol,
        },
    )
    .map(|f| f.codebook)
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
fn seed_centers(samples: &DescriptorMatrix, k: usize, seed: u64) -> Vec<f64> {
    let n = samples.rows();
    let d = samples.dim();
    let mut rng = rng(seed);
    let mut centers = Vec::with_capacity(k * d);
    let first = rng.random_range(0..n);
    centers.extend(samples.row(first).iter().map(|&v| v as f64));
    let mut dist: Vec<f64> = samples.iter_rows().map(|r| sq_dist(&centers[..d], r)).collect();
    for _ in 1..k {
        let total: f64 = dist.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in dist.iter().enumerate() {
                acc += w;
                if acc > target && w > 0.0 {
                    chosen = i;
                    break;
                }
            }
            // guard against landing on a zero-weight tail from rounding
            if dist[chosen] == 0.0 {
                chosen = dist.iter().rposition(|&w| w > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centers.len();
        centers.extend(samples.row(pick).iter().map(|&v| v as f64));
        let c = centers[start..].to_vec();
        for (dst, r) in dist.iter_mut().zip(samples.iter_rows()) {
            *dst = dst.min(sq_dist(&c, r));
        }
    }
    centers
}

pub fn fit_kmeans_traced(samples: &DescriptorMatrix, params: &KMeansParams) -> Result<KMeansFit> {
    let k = params.k;
    let n = samples.rows();
    let d = samples.dim();
    if k == 0 {
        return Err(Error::param("k-means needs k >= 1"));
    }
    if n < k {
        return Err(Error::param(format!("k-means with k={k} needs at least {k} samples, got {n}")));
    }

    let mut cb = Codebook::new(k, d, seed_centers(samples, k, params.seed))?;
    let mut assignments = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut sse_history = Vec::new();
    let mut iterations = 0;

    loop {
        let mut changed = false;
        for (i, r) in samples.iter_rows().enumerate() {
            let (c, dist) = cb.nearest(r);
            if assignments[i] != c {
                assignments[i] = c;
                changed = true;
            }
            dists[i] = dist;
        }
        sse_history.push(dists.iter().sum());
        if !changed || iterations >= params.max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![0.0; k * d];
        let mut counts = vec![0usize; k];
        for (r, &c) in samples.iter_rows().zip(&assignments) {
            counts[c] += 1;
            for (s, &v) in sums[c * d..(c + 1) * d].iter_mut().zip(r) {
                *s += v as f64;
            }
        }
        let mut movement: f64 = 0.0;
        let mut new_centers = cb.centers.clone();
        for c in 0..k {
            if counts[c] == 0 {
                // empty cell: move it to the point worst served by its own center
                let far = (0..n)
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .expect("n >= k >= 1");
                dists[far] = 0.0;
                for (dst, &v) in new_centers[c * d..(c + 1) * d].iter_mut().zip(samples.row(far)) {
                    *dst = v as f64;
                }
            } else {
                let inv = 1.0 / counts[c] as f64;
                for (dst, &s) in new_centers[c * d..(c + 1) * d].iter_mut().zip(&sums[c * d..]) {
                    *dst = s * inv;
                }
            }
            let shift: f64 = new_centers[c * d..(c + 1) * d]
                .iter()
                .zip(cb.center(c))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            movement = movement.max(shift);
        }
        cb.centers = new_centers;
        if movement < params.tol {
            // final assignment pass against the settled centers
            for (i, r) in samples.iter_rows().enumerate() {
                let (c, dist) = cb.nearest(r);
                assignments[i] = c;
                dists[i] = dist;
            }
            sse_history.push(dists.iter().sum());
            break;
        }
    }

    Ok(KMeansFit {
        codebook: cb,
        assignments,
        sse_history,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn blobs(seed: u64, per_blob: usize, centers: &[[f64; 2]], sd: f64) -> DescriptorMatrix {
        let mut rng = rng(seed);
        let noise = Normal::new(0.0, sd).unwrap();
        let rows: Vec<[f64; 2]> = centers
            .iter()
            .flat_map(|c| {
                (0..per_blob)
                    .map(|_| [c[0] + noise.sample(&mut rng), c[1] + noise.sample(&mut rng)])
                    .collect::<Vec<_>>()
            })
            .collect();
        DescriptorMatrix::from_rows_f64(2, &rows).unwrap()
    }

    #[test]
    fn singleton_clusters_recover_points() {
        let pts = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0], [10.0, 10.0], [5.0, 20.0]];
        let m = DescriptorMatrix::from_rows_f64(2, &pts).unwrap();
        let cb = fit_kmeans(&m, 5, 3, 100, 1e-9).unwrap();
        for p in &pts {
            let found = (0..5).any(|i| {
                let c = cb.center(i);
                (c[0] - p[0]).abs() < 1e-9 && (c[1] - p[1]).abs() < 1e-9
            });
            assert!(found, "point {p:?} not a center");
        }
    }

    /// Exhaustive search over all 2-partitions of the points.
    fn best_two_partition(m: &DescriptorMatrix) -> [[f64; 2]; 2] {
        let n = m.rows();
        let mut best = (f64::INFINITY, [[0.0; 2]; 2]);
        for mask in 1u32..(1 << n) - 1 {
            let mut sums = [[0.0; 2]; 2];
            let mut counts = [0.0; 2];
            for i in 0..n {
                let g = ((mask >> i) & 1) as usize;
                counts[g] += 1.0;
                sums[g][0] += m.row(i)[0] as f64;
                sums[g][1] += m.row(i)[1] as f64;
            }
            let means = [
                [sums[0][0] / counts[0], sums[0][1] / counts[0]],
                [sums[1][0] / counts[1], sums[1][1] / counts[1]],
            ];
            let sse: f64 = (0..n)
                .map(|i| {
                    let g = ((mask >> i) & 1) as usize;
                    (m.row(i)[0] as f64 - means[g][0]).powi(2) + (m.row(i)[1] as f64 - means[g][1]).powi(2)
                })
                .sum();
            if sse < best.0 {
                best = (sse, means);
            }
        }
        best.1
    }

    #[test]
    fn two_blobs_match_exhaustive_partition() {
        let m = blobs(1, 6, &[[0.0, 0.0], [10.0, 10.0]], 0.3);
        let oracle = best_two_partition(&m);
        let cb = fit_kmeans(&m, 2, 11, 100, 1e-9).unwrap();
        for o in &oracle {
            let near = (0..2).any(|i| {
                let c = cb.center(i);
                ((c[0] - o[0]).powi(2) + (c[1] - o[1]).powi(2)).sqrt() < 0.5
            });
            assert!(near, "oracle mean {o:?} not matched by {:?}", cb.centers());
        }
    }

    #[test]
    fn sse_non_increasing_and_deterministic() {
        let m = blobs(2, 40, &[[0.0, 0.0], [3.0, 1.0], [1.0, 4.0], [5.0, 5.0]], 1.5);
        let params = KMeansParams {
            k: 6,
            seed: 5,
            max_iter: 200,
            tol: 0.0,
        };
        let fit = fit_kmeans_traced(&m, &params).unwrap();
        for w in fit.sse_history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "{:?}", fit.sse_history);
        }
        let again = fit_kmeans_traced(&m, &params).unwrap();
        assert_eq!(fit.codebook, again.codebook);
    }

    #[test]
    fn duplicate_heavy_data_keeps_k_centers() {
        // 3 distinct values repeated, k = 3
        let rows: Vec<[f64; 1]> = (0..30).map(|i| [(i % 3) as f64]).collect();
        let m = DescriptorMatrix::from_rows_f64(1, &rows).unwrap();
        let cb = fit_kmeans(&m, 3, 0, 50, 1e-9).unwrap();
        let mut c: Vec<f64> = (0..3).map(|i| cb.center(i)[0]).collect();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn assign_rules() {
        let cb = Codebook::new(4, 2, vec![0.0, 0.0, 2.0, 0.0, 5.0, 5.0, -3.0, 1.0]).unwrap();
        assert_eq!(cb.assign(&[-3.0, 1.0]).unwrap(), 3);
        // equidistant from centers 0 and 1
        assert_eq!(cb.assign(&[1.0, 0.0]).unwrap(), 0);
        assert!(matches!(cb.assign(&[1.0]), Err(Error::Param(_))));

        let mut r = rng(77);
        for _ in 0..200 {
            let x = [r.random_range(-6.0f32..6.0), r.random_range(-6.0f32..6.0)];
            let brute = (0..4)
                .map(|i| {
                    let c = cb.center(i);
                    ((x[0] as f64 - c[0]).powi(2) + (x[1] as f64 - c[1]).powi(2), i)
                })
                .fold((f64::INFINITY, 0), |best, cur| if cur.0 < best.0 { cur } else { best });
            assert_eq!(cb.assign(&x).unwrap(), brute.1);
        }
    }

    #[test]
    fn too_few_rows_is_error() {
        let m = DescriptorMatrix::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert!(matches!(fit_kmeans(&m, 3, 0, 10, 1e-6), Err(Error::Param(_))));
    }

    #[test]
    fn k256_codebook() {
        let mut r = rng(8);
        let values: Vec<f32> = (0..1000 * 8).map(|_| r.random::<f32>()).collect();
        let m = DescriptorMatrix::new(1000, 8, values).unwrap();
        let cb = fit_kmeans(&m, 256, 1, 10, 1e-6).unwrap();
        assert_eq!(cb.k(), 256);
    }

    #[test]
    fn pack_roundtrip() {
        let m = blobs(3, 10, &[[0.0, 0.0], [4.0, 4.0]], 1.0);
        let cb = fit_kmeans(&m, 2, 0, 50, 1e-9).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cb.pack");
        cb.save(&p).unwrap();
        let back = Codebook::load(&p).unwrap();
        for (a, b) in back.centers().iter().zip(cb.centers()) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1.0));
        }
    }
}
