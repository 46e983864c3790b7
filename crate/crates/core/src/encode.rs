//! Per-video encoders and normalizations.
//!
//! VLAD and Fisher vectors accumulate descriptors in a canonical (sorted) row
//! order, so their output is bit-identical under any permutation of the input
//! rows.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::codebook::Codebook;
use crate::datamodel::{l2_norm, ActivationTensor, DescriptorMatrix, Encoding, EncodingKind};
use crate::error::{Error, Result};
use crate::gmm::GmmModel;
use crate::reduce::{apply_pca, PcaModel};

pub const DEFAULT_ALPHA: f64 = 0.2;
pub const DEFAULT_K: usize = 256;
pub const DEFAULT_PCA_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EncoderConfig {
    /// Power-law exponent, `0 < alpha <= 1`.
    pub alpha: f64,
    pub vlad_k: usize,
    pub fv_k: usize,
    pub pca_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            vlad_k: DEFAULT_K,
            fv_k: DEFAULT_K,
            pca_dim: DEFAULT_PCA_DIM,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if self.vlad_k == 0 || self.fv_k == 0 || self.pca_dim == 0 {
            return Err(Error::param("vlad_k, fv_k and pca_dim must be at least 1"));
        }
        Ok(())
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::param(format!("power-law alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

fn non_empty(m: &DescriptorMatrix, what: &str) -> Result<()> {
    if m.is_empty() {
        return Err(Error::EmptyVideo(format!("{what} received no rows")));
    }
    Ok(())
}

/// Average of per-frame object score vectors.
pub fn objects1k(frame_scores: &DescriptorMatrix) -> Result<Encoding> {
    non_empty(frame_scores, "objects1k")?;
    let mean = frame_scores.column_mean().expect("non-empty");
    Encoding::new(
        EncodingKind::Objects1k,
        mean,
        format!("objects1k(frames={})", frame_scores.rows()),
    )
}

/// Column mean over per-frame activations.
pub fn average_pool(frames: &DescriptorMatrix) -> Result<Encoding> {
    non_empty(frames, "average_pool")?;
    let mean = frames.column_mean().expect("non-empty");
    Encoding::new(
        EncodingKind::Avgpool,
        mean,
        format!("avgpool(frames={})", frames.rows()),
    )
}

/// `side^2` descriptors of `channels` dims, row `r * side + c` holding location `(r, c)`.
pub fn lcd_reshape(t: &ActivationTensor) -> DescriptorMatrix {
    // ActivationTensor is stored location-major, so this is a relabelling.
    DescriptorMatrix::new(t.side() * t.side(), t.channels(), t.values().to_vec())
        .expect("tensor invariants guarantee a valid matrix")
}

/// Signed power `|v|^alpha * sign(v)`, with `sign(0) = 0`.
pub fn power_law(v: &[f64], alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    Ok(v.iter().map(|&x| signed_pow(x, alpha)).collect())
}

fn signed_pow(x: f64, alpha: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else if alpha == 1.0 {
        x
    } else {
        x.signum() * x.abs().powf(alpha)
    }
}

/// `v / ||v||_2`; the zero vector maps to itself.
pub fn l2_normalize(v: &[f64]) -> Vec<f64> {
    let norm = l2_norm(v);
    if norm > 0.0 {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

fn normalize_in_place(v: &mut [f64]) {
    let norm = l2_norm(v);
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Row indices sorted lexicographically by row contents.
fn canonical_order(m: &DescriptorMatrix) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..m.rows()).collect();
    idx.sort_by(|&a, &b| {
        m.row(a)
            .iter()
            .zip(m.row(b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    idx
}

/// Un-normalized VLAD: per center, the sum of residuals of the descriptors
/// assigned to it, concatenated center-major (`k * dim` values).
pub fn vlad_residuals(cb: &Codebook, m: &DescriptorMatrix) -> Result<Vec<f64>> {
    if m.dim() != cb.dim() {
        return Err(Error::param(format!(
            "VLAD codebook dimension is {}, descriptors have {}",
            cb.dim(),
            m.dim()
        )));
    }
    non_empty(m, "VLAD")?;
    let d = cb.dim();
    let mut acc = vec![0.0; cb.k() * d];
    for i in canonical_order(m) {
        let x = m.row(i);
        let c = cb.nearest(x).0;
        let center = cb.center(c);
        for ((a, &xv), &mu) in acc[c * d..(c + 1) * d].iter_mut().zip(x).zip(center) {
            *a += xv as f64 - mu;
        }
    }
    Ok(acc)
}

/// VLAD with per-center intra-normalization, power-law and L2 normalization.
pub fn encode_vlad(cb: &Codebook, m: &DescriptorMatrix, cfg: &EncoderConfig) -> Result<Encoding> {
    check_alpha(cfg.alpha)?;
    let mut v = vlad_residuals(cb, m)?;
    for sub in v.chunks_exact_mut(cb.dim()) {
        normalize_in_place(sub);
    }
    let v = l2_normalize(&power_law(&v, cfg.alpha)?);
    Encoding::new(
        EncodingKind::Vlad,
        v,
        format!("vlad(k={},d={},alpha={})", cb.k(), cb.dim(), cfg.alpha),
    )
}

/// Un-normalized Fisher vector: first-order statistics `u` for every mode,
/// then second-order statistics `v` for every mode (`2 * k * dim` values).
pub fn fisher_statistics(g: &GmmModel, m: &DescriptorMatrix) -> Result<Vec<f64>> {
    non_empty(m, "Fisher")?;
    let q = g.posteriors(m)?;
    let (k, d) = (g.k(), g.dim());
    let mut u = vec![0.0; k * d];
    let mut v = vec![0.0; k * d];
    let sigmas: Vec<Vec<f64>> = (0..k)
        .map(|c| g.variance(c).iter().map(|s| s.sqrt()).collect())
        .collect();
    for i in canonical_order(m) {
        let x = m.row(i);
        let qi = &q[i * k..(i + 1) * k];
        for c in 0..k {
            let w = qi[c];
            if w == 0.0 {
                continue;
            }
            let mu = g.mean(c);
            for j in 0..d {
                let z = (x[j] as f64 - mu[j]) / sigmas[c][j];
                u[c * d + j] += w * z;
                v[c * d + j] += w * (z * z - 1.0);
            }
        }
    }
    let n = m.rows() as f64;
    for c in 0..k {
        let prior = g.priors()[c];
        let (su, sv) = if prior > 0.0 {
            (1.0 / (n * prior.sqrt()), 1.0 / (n * (2.0 * prior).sqrt()))
        } else {
            (0.0, 0.0)
        };
        u[c * d..(c + 1) * d].iter_mut().for_each(|x| *x *= su);
        v[c * d..(c + 1) * d].iter_mut().for_each(|x| *x *= sv);
    }
    u.extend(v);
    Ok(u)
}

/// Fisher vector followed by power-law and L2 normalization.
pub fn encode_fisher(g: &GmmModel, m: &DescriptorMatrix, cfg: &EncoderConfig) -> Result<Encoding> {
    check_alpha(cfg.alpha)?;
    let fv = fisher_statistics(g, m)?;
    let fv = l2_normalize(&power_law(&fv, cfg.alpha)?);
    Encoding::new(
        EncodingKind::Fisher,
        fv,
        format!("fisher(k={},d={},alpha={})", g.k(), g.dim(), cfg.alpha),
    )
}

/// Concatenates encodings in order.
pub fn fuse(parts: &[Encoding]) -> Result<Encoding> {
    fuse_with(parts, false)
}

/// Like [`fuse`], optionally L2-normalizing the concatenation.
pub fn fuse_with(parts: &[Encoding], l2: bool) -> Result<Encoding> {
    if parts.is_empty() {
        return Err(Error::param("cannot fuse an empty list of encodings"));
    }
    let mut values = Vec::with_capacity(parts.iter().map(Encoding::dim).sum());
    for p in parts {
        values.extend_from_slice(p.values());
    }
    if l2 {
        normalize_in_place(&mut values);
    }
    let kinds: Vec<&str> = parts.iter().map(|p| p.kind().as_str()).collect();
    Encoding::new(EncodingKind::Fused, values, format!("fused[{}]", kinds.join("+")))
}

/// Model used by the latent-concept-descriptor encoder.
#[derive(Debug, Clone, Copy)]
pub enum LcdModel<'a> {
    Vlad(&'a Codebook),
    Fisher(&'a GmmModel),
}

/// Stacks the latent concept descriptors of every frame, reduces them with
/// `pca`, and encodes the result with VLAD or a Fisher vector.
pub fn encode_lcd(
    frames: &[ActivationTensor],
    pca: &PcaModel,
    model: LcdModel<'_>,
    cfg: &EncoderConfig,
) -> Result<Encoding> {
    let first = frames
        .first()
        .ok_or_else(|| Error::EmptyVideo("latent concept encoder received no frames".into()))?;
    let (side, channels) = (first.side(), first.channels());
    if let Some(bad) = frames.iter().find(|t| t.side() != side || t.channels() != channels) {
        return Err(Error::param(format!(
            "frame {} has shape {}x{}x{}, expected {side}x{side}x{channels}",
            bad.frame_index(),
            bad.side(),
            bad.side(),
            bad.channels()
        )));
    }
    if pca.input_dim() != channels {
        return Err(Error::param(format!(
            "PCA expects {} channels, frames have {channels}",
            pca.input_dim()
        )));
    }
    let blocks: Vec<DescriptorMatrix> = frames.iter().map(lcd_reshape).collect();
    let stacked = DescriptorMatrix::vstack(&blocks)?;
    let reduced = apply_pca(pca, &stacked)?;
    let (kind, enc) = match model {
        LcdModel::Vlad(cb) => (EncodingKind::LcdVlad, encode_vlad(cb, &reduced, cfg)?),
        LcdModel::Fisher(g) => (EncodingKind::LcdFisher, encode_fisher(g, &reduced, cfg)?),
    };
    let source = format!(
        "lcd(side={side},channels={channels},frames={},pca={})/{}",
        frames.len(),
        pca.output_dim(),
        enc.source()
    );
    Encoding::new(kind, enc.values().to_vec(), source)
}
