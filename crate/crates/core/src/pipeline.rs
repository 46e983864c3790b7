//! End-to-end experiment orchestration over a manifest.
//!
//! Each stage persists its artifacts under `<output_dir>/<split>/`:
//!
//! ```text
//! models/pca-<layer>.pack          PCA per layer
//! models/kmeans-<layer>-<pca|raw>.pack
//! models/gmm-<layer>-<pca|raw>.pack
//! encodings/<encoder>-<layer>/<id>.desc (+ .json sidecar)
//! encodings/fused/<id>.desc (+ .json sidecar)
//! svm.pack
//! report.json, report.txt
//! ```
//!
//! Models are fitted on training-split descriptors only.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classify::{evaluate, train_one_vs_all_with, Evaluation, SvmModel, SvmParams};
use crate::codebook::{fit_kmeans_traced, Codebook, KMeansParams};
use crate::datamodel::{
    load_manifest, read_descriptor_file, read_descriptor_header, read_encoding, write_encoding,
    ActivationTensor, Dataset, DescriptorMatrix, Encoding, EncodingKind,
};
use crate::encode::{
    average_pool, encode_fisher, encode_lcd, encode_vlad, fuse_with, objects1k, EncoderConfig,
    LcdModel,
};
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm_traced, GmmModel, GmmParams};
use crate::reduce::{apply_pca, fit_pca, PcaModel};
use crate::sampling::sample_indices;

/// Encoder applied to one source layer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub encoder: EncodingKind,
    pub layer: String,
    /// Reduce descriptors with PCA before VLAD/Fisher encoding. Always on for
    /// the latent-concept encoders; ignored for the others.
    #[serde(default = "yes")]
    pub pca: bool,
}

fn yes() -> bool {
    true
}

impl FeatureSpec {
    pub fn new(encoder: EncodingKind, layer: impl Into<String>) -> Self {
        Self {
            encoder,
            layer: layer.into(),
            pca: true,
        }
    }

    pub fn uses_pca(&self) -> bool {
        match self.encoder {
            EncodingKind::LcdVlad | EncodingKind::LcdFisher => true,
            EncodingKind::Vlad | EncodingKind::Fisher => self.pca,
            _ => false,
        }
    }

    pub fn uses_codebook(&self) -> bool {
        matches!(self.encoder, EncodingKind::Vlad | EncodingKind::LcdVlad)
    }

    pub fn uses_gmm(&self) -> bool {
        matches!(self.encoder, EncodingKind::Fisher | EncodingKind::LcdFisher)
    }

    pub fn dir_name(&self) -> String {
        format!("{}-{}", self.encoder, self.layer)
    }

    fn validate(&self) -> Result<()> {
        match self.encoder {
            EncodingKind::Fused => Err(Error::param("`fused` is not a per-layer encoder")),
            EncodingKind::LcdVlad | EncodingKind::LcdFisher if !self.pca => Err(Error::param(
                "latent-concept encoders always reduce with PCA; remove `pca: false`",
            )),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleCounts {
    pub pca: usize,
    pub kmeans: usize,
    pub gmm: usize,
}

impl Default for SampleCounts {
    fn default() -> Self {
        Self {
            pca: 100_000,
            kmeans: 100_000,
            gmm: 250_000,
        }
    }
}

/// Run configuration, read from JSON. Relative paths are resolved against the
/// directory holding the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: PathBuf,
    /// Split to run; every split in the manifest when absent.
    #[serde(default)]
    pub split: Option<String>,
    pub output_dir: PathBuf,
    pub features: Vec<FeatureSpec>,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub samples: SampleCounts,
    #[serde(default = "default_max_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default = "default_tol")]
    pub kmeans_tol: f64,
    #[serde(default = "default_max_iter")]
    pub gmm_max_iter: usize,
    #[serde(default = "default_tol")]
    pub gmm_tol: f64,
    #[serde(default = "default_c")]
    pub c_param: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// L2-normalize fused vectors.
    #[serde(default)]
    pub fuse_l2: bool,
}

fn default_max_iter() -> usize {
    100
}

fn default_tol() -> f64 {
    1e-6
}

fn default_c() -> f64 {
    crate::classify::DEFAULT_C
}

fn default_workers() -> usize {
    1
}

impl RunConfig {
    pub fn new(manifest: impl Into<PathBuf>, output_dir: impl Into<PathBuf>, features: Vec<FeatureSpec>) -> Self {
        Self {
            manifest: manifest.into(),
            split: None,
            output_dir: output_dir.into(),
            features,
            encoder: EncoderConfig::default(),
            samples: SampleCounts::default(),
            kmeans_max_iter: default_max_iter(),
            kmeans_tol: default_tol(),
            gmm_max_iter: default_max_iter(),
            gmm_tol: default_tol(),
            c_param: default_c(),
            seed: 0,
            workers: default_workers(),
            fuse_l2: false,
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.manifest.is_relative() {
            cfg.manifest = base.join(&cfg.manifest);
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Json {
            path: path.to_path_buf(),
            source: e,
        })?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn validate(&self) -> Result<()> {
        self.encoder.validate()?;
        if self.features.is_empty() {
            return Err(Error::param("config lists no features"));
        }
        for f in &self.features {
            f.validate()?;
        }
        if !(self.c_param > 0.0) {
            return Err(Error::param(format!("c_param must be positive, got {}", self.c_param)));
        }
        if self.workers == 0 {
            return Err(Error::param("workers must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: usize,
    pub name: String,
    pub support: usize,
    pub correct: usize,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitReport {
    pub split: String,
    pub accuracy: f64,
    pub per_class: Vec<ClassReport>,
    pub confusion: Vec<Vec<usize>>,
}

impl SplitReport {
    fn new(split: &str, classes: &[String], ev: Evaluation) -> Self {
        let per_class = ev
            .per_class
            .iter()
            .map(|s| ClassReport {
                class: s.class,
                name: classes[s.class].clone(),
                support: s.support,
                correct: s.correct,
                recall: s.recall,
            })
            .collect();
        Self {
            split: split.to_string(),
            accuracy: ev.accuracy,
            per_class,
            confusion: ev.confusion,
        }
    }

    /// Aligned-column text rendering.
    pub fn to_table(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|c| c.name.len())
            .max()
            .unwrap_or(5)
            .max("class".len());
        let mut out = String::new();
        writeln!(out, "split: {}", self.split).unwrap();
        writeln!(out, "{:<width$}  {:>7}  {:>7}  {:>7}", "class", "support", "correct", "recall").unwrap();
        for c in &self.per_class {
            writeln!(
                out,
                "{:<width$}  {:>7}  {:>7}  {:>7.4}",
                c.name, c.support, c.correct, c.recall
            )
            .unwrap();
        }
        writeln!(out, "accuracy: {:.4}", self.accuracy).unwrap();
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SplitAccuracy {
    pub split: String,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub splits: Vec<SplitAccuracy>,
    pub mean_accuracy: f64,
}

impl Summary {
    pub fn from_reports(reports: &[SplitReport]) -> Self {
        let splits: Vec<SplitAccuracy> = reports
            .iter()
            .map(|r| SplitAccuracy {
                split: r.split.clone(),
                accuracy: r.accuracy,
            })
            .collect();
        let mean_accuracy = if splits.is_empty() {
            0.0
        } else {
            splits.iter().map(|s| s.accuracy).sum::<f64>() / splits.len() as f64
        };
        Self {
            splits,
            mean_accuracy,
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn mkdir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::param(format!(
            "missing {what} at {}; run the fitting/encoding stage first",
            path.display()
        )))
    }
}

/// A loaded manifest plus configuration.
#[derive(Debug, Clone)]
pub struct Pipeline {
    cfg: RunConfig,
    ds: Dataset,
}

impl Pipeline {
    pub fn new(cfg: RunConfig) -> Result<Self> {
        cfg.validate()?;
        let ds = load_manifest(&cfg.manifest)?;
        if let Some(s) = &cfg.split {
            ds.split(s)?;
        }
        Ok(Self { cfg, ds })
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn dataset(&self) -> &Dataset {
        &self.ds
    }

    /// Splits this run covers.
    pub fn splits(&self) -> Vec<String> {
        match &self.cfg.split {
            Some(s) => vec![s.clone()],
            None => self.ds.splits.keys().cloned().collect(),
        }
    }

    pub fn split_dir(&self, split: &str) -> PathBuf {
        self.cfg.output_dir.join(split)
    }

    pub fn pca_path(&self, split: &str, layer: &str) -> PathBuf {
        self.split_dir(split).join("models").join(format!("pca-{layer}.pack"))
    }

    fn model_suffix(pca: bool) -> &'static str {
        if pca {
            "pca"
        } else {
            "raw"
        }
    }

    pub fn codebook_path(&self, split: &str, layer: &str, pca: bool) -> PathBuf {
        self.split_dir(split)
            .join("models")
            .join(format!("kmeans-{layer}-{}.pack", Self::model_suffix(pca)))
    }

    pub fn gmm_path(&self, split: &str, layer: &str, pca: bool) -> PathBuf {
        self.split_dir(split)
            .join("models")
            .join(format!("gmm-{layer}-{}.pack", Self::model_suffix(pca)))
    }

    pub fn encoding_path(&self, split: &str, feature: &FeatureSpec, id: &str) -> PathBuf {
        self.split_dir(split)
            .join("encodings")
            .join(feature.dir_name())
            .join(format!("{id}.desc"))
    }

    pub fn fused_path(&self, split: &str, id: &str) -> PathBuf {
        self.split_dir(split)
            .join("encodings")
            .join("fused")
            .join(format!("{id}.desc"))
    }

    pub fn svm_path(&self, split: &str) -> PathBuf {
        self.split_dir(split).join("svm.pack")
    }

    pub fn report_path(&self, split: &str) -> PathBuf {
        self.split_dir(split).join("report.json")
    }

    fn layers_where(&self, pred: impl Fn(&FeatureSpec) -> bool, only: Option<&str>) -> Vec<(String, bool)> {
        let set: BTreeSet<(String, bool)> = self
            .cfg
            .features
            .iter()
            .filter(|f| pred(f))
            .filter(|f| only.is_none_or(|l| l == f.layer))
            .map(|f| (f.layer.clone(), f.uses_pca()))
            .collect();
        set.into_iter().collect()
    }

    /// Uniform sample (without replacement) of training-split rows of `layer`.
    fn sample_training_rows(&self, split: &str, layer: &str, count: usize, seed: u64) -> Result<DescriptorMatrix> {
        let train = &self.ds.split(split)?.train;
        let mut sizes = Vec::with_capacity(train.len());
        let mut dim = None;
        for id in train {
            let path = self.ds.source_path(id, layer)?;
            let (rows, d) = read_descriptor_header(&path)?;
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(Error::param(format!(
                        "layer `{layer}`: {} has dimension {d}, expected {expected}",
                        path.display()
                    )))
                }
                _ => {}
            }
            sizes.push(rows);
        }
        let dim = dim.ok_or_else(|| Error::param(format!("split `{split}` has no training videos")))?;
        let total: usize = sizes.iter().sum();
        if count >= total {
            log::info!(
                "layer `{layer}`: requested {count} samples but only {total} training descriptors exist; using all"
            );
        }
        let picks = sample_indices(total, count, seed);
        let mut parts = Vec::new();
        let mut offset = 0;
        let mut cursor = 0;
        for (id, &rows) in train.iter().zip(&sizes) {
            let end = offset + rows;
            let start_cursor = cursor;
            while cursor < picks.len() && picks[cursor] < end {
                cursor += 1;
            }
            if cursor > start_cursor {
                let m = read_descriptor_file(self.ds.source_path(id, layer)?)?;
                let local: Vec<usize> = picks[start_cursor..cursor].iter().map(|&g| g - offset).collect();
                parts.push(m.select_rows(&local));
            }
            offset = end;
        }
        if parts.is_empty() {
            return DescriptorMatrix::empty(dim);
        }
        DescriptorMatrix::vstack(&parts)
    }

    fn load_pca_for(&self, split: &str, layer: &str) -> Result<PcaModel> {
        let path = self.pca_path(split, layer);
        require_file(&path, &format!("PCA model for layer `{layer}`"))?;
        PcaModel::load(&path)
    }

    fn maybe_project(&self, split: &str, layer: &str, pca: bool, m: DescriptorMatrix) -> Result<DescriptorMatrix> {
        if pca {
            apply_pca(&self.load_pca_for(split, layer)?, &m)
        } else {
            Ok(m)
        }
    }

    /// Fits one PCA per layer that needs it. Returns the written paths.
    pub fn fit_pca(&self, split: &str, only_layer: Option<&str>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (layer, _) in self.layers_where(|f| f.uses_pca(), only_layer) {
            let samples = self.sample_training_rows(split, &layer, self.cfg.samples.pca, self.cfg.seed)?;
            let model = fit_pca(&samples, self.cfg.encoder.pca_dim, self.cfg.seed)?;
            let path = self.pca_path(split, &layer);
            mkdir(path.parent().unwrap())?;
            model.save(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn fit_kmeans(&self, split: &str, only_layer: Option<&str>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (layer, pca) in self.layers_where(FeatureSpec::uses_codebook, only_layer) {
            let raw = self.sample_training_rows(split, &layer, self.cfg.samples.kmeans, self.cfg.seed)?;
            let samples = self.maybe_project(split, &layer, pca, raw)?;
            let fit = fit_kmeans_traced(
                &samples,
                &KMeansParams {
                    k: self.cfg.encoder.vlad_k,
                    seed: self.cfg.seed,
                    max_iter: self.cfg.kmeans_max_iter,
                    tol: self.cfg.kmeans_tol,
                },
            )?;
            let path = self.codebook_path(split, &layer, pca);
            mkdir(path.parent().unwrap())?;
            fit.codebook.save(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn fit_gmm(&self, split: &str, only_layer: Option<&str>) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        for (layer, pca) in self.layers_where(FeatureSpec::uses_gmm, only_layer) {
            let raw = self.sample_training_rows(split, &layer, self.cfg.samples.gmm, self.cfg.seed)?;
            let samples = self.maybe_project(split, &layer, pca, raw)?;
            let fit = fit_gmm_traced(
                &samples,
                &GmmParams {
                    k: self.cfg.encoder.fv_k,
                    seed: self.cfg.seed,
                    max_iter: self.cfg.gmm_max_iter,
                    tol: self.cfg.gmm_tol,
                },
            )?;
            let path = self.gmm_path(split, &layer, pca);
            mkdir(path.parent().unwrap())?;
            fit.model.save(&path)?;
            written.push(path);
        }
        Ok(written)
    }

    /// PCA, then codebooks, then mixtures.
    pub fn fit_all(&self, split: &str) -> Result<Vec<PathBuf>> {
        let mut written = self.fit_pca(split, None)?;
        written.extend(self.fit_kmeans(split, None)?);
        written.extend(self.fit_gmm(split, None)?);
        Ok(written)
    }

    /// Ids of every video in the split, train first then test.
    pub fn split_ids(&self, split: &str) -> Result<Vec<String>> {
        let s = self.ds.split(split)?;
        Ok(s.train.iter().chain(&s.test).cloned().collect())
    }

    fn encode_video(&self, split: &str, feature: &FeatureSpec, models: &FeatureModels, id: &str) -> Result<Encoding> {
        let path = self.ds.source_path(id, &feature.layer)?;
        let m = read_descriptor_file(&path)?;
        let cfg = &self.cfg.encoder;
        let enc = match feature.encoder {
            EncodingKind::Objects1k => objects1k(&m)?,
            EncodingKind::Avgpool => average_pool(&m)?,
            EncodingKind::Precomputed => {
                if m.rows() != 1 {
                    return Err(Error::param(format!(
                        "precomputed encoding {} must have exactly one row, found {}",
                        path.display(),
                        m.rows()
                    )));
                }
                let values = m.values().iter().map(|&v| v as f64).collect();
                Encoding::new(EncodingKind::Precomputed, values, "precomputed")?
            }
            EncodingKind::Vlad => {
                let m = match &models.pca {
                    Some(p) => apply_pca(p, &m)?,
                    None => m,
                };
                encode_vlad(models.codebook.as_ref().expect("loaded"), &m, cfg)?
            }
            EncodingKind::Fisher => {
                let m = match &models.pca {
                    Some(p) => apply_pca(p, &m)?,
                    None => m,
                };
                encode_fisher(models.gmm.as_ref().expect("loaded"), &m, cfg)?
            }
            EncodingKind::LcdVlad | EncodingKind::LcdFisher => {
                let video = self.ds.video(id).expect("validated manifest");
                let side = video.pool5_side.ok_or_else(|| {
                    Error::param(format!("video `{id}` has no pool5_side for layer `{}`", feature.layer))
                })?;
                let frames = ActivationTensor::frames_from_matrix(&m, side)?;
                let pca = models.pca.as_ref().expect("loaded");
                let model = match (&models.codebook, &models.gmm) {
                    (Some(cb), _) if feature.encoder == EncodingKind::LcdVlad => LcdModel::Vlad(cb),
                    (_, Some(g)) => LcdModel::Fisher(g),
                    _ => unreachable!("models loaded per encoder"),
                };
                encode_lcd(&frames, pca, model, cfg)?
            }
            EncodingKind::Fused => unreachable!("rejected by config validation"),
        };
        let source = format!("{}:{} {}", feature.layer, split, enc.source());
        Encoding::new(enc.kind(), enc.values().to_vec(), source)
    }

    fn load_models(&self, split: &str, feature: &FeatureSpec) -> Result<FeatureModels> {
        let pca_on = feature.uses_pca();
        let pca = if pca_on {
            Some(self.load_pca_for(split, &feature.layer)?)
        } else {
            None
        };
        let codebook = if feature.uses_codebook() {
            let path = self.codebook_path(split, &feature.layer, pca_on);
            require_file(&path, &format!("k-means codebook for layer `{}`", feature.layer))?;
            Some(Codebook::load(&path)?)
        } else {
            None
        };
        let gmm = if feature.uses_gmm() {
            let path = self.gmm_path(split, &feature.layer, pca_on);
            require_file(&path, &format!("GMM for layer `{}`", feature.layer))?;
            Some(GmmModel::load(&path)?)
        } else {
            None
        };
        Ok(FeatureModels { pca, codebook, gmm })
    }

    /// Encodes every video of the split with every configured feature.
    pub fn encode(&self, split: &str) -> Result<usize> {
        let ids = self.split_ids(split)?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.cfg.workers)
            .build()
            .map_err(|e| Error::param(format!("cannot start worker pool: {e}")))?;
        let mut count = 0;
        for feature in &self.cfg.features {
            let models = self.load_models(split, feature)?;
            let dir = self.encoding_path(split, feature, "x").parent().unwrap().to_path_buf();
            mkdir(&dir)?;
            pool.install(|| {
                use rayon::prelude::*;
                ids.par_iter().try_for_each(|id| {
                    let enc = self.encode_video(split, feature, &models, id)?;
                    write_encoding(self.encoding_path(split, feature, id), &enc)
                })
            })?;
            count += ids.len();
        }
        Ok(count)
    }

    /// Concatenates each video's encodings in config order.
    pub fn fuse(&self, split: &str) -> Result<usize> {
        let ids = self.split_ids(split)?;
        let dir = self.fused_path(split, "x").parent().unwrap().to_path_buf();
        mkdir(&dir)?;
        for id in &ids {
            let parts = self
                .cfg
                .features
                .iter()
                .map(|f| {
                    let path = self.encoding_path(split, f, id);
                    require_file(&path, &format!("{} encoding of `{id}`", f.dir_name()))?;
                    read_encoding(&path)
                })
                .collect::<Result<Vec<_>>>()?;
            write_encoding(self.fused_path(split, id), &fuse_with(&parts, self.cfg.fuse_l2)?)?;
        }
        Ok(ids.len())
    }

    fn load_fused(&self, split: &str, ids: &[String]) -> Result<(Vec<Encoding>, Vec<usize>)> {
        let mut feats = Vec::with_capacity(ids.len());
        let mut labels = Vec::with_capacity(ids.len());
        for id in ids {
            let path = self.fused_path(split, id);
            require_file(&path, &format!("fused encoding of `{id}`"))?;
            let enc = read_encoding(&path)?;
            if let Some(first) = feats.first().map(Encoding::dim) {
                if enc.dim() != first {
                    return Err(Error::param(format!(
                        "mismatched encoding dims: `{id}` has {}, expected {first}",
                        enc.dim()
                    )));
                }
            }
            feats.push(enc);
            labels.push(self.ds.video(id).expect("validated manifest").label);
        }
        Ok((feats, labels))
    }

    pub fn train(&self, split: &str) -> Result<PathBuf> {
        let ids = self.ds.split(split)?.train.clone();
        let (feats, labels) = self.load_fused(split, &ids)?;
        let params = SvmParams::new(self.cfg.c_param, self.cfg.seed);
        let model = train_one_vs_all_with(&feats, &labels, self.ds.classes.len(), &params)?;
        let path = self.svm_path(split);
        model.save(&path)?;
        Ok(path)
    }

    pub fn evaluate(&self, split: &str) -> Result<SplitReport> {
        let path = self.svm_path(split);
        require_file(&path, "SVM model")?;
        let model = SvmModel::load(&path)?;
        let ids = self.ds.split(split)?.test.clone();
        let (feats, labels) = self.load_fused(split, &ids)?;
        if feats.first().is_some_and(|f| f.dim() != model.dim()) {
            return Err(Error::param(format!(
                "mismatched encoding dims: test encodings have {}, model expects {}",
                feats[0].dim(),
                model.dim()
            )));
        }
        let ev = evaluate(&model, &feats, &labels)?;
        let report = SplitReport::new(split, &self.ds.classes, ev);
        write_json(&self.report_path(split), &report)?;
        let txt = self.split_dir(split).join("report.txt");
        fs::write(&txt, report.to_table()).map_err(|e| Error::io(&txt, e))?;
        Ok(report)
    }

    /// Every stage for every covered split, then `summary.json`.
    pub fn run_all(&self) -> Result<Summary> {
        let mut reports = Vec::new();
        for split in self.splits() {
            self.fit_all(&split)?;
            self.encode(&split)?;
            self.fuse(&split)?;
            self.train(&split)?;
            reports.push(self.evaluate(&split)?);
        }
        let summary = Summary::from_reports(&reports);
        mkdir(&self.cfg.output_dir)?;
        write_json(&self.cfg.output_dir.join("summary.json"), &summary)?;
        Ok(summary)
    }
}

struct FeatureModels {
    pca: Option<PcaModel>,
    codebook: Option<Codebook>,
    gmm: Option<GmmModel>,
}
