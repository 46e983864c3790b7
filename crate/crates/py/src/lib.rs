//! Python bindings: descriptor I/O, model fitting, encoders, SVMs and the
//! manifest-driven pipeline.

use std::path::PathBuf;

use actionvec::classify::{self, SvmParams};
use actionvec::codebook::{self, KMeansParams};
use actionvec::datamodel::{self, ActivationTensor, DescriptorMatrix, Encoding, EncodingKind};
use actionvec::encode::{self, EncoderConfig, LcdModel};
use actionvec::gmm::{self, GmmParams};
use actionvec::pipeline::{Pipeline, RunConfig};
use actionvec::reduce::{self, PcaOptions};
use actionvec::synth::{self, Pool5Shape, SynthSpec};
use actionvec::Error;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for actionvec::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn matrix_from_rows(rows: Vec<Vec<f64>>, dim: Option<usize>) -> PyResult<DescriptorMatrix> {
    let dim = match (rows.first(), dim) {
        (Some(r), _) => r.len(),
        (None, Some(d)) => d,
        (None, None) => return Err(PyValueError::new_err("empty matrix needs an explicit dim")),
    };
    DescriptorMatrix::from_rows_f64(dim, &rows).py()
}

fn config(alpha: f64, vlad_k: usize, fv_k: usize, pca_dim: usize) -> PyResult<EncoderConfig> {
    let cfg = EncoderConfig {
        alpha,
        vlad_k,
        fv_k,
        pca_dim,
    };
    cfg.validate().py()?;
    Ok(cfg)
}

/// Row-major `rows x dim` matrix of 32-bit descriptors.
#[pyclass(name = "DescriptorMatrix", module = "actionvec", frozen, from_py_object)]
#[derive(Clone)]
struct PyDescriptorMatrix(DescriptorMatrix);

#[pymethods]
impl PyDescriptorMatrix {
    #[new]
    #[pyo3(signature = (rows, dim=None))]
    fn new(rows: Vec<Vec<f64>>, dim: Option<usize>) -> PyResult<Self> {
        matrix_from_rows(rows, dim).map(Self)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        datamodel::read_descriptor_file(path).py().map(Self)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        datamodel::write_descriptor_file(path, &self.0).py()
    }

    #[getter]
    fn rows(&self) -> usize {
        self.0.rows()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn row(&self, i: usize) -> PyResult<Vec<f32>> {
        if i >= self.0.rows() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("row {i} out of range")));
        }
        Ok(self.0.row(i).to_vec())
    }

    fn to_list(&self) -> Vec<Vec<f32>> {
        self.0.iter_rows().map(<[f32]>::to_vec).collect()
    }

    fn __len__(&self) -> usize {
        self.0.rows()
    }

    fn __repr__(&self) -> String {
        format!("DescriptorMatrix(rows={}, dim={})", self.0.rows(), self.0.dim())
    }
}

#[pyclass(name = "Encoding", module = "actionvec", frozen, from_py_object)]
#[derive(Clone)]
struct PyEncoding(Encoding);

#[pymethods]
impl PyEncoding {
    #[new]
    #[pyo3(signature = (kind, values, source="python"))]
    fn new(kind: &str, values: Vec<f64>, source: &str) -> PyResult<Self> {
        let kind: EncodingKind = kind.parse().py()?;
        Encoding::new(kind, values, source).py().map(Self)
    }

    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        datamodel::read_encoding(path).py().map(Self)
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        datamodel::write_encoding(path, &self.0).py()
    }

    #[getter]
    fn kind(&self) -> &'static str {
        self.0.kind().as_str()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn source(&self) -> String {
        self.0.source().to_string()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn __len__(&self) -> usize {
        self.0.dim()
    }

    fn __repr__(&self) -> String {
        format!("Encoding(kind={:?}, dim={})", self.0.kind().as_str(), self.0.dim())
    }
}

#[pyclass(name = "PcaModel", module = "actionvec", frozen)]
struct PyPcaModel(reduce::PcaModel);

#[pymethods]
impl PyPcaModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        reduce::PcaModel::load(path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).py()
    }

    #[getter]
    fn input_dim(&self) -> usize {
        self.0.input_dim()
    }

    #[getter]
    fn output_dim(&self) -> usize {
        self.0.output_dim()
    }

    #[getter]
    fn mean(&self) -> Vec<f64> {
        self.0.mean().to_vec()
    }

    #[getter]
    fn explained_variance(&self) -> Vec<f64> {
        self.0.explained_variance().to_vec()
    }

    fn project(&self, m: &PyDescriptorMatrix) -> PyResult<PyDescriptorMatrix> {
        reduce::apply_pca(&self.0, &m.0).py().map(PyDescriptorMatrix)
    }

    fn __repr__(&self) -> String {
        format!("PcaModel({} -> {})", self.0.input_dim(), self.0.output_dim())
    }
}

#[pyclass(name = "Codebook", module = "actionvec", frozen)]
struct PyCodebook(codebook::Codebook);

#[pymethods]
impl PyCodebook {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        codebook::Codebook::load(path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).py()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn center(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.0.k() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("center {i} out of range")));
        }
        Ok(self.0.center(i).to_vec())
    }

    fn assign(&self, x: Vec<f32>) -> PyResult<usize> {
        self.0.assign(&x).py()
    }

    fn __repr__(&self) -> String {
        format!("Codebook(k={}, dim={})", self.0.k(), self.0.dim())
    }
}

#[pyclass(name = "GmmModel", module = "actionvec", frozen)]
struct PyGmmModel(gmm::GmmModel);

#[pymethods]
impl PyGmmModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        gmm::GmmModel::load(path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).py()
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn priors(&self) -> Vec<f64> {
        self.0.priors().to_vec()
    }

    fn mean(&self, k: usize) -> PyResult<Vec<f64>> {
        self.check(k)?;
        Ok(self.0.mean(k).to_vec())
    }

    fn variance(&self, k: usize) -> PyResult<Vec<f64>> {
        self.check(k)?;
        Ok(self.0.variance(k).to_vec())
    }

    /// Posterior responsibilities, one list of K values per row.
    fn posteriors(&self, m: &PyDescriptorMatrix) -> PyResult<Vec<Vec<f64>>> {
        let flat = self.0.posteriors(&m.0).py()?;
        Ok(flat.chunks(self.0.k()).map(<[f64]>::to_vec).collect())
    }

    fn average_log_likelihood(&self, m: &PyDescriptorMatrix) -> PyResult<f64> {
        self.0.average_log_likelihood(&m.0).py()
    }

    fn __repr__(&self) -> String {
        format!("GmmModel(k={}, dim={})", self.0.k(), self.0.dim())
    }
}

impl PyGmmModel {
    fn check(&self, k: usize) -> PyResult<()> {
        if k >= self.0.k() {
            return Err(pyo3::exceptions::PyIndexError::new_err(format!("mode {k} out of range")));
        }
        Ok(())
    }
}

#[pyclass(name = "SvmModel", module = "actionvec", frozen)]
struct PySvmModel(classify::SvmModel);

#[pymethods]
impl PySvmModel {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        classify::SvmModel::load(path).py().map(Self)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.0.save(path).py()
    }

    #[getter]
    fn classes(&self) -> usize {
        self.0.classes()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn scores(&self, x: &PyEncoding) -> PyResult<Vec<f64>> {
        self.0.scores(x.0.values()).py()
    }

    fn predict(&self, x: &PyEncoding) -> PyResult<usize> {
        classify::predict(&self.0, &x.0).py()
    }

    /// Returns `(accuracy, confusion)`.
    fn evaluate(&self, features: Vec<PyEncoding>, labels: Vec<usize>) -> PyResult<(f64, Vec<Vec<usize>>)> {
        let feats: Vec<Encoding> = features.into_iter().map(|e| e.0).collect();
        let ev = classify::evaluate(&self.0, &feats, &labels).py()?;
        Ok((ev.accuracy, ev.confusion))
    }

    fn __repr__(&self) -> String {
        format!("SvmModel(classes={}, dim={})", self.0.classes(), self.0.dim())
    }
}

#[pyfunction]
#[pyo3(signature = (samples, target_dim, seed=0, whiten=false, max_samples=None))]
fn fit_pca(
    samples: &PyDescriptorMatrix,
    target_dim: usize,
    seed: u64,
    whiten: bool,
    max_samples: Option<usize>,
) -> PyResult<PyPcaModel> {
    let opts = PcaOptions {
        target_dim,
        seed,
        whiten,
        max_samples,
    };
    reduce::fit_pca_with(&samples.0, &opts).py().map(PyPcaModel)
}

#[pyfunction]
#[pyo3(signature = (samples, k, seed=0, max_iter=100, tol=1e-6))]
fn fit_kmeans(samples: &PyDescriptorMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> PyResult<PyCodebook> {
    let params = KMeansParams {
        k,
        seed,
        max_iter,
        tol,
    };
    let fit = codebook::fit_kmeans_traced(&samples.0, &params).py()?;
    Ok(PyCodebook(fit.codebook))
}

#[pyfunction]
#[pyo3(signature = (samples, k, seed=0, max_iter=100, tol=1e-6))]
fn fit_gmm(samples: &PyDescriptorMatrix, k: usize, seed: u64, max_iter: usize, tol: f64) -> PyResult<PyGmmModel> {
    let params = GmmParams {
        k,
        seed,
        max_iter,
        tol,
    };
    let fit = gmm::fit_gmm_traced(&samples.0, &params).py()?;
    Ok(PyGmmModel(fit.model))
}

#[pyfunction]
fn objects1k(frame_scores: &PyDescriptorMatrix) -> PyResult<PyEncoding> {
    encode::objects1k(&frame_scores.0).py().map(PyEncoding)
}

#[pyfunction]
fn average_pool(frames: &PyDescriptorMatrix) -> PyResult<PyEncoding> {
    encode::average_pool(&frames.0).py().map(PyEncoding)
}

#[pyfunction]
#[pyo3(signature = (codebook, descriptors, alpha=encode::DEFAULT_ALPHA))]
fn encode_vlad(codebook: &PyCodebook, descriptors: &PyDescriptorMatrix, alpha: f64) -> PyResult<PyEncoding> {
    let cfg = config(alpha, codebook.0.k(), encode::DEFAULT_K, encode::DEFAULT_PCA_DIM)?;
    encode::encode_vlad(&codebook.0, &descriptors.0, &cfg).py().map(PyEncoding)
}

#[pyfunction]
#[pyo3(signature = (gmm, descriptors, alpha=encode::DEFAULT_ALPHA))]
fn encode_fisher(gmm: &PyGmmModel, descriptors: &PyDescriptorMatrix, alpha: f64) -> PyResult<PyEncoding> {
    let cfg = config(alpha, encode::DEFAULT_K, gmm.0.k(), encode::DEFAULT_PCA_DIM)?;
    encode::encode_fisher(&gmm.0, &descriptors.0, &cfg).py().map(PyEncoding)
}

/// Latent-concept encoding of pool5 frames stored as `side*side` rows each.
/// Exactly one of `codebook` / `gmm` selects VLAD or Fisher.
#[pyfunction]
#[pyo3(signature = (frames, side, pca, codebook=None, gmm=None, alpha=encode::DEFAULT_ALPHA))]
fn encode_lcd(
    frames: &PyDescriptorMatrix,
    side: usize,
    pca: &PyPcaModel,
    codebook: Option<&PyCodebook>,
    gmm: Option<&PyGmmModel>,
    alpha: f64,
) -> PyResult<PyEncoding> {
    let tensors = ActivationTensor::frames_from_matrix(&frames.0, side).py()?;
    let (model, vlad_k, fv_k) = match (codebook, gmm) {
        (Some(cb), None) => (LcdModel::Vlad(&cb.0), cb.0.k(), encode::DEFAULT_K),
        (None, Some(g)) => (LcdModel::Fisher(&g.0), encode::DEFAULT_K, g.0.k()),
        _ => return Err(PyValueError::new_err("pass exactly one of `codebook` or `gmm`")),
    };
    let cfg = config(alpha, vlad_k, fv_k, pca.0.output_dim())?;
    encode::encode_lcd(&tensors, &pca.0, model, &cfg).py().map(PyEncoding)
}

#[pyfunction]
#[pyo3(signature = (parts, l2=false))]
fn fuse(parts: Vec<PyEncoding>, l2: bool) -> PyResult<PyEncoding> {
    let parts: Vec<Encoding> = parts.into_iter().map(|e| e.0).collect();
    encode::fuse_with(&parts, l2).py().map(PyEncoding)
}

#[pyfunction]
#[pyo3(signature = (features, labels, c_param=classify::DEFAULT_C, seed=0, classes=None))]
fn train_one_vs_all(
    features: Vec<PyEncoding>,
    labels: Vec<usize>,
    c_param: f64,
    seed: u64,
    classes: Option<usize>,
) -> PyResult<PySvmModel> {
    let feats: Vec<Encoding> = features.into_iter().map(|e| e.0).collect();
    let classes = classes.unwrap_or_else(|| labels.iter().max().map_or(0, |m| m + 1));
    let params = SvmParams::new(c_param, seed);
    classify::train_one_vs_all_with(&feats, &labels, classes, &params)
        .py()
        .map(PySvmModel)
}

/// Writes a synthetic dataset and returns the manifest path.
#[pyfunction]
#[pyo3(signature = (
    out_dir, classes=5, videos_per_class=20, frames_per_video=30, descriptor_dim=16,
    modes_per_class=2, separation=10.0, seed=0, splits=1, pool5_side=None, pool5_channels=512,
    fc_dim=None, softmax_classes=None,
))]
#[allow(clippy::too_many_arguments)]
fn generate_synth(
    out_dir: PathBuf,
    classes: usize,
    videos_per_class: usize,
    frames_per_video: usize,
    descriptor_dim: usize,
    modes_per_class: usize,
    separation: f64,
    seed: u64,
    splits: usize,
    pool5_side: Option<usize>,
    pool5_channels: usize,
    fc_dim: Option<usize>,
    softmax_classes: Option<usize>,
) -> PyResult<String> {
    let mut spec = SynthSpec::new(
        classes,
        videos_per_class,
        frames_per_video,
        descriptor_dim,
        modes_per_class,
        separation,
        seed,
    );
    spec.splits = splits;
    spec.pool5 = pool5_side.map(|side| Pool5Shape {
        side,
        channels: pool5_channels,
    });
    spec.fc_dim = fc_dim;
    spec.softmax_classes = softmax_classes;
    synth::generate(&spec, &out_dir).py()?;
    Ok(out_dir.join("manifest.json").to_string_lossy().into_owned())
}

/// Runs every stage of the configured pipeline. Returns
/// `([(split, accuracy), ...], mean_accuracy)`.
#[pyfunction]
fn run_all(config_path: PathBuf) -> PyResult<(Vec<(String, f64)>, f64)> {
    let cfg = RunConfig::load(config_path).py()?;
    let summary = Pipeline::new(cfg).py()?.run_all().py()?;
    let per_split = summary.splits.into_iter().map(|s| (s.split, s.accuracy)).collect();
    Ok((per_split, summary.mean_accuracy))
}

#[pymodule(name = "actionvec")]
pub fn actionvec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyDescriptorMatrix>()?;
    m.add_class::<PyEncoding>()?;
    m.add_class::<PyPcaModel>()?;
    m.add_class::<PyCodebook>()?;
    m.add_class::<PyGmmModel>()?;
    m.add_class::<PySvmModel>()?;
    m.add_function(wrap_pyfunction!(fit_pca, m)?)?;
    m.add_function(wrap_pyfunction!(fit_kmeans, m)?)?;
    m.add_function(wrap_pyfunction!(fit_gmm, m)?)?;
    m.add_function(wrap_pyfunction!(objects1k, m)?)?;
    m.add_function(wrap_pyfunction!(average_pool, m)?)?;
    m.add_function(wrap_pyfunction!(encode_vlad, m)?)?;
    m.add_function(wrap_pyfunction!(encode_fisher, m)?)?;
    m.add_function(wrap_pyfunction!(encode_lcd, m)?)?;
    m.add_function(wrap_pyfunction!(fuse, m)?)?;
    m.add_function(wrap_pyfunction!(train_one_vs_all, m)?)?;
    m.add_function(wrap_pyfunction!(generate_synth, m)?)?;
    m.add_function(wrap_pyfunction!(run_all, m)?)?;
    Ok(())
}
