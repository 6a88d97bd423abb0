//! Python bindings: tensors, the mammogram CNN, preprocessing, the RSL
//! schedule and end-to-end experiments.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rslcad::harness::{self, RunConfig, SyntheticSpec};
use rslcad::network::checkpoint;
use rslcad::preprocess::{self, pgm, GrayImage, Laterality};
use rslcad::rsl::{self, PiecewiseEpochMap};

fn to_py(err: rslcad::Error) -> PyErr {
    let msg = err.to_string();
    match err.root() {
        rslcad::Error::Io { .. } => PyIOError::new_err(msg),
        rslcad::Error::Numeric(_) => PyArithmeticError::new_err(msg),
        _ => PyValueError::new_err(msg),
    }
}

/// Dense row-major array of floats with an explicit shape.
#[pyclass(name = "Tensor", module = "pyrslcad", from_py_object)]
#[derive(Clone)]
struct PyTensor(rslcad::Tensor);

#[pymethods]
impl PyTensor {
    #[new]
    fn new(shape: Vec<usize>, data: Vec<f64>) -> PyResult<Self> {
        rslcad::Tensor::new(&shape, data).map(Self).map_err(to_py)
    }

    #[getter]
    fn shape(&self) -> Vec<usize> {
        self.0.shape().to_vec()
    }

    /// Values in row-major order.
    fn tolist(&self) -> Vec<f64> {
        self.0.data().to_vec()
    }

    fn sum(&self) -> f64 {
        self.0.sum()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!("Tensor(shape={:?})", self.0.shape())
    }
}

/// The four-conv mammogram classifier.
#[pyclass(name = "Model", module = "pyrslcad")]
struct PyModel(rslcad::Model);

#[pymethods]
impl PyModel {
    /// Fresh Glorot-initialised network for `input_size` (height, width) inputs.
    #[new]
    #[pyo3(signature = (input_size = (64, 64), seed = 0))]
    fn new(input_size: (usize, usize), seed: u64) -> PyResult<Self> {
        let spec = rslcad::build_table1_network(input_size).map_err(to_py)?;
        rslcad::Model::new(spec, seed).map(Self).map_err(to_py)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        checkpoint::load(path).map(Self).map_err(to_py)
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        checkpoint::save(&self.0, path).map_err(to_py)
    }

    #[getter]
    fn param_count(&self) -> usize {
        self.0.param_count()
    }

    #[getter]
    fn input_size(&self) -> (usize, usize) {
        self.0.spec().input_size()
    }

    /// Logits for one (1, H, W) image.
    fn forward(&self, image: &PyTensor) -> PyResult<Vec<f64>> {
        self.0.forward(&image.0).map(|t| t.into_data()).map_err(to_py)
    }

    /// 0 (benign) or 1 (malignant).
    fn predict(&self, image: &PyTensor) -> PyResult<usize> {
        self.0.predict(&image.0).map_err(to_py)
    }

    /// One SGD step on a batch; returns (pre-update error rate, mean loss).
    fn train_step(&mut self, images: Vec<PyTensor>, labels: Vec<usize>, learning_rate: f64) -> PyResult<(f64, f64)> {
        let refs: Vec<&rslcad::Tensor> = images.iter().map(|t| &t.0).collect();
        let stats = self.0.train_step(&refs, &labels, learning_rate).map_err(to_py)?;
        Ok((stats.error_rate, stats.mean_loss))
    }
}

/// Otsu level for a 256-bin histogram; `None` when the histogram has fewer
/// than two occupied levels.
#[pyfunction]
fn otsu_threshold(hist: Vec<u64>) -> PyResult<Option<u8>> {
    let hist: [u64; 256] = hist
        .try_into()
        .map_err(|h: Vec<u64>| PyValueError::new_err(format!("histogram needs 256 bins, got {}", h.len())))?;
    Ok(preprocess::otsu_threshold(&hist))
}

/// Full preprocessing of a row-major 8-bit image to a (1, H, W) tensor.
#[pyfunction]
#[pyo3(signature = (pixels, width, height, laterality = "U", size = (64, 64)))]
fn preprocess_image(
    pixels: Vec<u8>,
    width: usize,
    height: usize,
    laterality: &str,
    size: (usize, usize),
) -> PyResult<PyTensor> {
    let lat: Laterality = laterality.parse().map_err(PyValueError::new_err)?;
    let image = GrayImage::new(width, height, pixels, lat).map_err(to_py)?;
    preprocess::preprocess_pipeline(&image, size).map(PyTensor).map_err(to_py)
}

/// Reads a binary PGM and preprocesses it.
#[pyfunction]
#[pyo3(signature = (path, laterality = "U", size = (64, 64)))]
fn preprocess_pgm(path: PathBuf, laterality: &str, size: (usize, usize)) -> PyResult<PyTensor> {
    let mut image = pgm::read_pgm(&path).map_err(to_py)?;
    image.laterality = laterality.parse().map_err(PyValueError::new_err)?;
    preprocess::preprocess_pipeline(&image, size).map(PyTensor).map_err(to_py)
}

/// Remedial epochs granted to a batch with error `er` when the epoch mean is
/// `c`, under a map written like "0.05:1, 0.15:2, inf:3".
#[pyfunction]
#[pyo3(signature = (er, c, epoch_map = None))]
fn remedial_epochs(er: f64, c: f64, epoch_map: Option<&str>) -> PyResult<u32> {
    let map = match epoch_map {
        Some(text) => text.parse::<PiecewiseEpochMap>().map_err(to_py)?,
        None => PiecewiseEpochMap::default_map(),
    };
    Ok(rsl::remedial_epochs(er, c, &map))
}

/// Writes a synthetic PGM dataset and its manifest; returns the manifest path.
#[pyfunction]
#[pyo3(signature = (out_dir, train_per_class, val_per_class, seed = 0))]
fn generate_dataset(out_dir: PathBuf, train_per_class: usize, val_per_class: usize, seed: u64) -> PyResult<PathBuf> {
    let spec = SyntheticSpec { seed, ..SyntheticSpec::default() };
    harness::write_synthetic_dataset(&out_dir, &spec, train_per_class, val_per_class).map_err(to_py)?;
    Ok(out_dir.join("manifest.csv"))
}

/// Runs an experiment from configuration text (`key = value` lines; unset
/// keys take their defaults) and returns a summary dict.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &str, out_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let cfg = RunConfig::parse(config, Path::new("<python>"), Path::new(".")).map_err(to_py)?;
    let out = py.detach(|| harness::run_experiment(&cfg, &out_dir)).map_err(to_py)?;
    let summary = PyDict::new(py);
    summary.set_item("epochs", out.log.epochs_run())?;
    summary.set_item("final_train_error", out.log.final_train_error())?;
    summary.set_item("final_val_error", out.log.final_validation_error())?;
    summary.set_item("total_update_passes", out.log.total_update_passes())?;
    summary.set_item("total_remedial_epochs", out.log.total_remedial_epochs())?;
    summary.set_item("metrics_path", out.metrics_path)?;
    summary.set_item("checkpoint_path", out.checkpoint_path)?;
    Ok(summary)
}

/// Error rate of a saved checkpoint on every entry of a manifest.
#[pyfunction]
fn evaluate(checkpoint_path: PathBuf, manifest: PathBuf) -> PyResult<f64> {
    let model = checkpoint::load(checkpoint_path).map_err(to_py)?;
    let manifest = harness::load_manifest(manifest).map_err(to_py)?;
    harness::evaluate(&model, &manifest).map_err(to_py)
}

#[pymodule]
fn pyrslcad(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyTensor>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(otsu_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess_image, m)?)?;
    m.add_function(wrap_pyfunction!(preprocess_pgm, m)?)?;
    m.add_function(wrap_pyfunction!(remedial_epochs, m)?)?;
    m.add_function(wrap_pyfunction!(generate_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    Ok(())
}
