//! Python bindings: matrices, adapter initialization, NF4 quantization and
//! the quantized initializations.

use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use pissa_core::adapter::{self, AdapterPair, InitStrategy};
use pissa_core::linalg;
use pissa_core::quant::{self, QuantConfig};
use pissa_core::{Error, RandomSource};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidArgument(_) | Error::Shape { .. } | Error::NonFinite { .. } => PyValueError::new_err(e.to_string()),
        Error::Io { .. } | Error::Format { .. } => PyIOError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Dense row-major f64 matrix.
#[pyclass(name = "Matrix", module = "pissa", from_py_object)]
#[derive(Clone)]
struct PyMatrix(linalg::Matrix);

#[pymethods]
impl PyMatrix {
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        linalg::Matrix::from_rows(&rows).map(Self).map_err(py_err)
    }

    #[staticmethod]
    fn zeros(rows: usize, cols: usize) -> Self {
        Self(linalg::Matrix::zeros(rows, cols))
    }

    #[staticmethod]
    #[pyo3(signature = (rows, cols, seed, std=1.0))]
    fn randn(rows: usize, cols: usize, seed: u64, std: f64) -> Self {
        Self(RandomSource::new(seed).normal_matrix(rows, cols, std))
    }

    #[staticmethod]
    fn load(path: &str) -> PyResult<Self> {
        linalg::load_matrix(path).map(Self).map_err(py_err)
    }

    fn save(&self, path: &str) -> PyResult<()> {
        linalg::save_matrix(path, &self.0).map_err(py_err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn tolist(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    fn __matmul__(&self, other: &PyMatrix) -> PyResult<Self> {
        self.0.matmul(&other.0).map(Self).map_err(py_err)
    }

    fn __sub__(&self, other: &PyMatrix) -> PyResult<Self> {
        self.0.sub(&other.0).map(Self).map_err(py_err)
    }

    fn __add__(&self, other: &PyMatrix) -> PyResult<Self> {
        self.0.add(&other.0).map(Self).map_err(py_err)
    }

    fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    fn max_abs(&self) -> f64 {
        self.0.max_abs()
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.0.rows(), self.0.cols())
    }
}

/// Frozen base plus a trainable low-rank adapter.
#[pyclass(name = "DecomposedLayer", module = "pissa", from_py_object)]
#[derive(Clone)]
struct PyLayer(adapter::DecomposedLayer);

#[pymethods]
impl PyLayer {
    #[getter]
    fn rank(&self) -> usize {
        self.0.rank()
    }

    #[getter]
    fn origin(&self) -> String {
        self.0.origin().to_string()
    }

    #[getter]
    fn a(&self) -> PyMatrix {
        PyMatrix(self.0.adapter().a.clone())
    }

    #[getter]
    fn b(&self) -> PyMatrix {
        PyMatrix(self.0.adapter().b.clone())
    }

    #[getter]
    fn scale(&self) -> f64 {
        self.0.adapter().scale
    }

    #[getter]
    fn is_quantized(&self) -> bool {
        self.0.base().is_quantized()
    }

    /// Base weight; quantized bases are dequantized.
    fn base(&self) -> PyMatrix {
        PyMatrix(self.0.base().dense().clone())
    }

    fn forward(&self, x: &PyMatrix) -> PyResult<PyMatrix> {
        adapter::forward(&self.0, &x.0).map(PyMatrix).map_err(py_err)
    }

    /// `(dA, dB)` for upstream gradient `dy` at input `x`.
    fn adapter_gradients(&self, x: &PyMatrix, dy: &PyMatrix) -> PyResult<(PyMatrix, PyMatrix)> {
        let (da, db) = adapter::adapter_gradients(&x.0, &dy.0, self.0.adapter()).map_err(py_err)?;
        Ok((PyMatrix(da), PyMatrix(db)))
    }

    fn merge(&self) -> PyMatrix {
        PyMatrix(adapter::merge(&self.0))
    }

    fn reconstruction_error(&self, w: &PyMatrix) -> PyResult<f64> {
        adapter::reconstruction_error(&w.0, &self.0).map_err(py_err)
    }

    /// Copy of this layer with the adapter factors replaced.
    fn with_adapter(&self, a: &PyMatrix, b: &PyMatrix) -> PyResult<Self> {
        let pair = AdapterPair::new(a.0.clone(), b.0.clone(), self.0.adapter().scale).map_err(py_err)?;
        let mut layer = self.0.clone();
        *layer.adapter_mut() = pair;
        Ok(Self(layer))
    }

    fn save(&self, dir: &str) -> PyResult<()> {
        adapter::save_adapter_dir(dir.as_ref(), &self.0, None, true).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        let (m, n) = self.0.shape();
        format!("DecomposedLayer({m}x{n}, rank={}, origin={})", self.0.rank(), self.0.origin())
    }
}

#[pyfunction]
#[pyo3(signature = (w, r, niter=None, seed=0))]
fn pissa_init(w: &PyMatrix, r: usize, niter: Option<usize>, seed: u64) -> PyResult<PyLayer> {
    match niter {
        None => adapter::pissa_init(&w.0, r),
        Some(k) => adapter::pissa_init_fast(&w.0, r, k, &mut RandomSource::new(seed)),
    }
    .map(PyLayer)
    .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (w, r, seed=0))]
fn lora_init(w: &PyMatrix, r: usize, seed: u64) -> PyResult<PyLayer> {
    adapter::lora_init(&w.0, r, &mut RandomSource::new(seed)).map(PyLayer).map_err(py_err)
}

/// Adapter over the principal, medium or minor singular window.
#[pyfunction]
fn variant_init(w: &PyMatrix, r: usize, strategy: &str) -> PyResult<PyLayer> {
    let s: InitStrategy = strategy.parse().map_err(py_err)?;
    adapter::variant_init(&w.0, r, s).map(PyLayer).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (w, r, block_size=quant::DEFAULT_BLOCK_SIZE, seed=0))]
fn qlora_init(w: &PyMatrix, r: usize, block_size: usize, seed: u64) -> PyResult<PyLayer> {
    let cfg = QuantConfig::new(block_size).map_err(py_err)?;
    quant::qlora_init(&w.0, r, &cfg, &mut RandomSource::new(seed)).map(PyLayer).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (w, r, iters=1, block_size=quant::DEFAULT_BLOCK_SIZE))]
fn qpissa_init(w: &PyMatrix, r: usize, iters: usize, block_size: usize) -> PyResult<PyLayer> {
    let cfg = QuantConfig::new(block_size).map_err(py_err)?;
    quant::qpissa_init(&w.0, r, iters, &cfg).map(PyLayer).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (w, r, iters=1, block_size=quant::DEFAULT_BLOCK_SIZE))]
fn loftq_init(w: &PyMatrix, r: usize, iters: usize, block_size: usize) -> PyResult<PyLayer> {
    let cfg = QuantConfig::new(block_size).map_err(py_err)?;
    quant::loftq_init(&w.0, r, iters, &cfg).map(PyLayer).map_err(py_err)
}

/// Percentage of the direct NF4 error removed by `layer`.
#[pyfunction]
#[pyo3(signature = (w, layer, block_size=quant::DEFAULT_BLOCK_SIZE))]
fn error_reduction_ratio(w: &PyMatrix, layer: &PyLayer, block_size: usize) -> PyResult<f64> {
    let cfg = QuantConfig::new(block_size).map_err(py_err)?;
    quant::error_reduction_ratio(&w.0, &layer.0, &cfg).map_err(py_err)
}

/// NF4 quantize then dequantize.
#[pyfunction]
#[pyo3(signature = (m, block_size=quant::DEFAULT_BLOCK_SIZE))]
fn nf4_roundtrip(m: &PyMatrix, block_size: usize) -> PyResult<PyMatrix> {
    let cfg = QuantConfig::new(block_size).map_err(py_err)?;
    Ok(PyMatrix(quant::dequantize(&quant::quantize(&m.0, &cfg))))
}

#[pyfunction]
fn nf4_levels() -> Vec<f64> {
    quant::Nf4Codebook::normal_float().levels().to_vec()
}

#[pyfunction]
fn singular_values(m: &PyMatrix) -> PyResult<Vec<f64>> {
    linalg::singular_values(&m.0).map_err(py_err)
}

/// `(U, s, V)` with `m = U diag(s) Vᵀ`.
#[pyfunction]
fn svd(m: &PyMatrix) -> PyResult<(PyMatrix, Vec<f64>, PyMatrix)> {
    let f = linalg::exact_svd(&m.0).map_err(py_err)?;
    Ok((PyMatrix(f.u), f.s, PyMatrix(f.v)))
}

#[pyfunction]
#[pyo3(signature = (m, r, niter, seed=0))]
fn randomized_svd(m: &PyMatrix, r: usize, niter: usize, seed: u64) -> PyResult<(PyMatrix, Vec<f64>, PyMatrix)> {
    let f = linalg::randomized_svd(&m.0, r, niter, &mut RandomSource::new(seed)).map_err(py_err)?;
    Ok((PyMatrix(f.u), f.s, PyMatrix(f.v)))
}

/// `(ΔA, ΔB)` such that `W + ΔA·ΔB` equals the trained layer's weight.
#[pyfunction]
fn lora_delta(initial: &PyLayer, trained: &PyLayer) -> PyResult<(PyMatrix, PyMatrix)> {
    let d = adapter::to_lora_delta(initial.0.adapter(), trained.0.adapter()).map_err(py_err)?;
    let s = d.scale;
    Ok((PyMatrix(d.a.scale(s)), PyMatrix(d.b)))
}

#[pymodule]
#[pyo3(name = "pissa")]
fn pissa_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyLayer>()?;
    m.add_function(wrap_pyfunction!(pissa_init, m)?)?;
    m.add_function(wrap_pyfunction!(lora_init, m)?)?;
    m.add_function(wrap_pyfunction!(variant_init, m)?)?;
    m.add_function(wrap_pyfunction!(qlora_init, m)?)?;
    m.add_function(wrap_pyfunction!(qpissa_init, m)?)?;
    m.add_function(wrap_pyfunction!(loftq_init, m)?)?;
    m.add_function(wrap_pyfunction!(error_reduction_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(nf4_roundtrip, m)?)?;
    m.add_function(wrap_pyfunction!(nf4_levels, m)?)?;
    m.add_function(wrap_pyfunction!(singular_values, m)?)?;
    m.add_function(wrap_pyfunction!(svd, m)?)?;
    m.add_function(wrap_pyfunction!(randomized_svd, m)?)?;
    m.add_function(wrap_pyfunction!(lora_delta, m)?)?;
    Ok(())
}
