//! Python bindings. Reports cross the boundary as plain dicts decoded from
//! the same JSON the CLI writes.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use copectx::cloning::{verify_cloning as verify, CloneModel, CloningConfig, InputMode, Task};
use copectx::fragments::{cope_from_fragment, meqsd_cope, sdc_cope, CopeMatrix as CoreCope, MeqsdParams, SdcParams};
use copectx::nmf::{enmf_search, nmf_factorize_matrix, NmfConfig};
use copectx::quantum::{self, CloneCoefficients};
use copectx::rank::{self, CopeInput, VerdictConfig};
use copectx::solvers::{self, SolverConfig};

fn err(e: copectx::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Pure state with normalized amplitudes.
#[pyclass(name = "Ket", frozen)]
struct PyKet {
    inner: quantum::Ket,
}

#[pymethods]
impl PyKet {
    #[new]
    fn new(amplitudes: Vec<Complex64>) -> PyResult<Self> {
        Ok(PyKet { inner: quantum::Ket::new(amplitudes).map_err(err)? })
    }

    #[staticmethod]
    fn bloch(theta: f64, phi: f64) -> Self {
        PyKet { inner: quantum::bloch_state(theta, phi) }
    }

    #[staticmethod]
    fn equatorial(phi: f64) -> Self {
        PyKet { inner: quantum::equatorial_state(phi) }
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn amplitudes(&self) -> Vec<Complex64> {
        self.inner.amplitudes().to_vec()
    }

    fn overlap(&self, other: &PyKet) -> PyResult<f64> {
        quantum::overlap_prob(&self.inner, &other.inner).map_err(err)
    }

    fn tensor(&self, other: &PyKet) -> Self {
        PyKet { inner: quantum::tensor(&self.inner, &other.inner) }
    }

    fn orthogonal_in_span(&self, other: &PyKet) -> PyResult<Self> {
        Ok(PyKet { inner: quantum::orthogonal_in_span(&self.inner, &other.inner).map_err(err)? })
    }

    fn __repr__(&self) -> String {
        format!("Ket(dim={})", self.inner.dim())
    }
}

/// COPE matrix with its measurement blocks.
#[pyclass(name = "CopeMatrix", frozen)]
struct PyCope {
    inner: CoreCope,
}

#[pymethods]
impl PyCope {
    #[staticmethod]
    #[pyo3(signature = (c_q, s_q=None))]
    fn meqsd(c_q: f64, s_q: Option<f64>) -> PyResult<Self> {
        let params = match s_q {
            Some(s) => MeqsdParams::new(c_q, s),
            None => MeqsdParams::helstrom(c_q),
        }
        .map_err(err)?;
        Ok(PyCope { inner: meqsd_cope(params) })
    }

    #[staticmethod]
    #[pyo3(signature = (phi, c=None, d=None))]
    fn sdc(phi: f64, c: Option<f64>, d: Option<f64>) -> PyResult<Self> {
        let coeffs = coefficients(phi, c, d)?;
        Ok(PyCope { inner: sdc_cope(SdcParams::from_coefficients(&coeffs).map_err(err)?) })
    }

    /// Dense COPE of a fragment given as JSON text.
    #[staticmethod]
    fn from_fragment_json(text: &str) -> PyResult<Self> {
        let f = copectx::io::parse_fragment(text).map_err(err)?;
        Ok(PyCope { inner: cope_from_fragment(&f).map_err(err)? })
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.inner.nrows(), self.inner.ncols())
    }

    fn entries(&self) -> Vec<Vec<f64>> {
        self.inner.entries().row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    #[pyo3(signature = (tol=None))]
    fn rank(&self, tol: Option<f64>) -> PyResult<usize> {
        Ok(rank::numerical_rank(self.inner.entries(), tol).map_err(err)?.rank)
    }

    #[pyo3(signature = (tol=None, eps=rank::DEFAULT_EPS))]
    fn verdict<'py>(&self, py: Python<'py>, tol: Option<f64>, eps: f64) -> PyResult<Bound<'py, PyAny>> {
        let cfg = VerdictConfig { tol, eps, ..VerdictConfig::default() };
        let v = rank::rank_separation_verdict(CopeInput::Dense(&self.inner), &cfg).map_err(err)?;
        to_py(py, &v)
    }

    #[pyo3(signature = (restarts=50, max_iter=20000, seed=0))]
    fn enmf_search<'py>(&self, py: Python<'py>, restarts: usize, max_iter: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
        let cfg = NmfConfig { restarts, max_iter, seed, ..NmfConfig::default() };
        to_py(py, &enmf_search(&self.inner, &cfg, None).map_err(err)?)
    }
}

fn coefficients(phi: f64, c: Option<f64>, d: Option<f64>) -> PyResult<CloneCoefficients> {
    match (c, d) {
        (Some(c), Some(d)) => CloneCoefficients::new(phi, c, d),
        (None, None) => CloneCoefficients::inner_product_preserving(phi),
        _ => return Err(PyValueError::new_err("give both c and d, or neither")),
    }
    .map_err(err)
}

#[pyfunction]
fn sperner_bound<'py>(py: Python<'py>, n: u64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &rank::sperner_bound(n))
}

#[pyfunction]
fn min_preparations_for_separation(rank_cap: u64) -> String {
    rank::min_preparations_for_separation(rank_cap).to_string()
}

#[pyfunction]
fn solve_success_prob<'py>(py: Python<'py>, c_q: f64) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &solvers::solve_success_prob(c_q, &SolverConfig::default()).map_err(err)?)
}

#[pyfunction]
#[pyo3(signature = (phi, c=None, d=None))]
fn sdc_spectrum(phi: f64, c: Option<f64>, d: Option<f64>) -> PyResult<Vec<f64>> {
    solvers::sdc_spectrum(&coefficients(phi, c, d)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (task, n, rotation=Some(0.2), seed=None))]
fn verify_cloning<'py>(
    py: Python<'py>,
    task: &str,
    n: usize,
    rotation: Option<f64>,
    seed: Option<u64>,
) -> PyResult<Bound<'py, PyAny>> {
    let task = match task {
        "phase_covariant" | "phase-covariant" => Task::PhaseCovariant,
        "universal" => Task::Universal,
        other => return Err(PyValueError::new_err(format!("unknown task {other:?}"))),
    };
    let mut cfg = CloningConfig::new(task, n);
    cfg.model = rotation.map_or(CloneModel::Ideal, CloneModel::Rotated);
    if let Some(s) = seed {
        cfg.mode = InputMode::Seeded(s);
        cfg.sampling.seed = s;
    }
    let report = py.detach(|| verify(&cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (matrix, k, restarts=50, max_iter=20000, seed=0))]
fn nmf<'py>(
    py: Python<'py>,
    matrix: Vec<Vec<f64>>,
    k: usize,
    restarts: usize,
    max_iter: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    if matrix.iter().any(|r| r.len() != cols) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    let m = nalgebra_matrix(rows, cols, matrix);
    let cfg = NmfConfig { restarts, max_iter, seed, ..NmfConfig::default() };
    to_py(py, &nmf_factorize_matrix(&m, None, k, &cfg).map_err(err)?)
}

fn nalgebra_matrix(rows: usize, cols: usize, data: Vec<Vec<f64>>) -> copectx::Matrix {
    copectx::Matrix::from_row_iterator(rows, cols, data.into_iter().flatten())
}

#[pymodule]
#[pyo3(name = "copectx")]
fn copectx_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("SCHEMA", copectx::SCHEMA)?;
    m.add_class::<PyKet>()?;
    m.add_class::<PyCope>()?;
    m.add_function(wrap_pyfunction!(sperner_bound, m)?)?;
    m.add_function(wrap_pyfunction!(min_preparations_for_separation, m)?)?;
    m.add_function(wrap_pyfunction!(solve_success_prob, m)?)?;
    m.add_function(wrap_pyfunction!(sdc_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(verify_cloning, m)?)?;
    m.add_function(wrap_pyfunction!(nmf, m)?)?;
    Ok(())
}
