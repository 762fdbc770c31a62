//! Python bindings for `blstab`.
//!
//! Structured inputs and results cross the boundary as plain dicts and lists,
//! using the same JSON shapes as the command line.

use std::path::Path;

use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyModule;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use blstab::cli::{self, Overrides, RunConfig};
use blstab::datum::{self, CandidateOpts, Datum};
use blstab::error::BlError;
use blstab::gaussian_bl::{self, GaussianTuple};
use blstab::integrator::{self, DistanceOpts, FunctionSpec, GaussianClass};
use blstab::linalg::{self, Mat};
use blstab::optimizer::{self, OptimizerOpts};
use blstab::stability_lab::{self as lab, DeficitOpts};
use blstab::{catalog, fourier};

fn err(e: BlError) -> PyErr {
    if cli::exit_code(&e) == cli::EXIT_NUMERICAL {
        PyArithmeticError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

fn to_py<T: Serialize>(py: Python<'_>, x: &T) -> PyResult<Py<PyAny>> {
    let s = serde_json::to_string(x).map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (s,))?.unbind())
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let s: String = obj
        .py()
        .import("json")?
        .call_method1("dumps", (obj,))?
        .extract()?;
    let mut de = serde_json::Deserializer::from_str(&s);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        PyValueError::new_err(format!("{path}: {}", e.into_inner()))
    })
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Mat> {
    let cols = rows.first().map_or(0, Vec::len);
    linalg::mat_from_rows(&rows, cols).map_err(err)
}

/// A Brascamp-Lieb datum: linear maps `B_j : R^d → R^{d_j}` with exponents `p_j`.
#[pyclass(name = "Datum", frozen, skip_from_py_object, module = "pyblstab")]
#[derive(Clone)]
struct PyDatum {
    inner: Datum,
}

#[pymethods]
impl PyDatum {
    /// `factors` is a list of `(matrix, p)` pairs; matrices are row lists.
    #[new]
    fn new(d: usize, factors: Vec<(Vec<Vec<f64>>, f64)>) -> PyResult<Self> {
        let mut out = Vec::with_capacity(factors.len());
        for (j, (rows, p)) in factors.into_iter().enumerate() {
            if rows.iter().any(|r| r.len() != d) {
                return Err(PyValueError::new_err(format!(
                    "factor {j}: every row needs d = {d} entries"
                )));
            }
            out.push((matrix(rows)?, p));
        }
        Ok(PyDatum {
            inner: Datum::new(d, out).map_err(err)?,
        })
    }

    /// A named datum, e.g. `"frame-120"` or `"loomis-whitney"`.
    #[staticmethod]
    fn catalog(name: &str) -> PyResult<Self> {
        catalog::by_name(name)
            .map(|inner| PyDatum { inner })
            .ok_or_else(|| PyValueError::new_err(format!("unknown catalog datum {name:?}")))
    }

    #[staticmethod]
    fn random_rank_one(d: usize, m: usize, seed: u64) -> Self {
        PyDatum {
            inner: catalog::random_rank_one(d, m, seed),
        }
    }

    /// Parses the `{"d": .., "factors": [{"matrix": .., "p": ..}]}` form.
    #[staticmethod]
    fn from_dict(obj: &Bound<'_, PyAny>) -> PyResult<Self> {
        Ok(PyDatum {
            inner: from_py(obj)?,
        })
    }

    fn to_dict(&self, py: Python<'_>) -> PyResult<Py<PyAny>> {
        to_py(py, &self.inner)
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims()
    }

    #[getter]
    fn exponents(&self) -> Vec<f64> {
        self.inner.factors().iter().map(|f| f.p).collect()
    }

    fn scaling_defect(&self) -> f64 {
        datum::scaling_defect(&self.inner)
    }

    #[pyo3(signature = (tol = 1e-9))]
    fn is_geometric(&self, tol: f64) -> bool {
        datum::is_geometric(&self.inner, tol).geometric
    }

    #[pyo3(signature = (seed = 0))]
    fn classify_finiteness(&self, py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
        let opts = CandidateOpts {
            seed,
            ..CandidateOpts::for_datum(&self.inner)
        };
        to_py(py, &datum::classify_finiteness(&self.inner, opts))
    }

    #[pyo3(signature = (seed = 0))]
    fn classify_simplicity(&self, py: Python<'_>, seed: u64) -> PyResult<Py<PyAny>> {
        let opts = CandidateOpts {
            seed,
            ..CandidateOpts::for_datum(&self.inner)
        };
        to_py(py, &datum::classify_simplicity(&self.inner, opts))
    }

    fn __repr__(&self) -> String {
        format!(
            "Datum(d={}, dims={:?}, p={:?})",
            self.d(),
            self.dims(),
            self.exponents()
        )
    }
}

fn optimizer_opts(
    restarts: Option<usize>,
    seed: u64,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<OptimizerOpts> {
    let mut opts: OptimizerOpts = match options {
        Some(o) => from_py(o)?,
        None => OptimizerOpts::default(),
    };
    opts.seed = seed;
    if let Some(r) = restarts {
        opts.restarts = r;
    }
    Ok(opts)
}

/// Best constant by Gaussian optimization; `options` overrides optimizer fields.
#[pyfunction]
#[pyo3(signature = (datum, restarts = None, seed = 0, options = None))]
fn bl_constant(
    py: Python<'_>,
    datum: &PyDatum,
    restarts: Option<usize>,
    seed: u64,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let opts = optimizer_opts(restarts, seed, options)?;
    let mut res = py
        .detach(|| optimizer::bl_constant(&datum.inner, &opts))
        .map_err(err)?;
    res.trace.clear();
    to_py(py, &res)
}

/// Value of the functional on centered Gaussians `exp(−⟨A_j y, y⟩)`.
#[pyfunction]
fn gaussian_bl_value(datum: &PyDatum, matrices: Vec<Vec<Vec<f64>>>) -> PyResult<f64> {
    let a = matrices
        .into_iter()
        .map(matrix)
        .collect::<PyResult<Vec<_>>>()?;
    Ok(
        gaussian_bl::gaussian_bl_value(&datum.inner, &GaussianTuple::centered(a))
            .map_err(err)?
            .value,
    )
}

/// Geometric datum equivalent to `datum`, with the reduction report.
#[pyfunction]
#[pyo3(signature = (datum, restarts = None, seed = 0))]
fn geometric_reduce(
    py: Python<'_>,
    datum: &PyDatum,
    restarts: Option<usize>,
    seed: u64,
) -> PyResult<(PyDatum, Py<PyAny>)> {
    let opts = optimizer_opts(restarts, seed, None)?;
    let red = py
        .detach(|| {
            let opt = optimizer::bl_constant(&datum.inner, &opts)?;
            optimizer::geometric_reduce(&datum.inner, &opt.maximizer)
        })
        .map_err(err)?;
    let report = to_py(py, &red)?;
    Ok((PyDatum { inner: red.datum }, report))
}

#[pyfunction]
fn a_p(p: f64) -> PyResult<f64> {
    fourier::a_p(p).map_err(err)
}

/// Fourier-side constant from the constant `bl` of `datum`.
#[pyfunction]
fn fbl_constant(datum: &PyDatum, bl: f64) -> PyResult<f64> {
    fourier::fbl_constant(&datum.inner, bl).map_err(err)
}

/// Hausdorff-Young ratio of a function given as a spec dict.
#[pyfunction]
fn hy_ratio(py: Python<'_>, function: &Bound<'_, PyAny>, p: f64) -> PyResult<Py<PyAny>> {
    let f: FunctionSpec = from_py(function)?;
    let rep = py
        .detach(|| fourier::hy_ratio(&f, p, &fourier::HyOpts::default()))
        .map_err(err)?;
    to_py(py, &rep)
}

/// `L^p` norm, closed form where available.
#[pyfunction]
fn lp_norm(function: &Bound<'_, PyAny>, p: f64) -> PyResult<f64> {
    let f: FunctionSpec = from_py(function)?;
    Ok(integrator::lp_norm_numeric(&f, p, &Default::default())
        .map_err(err)?
        .value)
}

/// Upper bound for the `L^p` distance of a function to the Gaussians.
#[pyfunction]
#[pyo3(signature = (function, p, complex = false, options = None))]
fn dist_to_gaussians(
    py: Python<'_>,
    function: &Bound<'_, PyAny>,
    p: f64,
    complex: bool,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let f: FunctionSpec = from_py(function)?;
    let opts: DistanceOpts = match options {
        Some(o) => from_py(o)?,
        None => DistanceOpts::default(),
    };
    let class = if complex {
        GaussianClass::Complex
    } else {
        GaussianClass::RealPositive
    };
    let res = py
        .detach(|| integrator::dist_to_gaussians(&f, p, class, &opts))
        .map_err(err)?;
    to_py(py, &res)
}

/// Deficit and relative distances of a function tuple.
#[pyfunction]
#[pyo3(signature = (datum, functions, bl, options = None))]
fn deficit_report(
    py: Python<'_>,
    datum: &PyDatum,
    functions: &Bound<'_, PyAny>,
    bl: f64,
    options: Option<&Bound<'_, PyAny>>,
) -> PyResult<Py<PyAny>> {
    let fs: Vec<FunctionSpec> = from_py(functions)?;
    let opts: DeficitOpts = match options {
        Some(o) => from_py(o)?,
        None => DeficitOpts::default(),
    };
    let rep = py
        .detach(|| lab::deficit_report(&datum.inner, &fs, bl, &opts))
        .map_err(err)?;
    to_py(py, &rep)
}

/// Extremizing tuple of a geometric datum, as spec dicts.
#[pyfunction]
fn geometric_extremizer(py: Python<'_>, datum: &PyDatum) -> PyResult<Py<PyAny>> {
    to_py(py, &lab::geometric_extremizer(&datum.inner))
}

/// Log-log fit `measured ≈ C · parameter^slope` with a 95% half-width.
#[pyfunction]
fn fit_exponent(py: Python<'_>, parameter: Vec<f64>, measured: Vec<f64>) -> PyResult<Py<PyAny>> {
    to_py(py, &lab::fit_exponent(&parameter, &measured).map_err(err)?)
}

/// Runs a config dict as the command line would and returns
/// `(exit_code, summary)`. Outputs go to `output_dir/<config hash>/`.
#[pyfunction]
#[pyo3(signature = (config, output_dir, base_dir = "."))]
fn run(
    py: Python<'_>,
    config: &Bound<'_, PyAny>,
    output_dir: &str,
    base_dir: &str,
) -> PyResult<(i32, Py<PyAny>)> {
    let raw: Value = from_py(config)?;
    let ov = Overrides {
        output_dir: Some(output_dir.into()),
        ..Overrides::default()
    };
    let cfg = RunConfig::from_value(raw, Path::new(base_dir), &ov).map_err(err)?;
    let out = py.detach(|| cli::execute(&cfg)).map_err(err)?;
    Ok((out.exit_code, to_py(py, &out.summary)?))
}

#[pymodule]
fn pyblstab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDatum>()?;
    m.add_function(wrap_pyfunction!(bl_constant, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_bl_value, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_reduce, m)?)?;
    m.add_function(wrap_pyfunction!(a_p, m)?)?;
    m.add_function(wrap_pyfunction!(fbl_constant, m)?)?;
    m.add_function(wrap_pyfunction!(hy_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(lp_norm, m)?)?;
    m.add_function(wrap_pyfunction!(dist_to_gaussians, m)?)?;
    m.add_function(wrap_pyfunction!(deficit_report, m)?)?;
    m.add_function(wrap_pyfunction!(geometric_extremizer, m)?)?;
    m.add_function(wrap_pyfunction!(fit_exponent, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
