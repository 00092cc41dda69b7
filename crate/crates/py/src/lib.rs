//! Python bindings. Reports come back as plain dicts parsed from the same
//! canonical JSON the command-line tool writes.

use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use serde::Serialize;

use oustein_core::counterexample as cx;
use oustein_core::functionals::{fd_grad, fd_hess, FDSpec};
use oustein_core::report::to_canonical_json;
use oustein_core::semigroup::{log_grid, pointwise_gap};
use oustein_core::stein::{self, DEFAULT_JTRUNC};
use oustein_core::suite::{run_criterion, run_suite, SuiteConfig};
use oustein_core::{by_name, Functional, QuadratureSpec, REGISTRY};

fn err(e: oustein_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize + ?Sized>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = to_canonical_json(value).map_err(err)?;
    py.import("json")?.call_method1("loads", (text,))
}

fn functional(name: &str) -> PyResult<Arc<dyn Functional>> {
    by_name(name).map_err(err)
}

/// A path sampled on the dyadic grid `i / 2^level`.
#[pyclass(name = "Path", module = "oustein", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
pub struct PyPath(oustein_core::Path);

#[pymethods]
impl PyPath {
    #[new]
    fn new(level: u32, values: Vec<f64>) -> PyResult<Self> {
        oustein_core::Path::new(level, values)
            .map(PyPath)
            .map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (c, level = 0))]
    fn constant(c: f64, level: u32) -> PyResult<Self> {
        oustein_core::Path::constant(c, level)
            .map(PyPath)
            .map_err(err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        oustein_core::Path::from_json(text).map(PyPath).map_err(err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.0.to_json().map_err(err)
    }

    #[getter]
    fn level(&self) -> u32 {
        self.0.level()
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.values().to_vec()
    }

    fn sup_norm(&self) -> f64 {
        self.0.sup_norm()
    }

    fn terminal(&self) -> f64 {
        self.0.terminal()
    }

    fn integral(&self) -> f64 {
        self.0.integral()
    }

    fn value_at(&self, t: f64) -> f64 {
        self.0.value_at(t)
    }

    fn scaled(&self, a: f64) -> Self {
        PyPath(self.0.scaled(a))
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "Path(level={}, sup_norm={})",
            self.0.level(),
            self.0.sup_norm()
        )
    }
}

/// Monte-Carlo settings: sample count, Brownian level, seed.
#[pyclass(name = "MCSpec", module = "oustein", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMCSpec(oustein_core::MCSpec);

#[pymethods]
impl PyMCSpec {
    #[new]
    #[pyo3(signature = (n = 10_000, level = oustein_core::paths::DEFAULT_LEVEL, seed = 0, antithetic = false))]
    fn new(n: usize, level: u32, seed: u64, antithetic: bool) -> PyResult<Self> {
        let spec = oustein_core::MCSpec::new(n, level, seed)
            .map_err(err)?
            .with_antithetic(antithetic);
        spec.validate().map_err(err)?;
        Ok(PyMCSpec(spec))
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn level(&self) -> u32 {
        self.0.level
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[getter]
    fn antithetic(&self) -> bool {
        self.0.antithetic
    }

    fn __repr__(&self) -> String {
        let m = &self.0;
        format!(
            "MCSpec(n={}, level={}, seed={}, antithetic={})",
            m.n, m.level, m.seed, m.antithetic
        )
    }
}

fn quad(
    mc: &PyMCSpec,
    u_max: f64,
    panels: usize,
    nodes: usize,
    rel_tol: f64,
) -> PyResult<QuadratureSpec> {
    let q = QuadratureSpec {
        u_max,
        panels,
        nodes_per_panel: nodes,
        mc: mc.0,
        rel_tol,
    };
    q.validate().map_err(err)?;
    Ok(q)
}

#[pyfunction]
fn registry() -> Vec<&'static str> {
    REGISTRY.to_vec()
}

#[pyfunction]
fn sample_brownian(level: u32, seed: u64) -> PyResult<PyPath> {
    oustein_core::schauder::sample_brownian(level, seed)
        .map(|s| PyPath(s.path))
        .map_err(err)
}

#[pyfunction]
fn evaluate(name: &str, w: &PyPath) -> PyResult<f64> {
    Ok(functional(name)?.evaluate(&w.0))
}

/// `Df(w)[h]`, exact.
#[pyfunction]
fn grad_dir(name: &str, w: &PyPath, h: &PyPath) -> PyResult<f64> {
    functional(name)?.grad_dir(&w.0, &h.0).map_err(err)
}

/// `D²f(w)[h1, h2]`, exact.
#[pyfunction]
fn hess_dir(name: &str, w: &PyPath, h1: &PyPath, h2: &PyPath) -> PyResult<f64> {
    functional(name)?.hess_dir(&w.0, &h1.0, &h2.0).map_err(err)
}

/// Central differences `(fd_grad, fd_hess)` along `h`.
#[pyfunction]
#[pyo3(signature = (name, w, h, eps1 = 1e-5, eps2 = 1e-4))]
fn finite_differences(
    name: &str,
    w: &PyPath,
    h: &PyPath,
    eps1: f64,
    eps2: f64,
) -> PyResult<(f64, f64)> {
    let f = functional(name)?;
    let spec = FDSpec::new(eps1, eps2).map_err(err)?;
    Ok((
        fd_grad(f.as_ref(), &w.0, &h.0, spec).map_err(err)?,
        fd_hess(f.as_ref(), &w.0, &h.0, spec).map_err(err)?,
    ))
}

/// `T_u f(w)` as `{mean, stderr, n, seed}`.
#[pyfunction]
fn semigroup_apply<'py>(
    py: Python<'py>,
    name: &str,
    u: f64,
    w: &PyPath,
    mc: &PyMCSpec,
) -> PyResult<Bound<'py, PyAny>> {
    let f = functional(name)?;
    let est = py
        .detach(|| oustein_core::semigroup::semigroup_apply(f.as_ref(), u, &w.0, &mc.0))
        .map_err(err)?;
    to_py(py, &est)
}

#[pyfunction]
fn pointwise_gaps<'py>(
    py: Python<'py>,
    name: &str,
    w: &PyPath,
    u_list: Vec<f64>,
    mc: &PyMCSpec,
) -> PyResult<Bound<'py, PyAny>> {
    let f = functional(name)?;
    let gaps = py
        .detach(|| pointwise_gap(f.as_ref(), &w.0, &u_list, &mc.0))
        .map_err(err)?;
    to_py(py, &gaps)
}

#[pyfunction]
fn stein_operator(name: &str, w: &PyPath, jtrunc: Option<u32>) -> PyResult<f64> {
    stein::stein_operator_series(
        functional(name)?.as_ref(),
        &w.0,
        jtrunc.unwrap_or(DEFAULT_JTRUNC),
    )
    .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (name, w, mc, u_max = 20.0, panels = 64, nodes = 8, rel_tol = 0.02))]
#[allow(clippy::too_many_arguments)]
fn stein_solution<'py>(
    py: Python<'py>,
    name: &str,
    w: &PyPath,
    mc: &PyMCSpec,
    u_max: f64,
    panels: usize,
    nodes: usize,
    rel_tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = functional(name)?;
    let q = quad(mc, u_max, panels, nodes, rel_tol)?;
    let report = py
        .detach(|| stein::stein_solution(g.as_ref(), &w.0, &q))
        .map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (name, w, mc, jtrunc = DEFAULT_JTRUNC, u_max = 20.0, panels = 64, nodes = 8, rel_tol = 0.02))]
#[allow(clippy::too_many_arguments)]
fn stein_residual<'py>(
    py: Python<'py>,
    name: &str,
    w: &PyPath,
    mc: &PyMCSpec,
    jtrunc: u32,
    u_max: f64,
    panels: usize,
    nodes: usize,
    rel_tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = functional(name)?;
    let q = quad(mc, u_max, panels, nodes, rel_tol)?;
    let report = py
        .detach(|| stein::stein_residual(g.as_ref(), &w.0, &q, jtrunc))
        .map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (name, w, t, mc, jtrunc = DEFAULT_JTRUNC, panels = 64, nodes = 8, rel_tol = 0.02))]
#[allow(clippy::too_many_arguments)]
fn lemma3_check<'py>(
    py: Python<'py>,
    name: &str,
    w: &PyPath,
    t: f64,
    mc: &PyMCSpec,
    jtrunc: u32,
    panels: usize,
    nodes: usize,
    rel_tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let g = functional(name)?;
    let q = quad(mc, 20.0, panels, nodes, rel_tol)?;
    let report = py
        .detach(|| stein::lemma3_check(g.as_ref(), &w.0, t, &q, jtrunc))
        .map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (name, w, r, mc, panels = 64, nodes = 8, rel_tol = 0.02))]
#[allow(clippy::too_many_arguments)]
fn ftc_check<'py>(
    py: Python<'py>,
    name: &str,
    w: &PyPath,
    r: f64,
    mc: &PyMCSpec,
    panels: usize,
    nodes: usize,
    rel_tol: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let f = functional(name)?;
    let q = quad(mc, 20.0, panels, nodes, rel_tol)?;
    let report = py
        .detach(|| stein::ftc_check(f.as_ref(), &w.0, r, &q))
        .map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
fn witness_time(k: u64) -> PyResult<f64> {
    cx::witness_time(k).map_err(err)
}

#[pyfunction]
fn deterministic_gap(k: u64) -> PyResult<f64> {
    cx::deterministic_gap(k).map_err(err)
}

#[pyfunction]
fn gap_ratio<'py>(py: Python<'py>, k: u64, mc: &PyMCSpec) -> PyResult<Bound<'py, PyAny>> {
    let est = py.detach(|| cx::gap_ratio(k, &mc.0)).map_err(err)?;
    to_py(py, &est)
}

#[pyfunction]
fn counterexample_report<'py>(
    py: Python<'py>,
    kmax: u64,
    mc: &PyMCSpec,
) -> PyResult<Bound<'py, PyAny>> {
    let ks: Vec<u64> = (1..=kmax).collect();
    let report = py
        .detach(|| cx::counterexample_report(&ks, &log_grid(0.1, 1e-4, 4)?, &mc.0))
        .map_err(err)?;
    to_py(py, &report)
}

/// One acceptance criterion (1 to 10) as `{id, name, passed, detail}`.
#[pyfunction]
#[pyo3(signature = (id, n = 100_000, seed = 0))]
fn criterion<'py>(py: Python<'py>, id: usize, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SuiteConfig {
        n,
        seed,
        ..Default::default()
    };
    let outcome = py.detach(|| run_criterion(id, &cfg)).map_err(err)?;
    to_py(py, &outcome)
}

#[pyfunction]
#[pyo3(signature = (n = 100_000, seed = 0))]
fn suite<'py>(py: Python<'py>, n: usize, seed: u64) -> PyResult<Bound<'py, PyAny>> {
    let cfg = SuiteConfig {
        n,
        seed,
        ..Default::default()
    };
    let report = py.detach(|| run_suite(&cfg)).map_err(err)?;
    to_py(py, &report)
}

#[pymodule]
fn oustein(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyPath>()?;
    m.add_class::<PyMCSpec>()?;
    m.add_function(wrap_pyfunction!(registry, m)?)?;
    m.add_function(wrap_pyfunction!(sample_brownian, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(grad_dir, m)?)?;
    m.add_function(wrap_pyfunction!(hess_dir, m)?)?;
    m.add_function(wrap_pyfunction!(finite_differences, m)?)?;
    m.add_function(wrap_pyfunction!(semigroup_apply, m)?)?;
    m.add_function(wrap_pyfunction!(pointwise_gaps, m)?)?;
    m.add_function(wrap_pyfunction!(stein_operator, m)?)?;
    m.add_function(wrap_pyfunction!(stein_solution, m)?)?;
    m.add_function(wrap_pyfunction!(stein_residual, m)?)?;
    m.add_function(wrap_pyfunction!(lemma3_check, m)?)?;
    m.add_function(wrap_pyfunction!(ftc_check, m)?)?;
    m.add_function(wrap_pyfunction!(witness_time, m)?)?;
    m.add_function(wrap_pyfunction!(deterministic_gap, m)?)?;
    m.add_function(wrap_pyfunction!(gap_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(counterexample_report, m)?)?;
    m.add_function(wrap_pyfunction!(criterion, m)?)?;
    m.add_function(wrap_pyfunction!(suite, m)?)?;
    Ok(())
}
