//! Python bindings. Parameters travel as a `Params` object; complex results
//! come back as Python complex numbers.

use ncgw_core::audit::{run_audit, AuditOptions};
use ncgw_core::invariant::closed_form_coeffs;
use ncgw_core::observables::{self, ExpectationReport, ScanMode};
use ncgw_core::params::PhysicalParams;
use ncgw_core::states::PacketMode;
use ncgw_core::Error;
use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::InvalidParameter { .. } | Error::StepTooCoarse { .. } => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// Physical parameters; every argument defaults to the reference regime.
#[pyclass(name = "Params", frozen, from_py_object)]
#[derive(Clone)]
pub struct Params {
    inner: PhysicalParams,
}

#[pymethods]
impl Params {
    #[new]
    #[pyo3(signature = (m=None, g=None, hbar=None, theta=None, eta=None, tau=None, kappa=None))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        m: Option<f64>,
        g: Option<f64>,
        hbar: Option<f64>,
        theta: Option<f64>,
        eta: Option<f64>,
        tau: Option<f64>,
        kappa: Option<f64>,
    ) -> PyResult<Self> {
        let d = PhysicalParams::regime_r0();
        let inner = PhysicalParams {
            m: m.unwrap_or(d.m),
            g: g.unwrap_or(d.g),
            hbar: hbar.unwrap_or(d.hbar),
            theta: theta.unwrap_or(d.theta),
            eta: eta.unwrap_or(d.eta),
            tau: tau.unwrap_or(d.tau),
            kappa: kappa.unwrap_or(d.kappa),
        };
        inner.validate().map_err(to_py_err)?;
        Ok(Params { inner })
    }

    #[getter]
    fn omega(&self) -> f64 {
        self.inner.omega()
    }

    #[getter]
    fn period(&self) -> f64 {
        self.inner.period()
    }

    #[getter]
    fn zeta(&self) -> f64 {
        self.inner.zeta()
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("params serialize")
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Params(m={}, g={}, hbar={}, theta={}, eta={}, tau={}, kappa={})",
            p.m, p.g, p.hbar, p.theta, p.eta, p.tau, p.kappa
        )
    }
}

/// Closed-form (A, B, C, D, alpha) of the invariant at time t.
#[pyfunction]
fn coeffs(p: &Params, t: f64) -> [Complex64; 5] {
    closed_form_coeffs(&p.inner).at(t).to_array()
}

fn report_dict<'py>(py: Python<'py>, r: &ExpectationReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for name in ["x", "y", "px", "py", "x2", "y2", "px2", "py2", "xy", "var_x", "var_px", "product"] {
        d.set_item(name, r.get(name).expect("known moment"))?;
    }
    d.set_item("t", r.time)?;
    Ok(d)
}

/// Oracle moments of the packet at time t (Gauss–Hermite over λ).
#[pyfunction]
fn oracle_expectations<'py>(py: Python<'py>, p: &Params, t: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = observables::moment_expectations(t, &p.inner, PacketMode::LambdaQuadrature).map_err(to_py_err)?;
    report_dict(py, &r)
}

/// The printed moment formulas evaluated verbatim; raises where they are
/// degenerate.
#[pyfunction]
fn paper_expectations<'py>(py: Python<'py>, p: &Params, t: f64) -> PyResult<Bound<'py, PyDict>> {
    let r = observables::paper_expectations(t, &p.inner).map_err(to_py_err)?;
    report_dict(py, &r)
}

/// Uncertainty product over [t0, t1]; `mode` is "oracle" or "paper".
#[pyfunction]
#[pyo3(signature = (p, t0, t1, samples, mode="oracle"))]
fn uncertainty_scan<'py>(
    py: Python<'py>,
    p: &Params,
    t0: f64,
    t1: f64,
    samples: usize,
    mode: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let mode = match mode {
        "oracle" => ScanMode::Oracle,
        "paper" => ScanMode::Paper,
        other => return Err(PyValueError::new_err(format!("mode must be 'oracle' or 'paper', got {other:?}"))),
    };
    let tr = observables::uncertainty_scan((t0, t1), samples, &p.inner, mode).map_err(to_py_err)?;
    let d = PyDict::new(py);
    d.set_item("times", tr.times)?;
    d.set_item("product", tr.product)?;
    d.set_item("f", tr.f)?;
    d.set_item("minima", tr.minima.iter().map(|m| (m.t, m.product)).collect::<Vec<_>>())?;
    d.set_item("flagged", tr.flagged)?;
    Ok(d)
}

/// Runs the paper-versus-oracle audit and returns the discrepancy report as
/// JSON. The propagation checks are skipped unless `propagate` is set.
#[pyfunction]
#[pyo3(signature = (p, propagate=false, grid_n=256))]
fn audit(py: Python<'_>, p: &Params, propagate: bool, grid_n: usize) -> PyResult<String> {
    let opts = AuditOptions { grid_n, propagation_n: grid_n, propagate, ..AuditOptions::default() };
    let inner = p.inner;
    let rep = py.detach(move || run_audit(&inner, &opts)).map_err(to_py_err)?;
    serde_json::to_string(&rep.discrepancies).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
pub fn ncgw(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Params>()?;
    m.add_function(wrap_pyfunction!(coeffs, m)?)?;
    m.add_function(wrap_pyfunction!(oracle_expectations, m)?)?;
    m.add_function(wrap_pyfunction!(paper_expectations, m)?)?;
    m.add_function(wrap_pyfunction!(uncertainty_scan, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    Ok(())
}
