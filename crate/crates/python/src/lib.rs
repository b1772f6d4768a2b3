//! Python bindings. Every function takes a problem as a builtin expression
//! (`"P2(c=30)"`) or a path to a JSON config, and releases the GIL while
//! computing.
//!
//! Errors map onto Python exceptions by class: configuration problems raise
//! `ValueError`, numerical failures `ArithmeticError`, invariant violations
//! `RuntimeError`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use ispec::cli_io::{self, Command, LoadedConfig};
use ispec::discretization::{assemble, DiscreteOperator};
use ispec::dtn::{self, ContourSpec};
use ispec::{krein, spectral, Error, ErrorClass};

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e.class() {
        ErrorClass::Config => PyValueError::new_err(msg),
        ErrorClass::Numerical => PyArithmeticError::new_err(msg),
        ErrorClass::Invariant => PyRuntimeError::new_err(msg),
    }
}

fn load(config: &str) -> Result<(LoadedConfig, DiscreteOperator), Error> {
    let cfg = cli_io::load_config(config)?;
    let op = assemble(&cfg.spec)?;
    Ok((cfg, op))
}

/// Eigenvalues of the discrete pencil as `(eigenvalues, residuals, classes,
/// pair_ids)`; conjugate pairs share a pair id.
#[pyfunction]
#[allow(clippy::type_complexity)]
fn spectrum(
    py: Python<'_>,
    config: &str,
) -> PyResult<(Vec<Complex64>, Vec<f64>, Vec<&'static str>, Vec<Option<usize>>)> {
    let s = py
        .detach(|| load(config).and_then(|(_, op)| spectral::solve_generalized(&op)))
        .map_err(to_py)?;
    let classes = s.class.iter().map(|c| c.as_str()).collect();
    Ok((s.eigenvalues, s.residuals, classes, s.pair_id))
}

/// Number of negative eigenvalues of the stiffness matrix, which bounds the
/// number of nonreal eigenvalue pairs.
#[pyfunction]
fn negative_inertia(py: Python<'_>, config: &str) -> PyResult<usize> {
    py.detach(|| load(config).map(|(_, op)| spectral::negative_inertia(&op)))
        .map_err(to_py)
}

/// The interface Dirichlet-to-Neumann matrix `M(λ)` as nested lists.
#[pyfunction]
fn dtn_matrix(py: Python<'_>, config: &str, lam: Complex64) -> PyResult<Vec<Vec<Complex64>>> {
    let m = py
        .detach(|| load(config).and_then(|(_, op)| dtn::dtn(&op, lam)))
        .map_err(to_py)?;
    Ok((0..m.m.nrows())
        .map(|i| (0..m.m.ncols()).map(|j| m.m[(i, j)]).collect())
        .collect())
}

/// Nonreal eigenvalues found by contour integration of `M(λ)⁻¹` over the
/// default ellipse and its mirror image, repeated by multiplicity.
#[pyfunction]
#[pyo3(signature = (config, seed = 0))]
fn nonreal_eigenvalues(py: Python<'_>, config: &str, seed: u64) -> PyResult<Vec<Complex64>> {
    py.detach(|| -> Result<Vec<Complex64>, Error> {
        let (cfg, op) = load(config)?;
        let upper = cfg
            .experiment
            .contour
            .clone()
            .unwrap_or_else(ContourSpec::upper_default)
            .with_seed(seed);
        let lower = upper.mirrored().with_seed(seed.wrapping_add(1));
        let mut out = Vec::new();
        for c in [upper, lower] {
            let r = dtn::nonreal_eigs(&op, &c)?;
            for (z, m) in r.eigenvalues.iter().zip(&r.multiplicities) {
                out.extend(std::iter::repeat_n(*z, *m));
            }
        }
        Ok(out)
    })
    .map_err(to_py)
}

/// Enclosure radius for the nonreal spectrum and the constants behind it,
/// as a JSON string.
#[pyfunction]
fn enclosure(py: Python<'_>, config: &str) -> PyResult<String> {
    py.detach(|| -> Result<String, Error> {
        let (_, op) = load(config)?;
        let s = spectral::solve_generalized(&op)?;
        let mut an = krein::analyze(&op)?;
        an.report.check(&s.nonreal());
        Ok(serde_json::to_string(&an.report)?)
    })
    .map_err(to_py)
}

/// Runs one CLI command, writing its files into `out`; returns the report
/// as a JSON string. Failed invariants raise `RuntimeError`.
#[pyfunction]
#[pyo3(signature = (config, cmd, seed = 0, out = PathBuf::from("ispec-out")))]
fn run(py: Python<'_>, config: &str, cmd: &str, seed: u64, out: PathBuf) -> PyResult<String> {
    let cmd: Command = cmd.parse().map_err(to_py)?;
    py.detach(|| -> Result<String, Error> {
        let report = cli_io::run(config, cmd, seed, &out)?;
        Ok(serde_json::to_string(&report)?)
    })
    .map_err(to_py)
}

#[pymodule]
fn ispec_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", cli_io::VERSION)?;
    m.add_function(wrap_pyfunction!(spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(negative_inertia, m)?)?;
    m.add_function(wrap_pyfunction!(dtn_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(nonreal_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(enclosure, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
