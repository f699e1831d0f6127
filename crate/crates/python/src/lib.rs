//! Python bindings. Thin wrappers: all numerics live in `nim-core`.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nim_core::discretization::{build_node_grid, Domain, Point, MAX_DIM};
use nim_core::experiments::diagnostics::{gradient_check, patch_check, reproduce_check};
use nim_core::experiments::{
    analytic_bar_solution as bar_solution, generate_strain_data, grf_modulus as grf, run_forward, run_inverse,
    symmetric_modulus as symmetric, write_strain_data, ProblemConfig, RunOptions, Solution,
};
use nim_core::materials::{MaterialKind, MaterialModel};
use nim_core::residual::{Scheme, StrainDataSet};
use nim_core::rk_basis::{evaluate_shape, RkConfig};
use nim_core::Error;

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

pub fn parse_kind(kind: &str) -> Result<MaterialKind, Error> {
    match kind.to_ascii_lowercase().as_str() {
        "bar1d" => Ok(MaterialKind::Bar1d),
        "svk" | "saint_venant_kirchhoff" | "st_venant_kirchhoff" => Ok(MaterialKind::Svk),
        "neo_hookean" | "neohookean" => Ok(MaterialKind::NeoHookean),
        other => Err(Error::config(format!(
            "unknown material kind `{other}` (expected bar1d, svk or neo_hookean)"
        ))),
    }
}

pub fn parse_scheme(scheme: Option<&str>) -> Result<Option<Scheme>, Error> {
    scheme.map(str::parse).transpose()
}

/// Shape-function values and gradients at `x` for a uniform node grid.
pub fn shape_at(
    x: &[f64],
    bounds: &[(f64, f64)],
    counts: &[usize],
    order: usize,
    a_bar: f64,
) -> Result<(Vec<usize>, Vec<f64>, Vec<Vec<f64>>), Error> {
    let domain = Domain::new(bounds)?;
    let dim = domain.dim();
    if x.len() != dim {
        return Err(Error::Argument(format!("point has {} coordinates, domain is {dim}D", x.len())));
    }
    let nodes = build_node_grid(&domain, counts)?;
    let cfg = RkConfig::new(order, a_bar);
    cfg.validate()?;
    let mut p: Point = [0.0; MAX_DIM];
    p[..dim].copy_from_slice(x);
    let s = evaluate_shape(&p, &nodes, &cfg)?;
    let grads = s.gradients.iter().map(|g| g[..dim].to_vec()).collect();
    Ok((s.indices, s.values, grads))
}

fn report(py: Python<'_>, s: &Solution, out: Option<PathBuf>) -> PyResult<Py<PyAny>> {
    if let Some(dir) = out {
        s.write(&dir).map_err(to_py)?;
    }
    let text = serde_json::to_string(&s.report()).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    Ok(py.import("json")?.call_method1("loads", (text,))?.unbind())
}

/// Displacement and strain of the analytic bar solution.
#[pyfunction]
fn analytic_bar_solution(x: f64) -> (f64, f64) {
    bar_solution(x)
}

#[pyfunction]
fn symmetric_modulus(x: f64, y: f64) -> f64 {
    symmetric(x, y)
}

/// Gaussian random modulus field on an `n x n` grid, as rows.
#[pyfunction]
#[pyo3(signature = (n, alpha=3.0, seed=0))]
fn grf_modulus(n: usize, alpha: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let g = grf(n, alpha, seed).map_err(to_py)?;
    Ok(g.values.chunks(n).map(<[f64]>::to_vec).collect())
}

/// First Piola stress (row-major) for a deformation gradient.
#[pyfunction]
#[pyo3(signature = (kind, f, youngs=1.0, poisson=0.0))]
fn pk1_stress(kind: &str, f: Vec<f64>, youngs: f64, poisson: f64) -> PyResult<Vec<f64>> {
    let m = MaterialModel::new(parse_kind(kind).map_err(to_py)?, youngs, poisson).map_err(to_py)?;
    m.pk1_stress(&f).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (kind, f, youngs=1.0, poisson=0.0))]
fn energy_density(kind: &str, f: Vec<f64>, youngs: f64, poisson: f64) -> PyResult<f64> {
    let m = MaterialModel::new(parse_kind(kind).map_err(to_py)?, youngs, poisson).map_err(to_py)?;
    m.energy_density(&f).map_err(to_py)
}

/// `(indices, values, gradients)` of the RK shape functions at `x`.
#[pyfunction]
#[pyo3(signature = (x, bounds, counts, order=2, a_bar=2.5))]
fn shape_functions(
    x: Vec<f64>,
    bounds: Vec<(f64, f64)>,
    counts: Vec<usize>,
    order: usize,
    a_bar: f64,
) -> PyResult<(Vec<usize>, Vec<f64>, Vec<Vec<f64>>)> {
    shape_at(&x, &bounds, &counts, order, a_bar).map_err(to_py)
}

/// Forward solve of a TOML config file; returns the report as a dict and
/// optionally writes the artifacts to `out`.
#[pyfunction]
#[pyo3(signature = (config, scheme=None, seed=None, out=None))]
fn solve(
    py: Python<'_>,
    config: PathBuf,
    scheme: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let cfg = ProblemConfig::load(&config).map_err(to_py)?;
    solve_impl(py, cfg, scheme, seed, out)
}

/// Forward solve of inline TOML text; relative paths resolve against `base_dir`.
#[pyfunction]
#[pyo3(signature = (text, scheme=None, seed=None, out=None, base_dir=None))]
fn solve_toml(
    py: Python<'_>,
    text: &str,
    scheme: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    base_dir: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let mut cfg = ProblemConfig::from_toml_str(text).map_err(to_py)?;
    if let Some(dir) = base_dir {
        cfg.base_dir = dir;
    }
    solve_impl(py, cfg, scheme, seed, out)
}

fn solve_impl(
    py: Python<'_>,
    cfg: ProblemConfig,
    scheme: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let opts = RunOptions {
        scheme: parse_scheme(scheme).map_err(to_py)?,
        seed,
        progress: None,
    };
    let s = py.detach(|| run_forward(&cfg, opts)).map_err(to_py)?;
    report(py, &s, out)
}

/// Inverse solve; `data` defaults to `inverse.data` in the config.
#[pyfunction]
#[pyo3(signature = (config, data=None, scheme=None, seed=None, out=None))]
fn inverse(
    py: Python<'_>,
    config: PathBuf,
    data: Option<PathBuf>,
    scheme: Option<&str>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> PyResult<Py<PyAny>> {
    let cfg = ProblemConfig::load(&config).map_err(to_py)?;
    let inv = cfg
        .inverse
        .as_ref()
        .ok_or_else(|| PyValueError::new_err("an [inverse] section is required"))?;
    let path = match data {
        Some(p) => p,
        None => cfg.resolve(
            inv.data
                .as_ref()
                .ok_or_else(|| PyValueError::new_err("no data path given and no inverse.data in the config"))?,
        ),
    };
    let set = StrainDataSet::read_csv(&path, inv.alpha).map_err(to_py)?;
    let opts = RunOptions {
        scheme: parse_scheme(scheme).map_err(to_py)?,
        seed,
        progress: None,
    };
    let s = py.detach(|| run_inverse(&cfg, set, opts)).map_err(to_py)?;
    report(py, &s, out)
}

/// Truth solve plus strain sampling; writes the data CSV and its sidecars
/// and returns the number of rows.
#[pyfunction]
fn make_data(py: Python<'_>, config: PathBuf, ndata: usize, seed: u64, out: PathBuf) -> PyResult<usize> {
    let cfg = ProblemConfig::load(&config).map_err(to_py)?;
    py.detach(|| -> Result<usize, Error> {
        let (set, truth) = generate_strain_data(&cfg, ndata, seed, None)?;
        write_strain_data(Path::new(&out), &set, &truth, ndata, seed)?;
        Ok(set.len())
    })
    .map_err(to_py)
}

/// Runs an invariant suite; returns `(passed, text report)`.
#[pyfunction]
#[pyo3(signature = (config, check, seed=0))]
fn diagnose(py: Python<'_>, config: PathBuf, check: &str, seed: u64) -> PyResult<(bool, String)> {
    let cfg = ProblemConfig::load(&config).map_err(to_py)?;
    let r = py
        .detach(|| match check {
            "gradients" => gradient_check(&cfg, seed),
            "patch" => patch_check(&cfg),
            "reproduce" => reproduce_check(&cfg, 1000, seed),
            other => Err(Error::Argument(format!(
                "unknown check `{other}` (expected gradients, patch or reproduce)"
            ))),
        })
        .map_err(to_py)?;
    Ok((r.passed(), r.to_string()))
}

#[pymodule]
fn nim_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(analytic_bar_solution, m)?)?;
    m.add_function(wrap_pyfunction!(symmetric_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(grf_modulus, m)?)?;
    m.add_function(wrap_pyfunction!(pk1_stress, m)?)?;
    m.add_function(wrap_pyfunction!(energy_density, m)?)?;
    m.add_function(wrap_pyfunction!(shape_functions, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(solve_toml, m)?)?;
    m.add_function(wrap_pyfunction!(inverse, m)?)?;
    m.add_function(wrap_pyfunction!(make_data, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    Ok(())
}
