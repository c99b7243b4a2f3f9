//! Python bindings: profiles, lattices, dispersion, kernel sets, the obstruction verdict and the CLI pipeline.

use std::path::PathBuf;
use std::sync::Arc;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use shearwave::dispersion;
use shearwave::fields::{FieldSetup, KernelAmplitude, KernelModeSet};
use shearwave::obstruction::{self, FIELD_TOL};
use shearwave::profiles::{self as core_profiles, ShearProfile};
use shearwave::riccati::RiccatiSolver;
use shearwave::vertical::VerticalGrid;
use shearwave_cli::{Command, Pipeline, RunConfig};

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn chebyshev(n3: usize, depth: f64) -> PyResult<VerticalGrid> {
    if n3 < 3 {
        return Err(value_err(format!("n3 = {n3} needs at least 3 nodes")));
    }
    Ok(VerticalGrid::chebyshev(n3, depth))
}

/// Shear profile `U(x3)` on `[-depth, 0]`.
#[pyclass(frozen, skip_from_py_object, name = "Profile")]
#[derive(Clone)]
pub struct Profile(ShearProfile);

#[pymethods]
impl Profile {
    #[staticmethod]
    fn polynomial(coeffs: Vec<f64>, depth: f64) -> PyResult<Self> {
        ShearProfile::polynomial(coeffs, depth).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn constant(value: f64, depth: f64) -> PyResult<Self> {
        ShearProfile::constant(value, depth).map(Self).map_err(value_err)
    }

    #[staticmethod]
    fn sampled(x3: Vec<f64>, u: Vec<f64>) -> PyResult<Self> {
        ShearProfile::sampled(x3, u).map(Self).map_err(value_err)
    }

    #[getter]
    fn depth(&self) -> f64 {
        self.0.depth()
    }

    fn value(&self, x3: f64) -> f64 {
        self.0.value(x3)
    }

    fn derivative(&self, x3: f64) -> f64 {
        self.0.derivative(x3)
    }
}

/// Periodicity lattice with periods `(lambda1, lambda2)`.
#[pyclass(frozen, skip_from_py_object, name = "Lattice")]
#[derive(Clone, Copy)]
pub struct Lattice(core_profiles::LatticeSpec);

#[pymethods]
impl Lattice {
    #[new]
    fn new(lambda1: f64, lambda2: f64) -> PyResult<Self> {
        core_profiles::LatticeSpec::new(lambda1, lambda2).map(Self).map_err(value_err)
    }

    #[getter]
    fn kappa1(&self) -> f64 {
        self.0.kappa1()
    }

    #[getter]
    fn kappa2(&self) -> f64 {
        self.0.kappa2()
    }

    fn wavevector(&self, i: i64, j: i64) -> (f64, f64) {
        let k = self.0.wavevector(i, j);
        (k[0], k[1])
    }
}

/// Capillary-gravity parameters `D(s) = g + sigma s`.
#[pyclass(frozen, skip_from_py_object, name = "WaveParams")]
#[derive(Clone)]
pub struct WaveParams(core_profiles::WaveParams);

#[pymethods]
impl WaveParams {
    #[new]
    fn new(g: f64, sigma: f64) -> PyResult<Self> {
        core_profiles::WaveParams::capillary_gravity(g, sigma).map(Self).map_err(value_err)
    }

    #[getter]
    fn g(&self) -> f64 {
        self.0.g
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.0.sigma
    }

    fn restoring(&self, k_sq: f64) -> f64 {
        self.0.restoring(k_sq)
    }
}

/// `(nodes, q, int_{-d}^{x3} q)` on an `n3`-point Chebyshev grid.
#[pyfunction]
#[pyo3(signature = (profile, k1, k2, n3 = 33, tol = FIELD_TOL))]
fn solve_riccati(profile: &Profile, k1: f64, k2: f64, n3: usize, tol: f64) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let grid = chebyshev(n3, profile.0.depth())?;
    let sol = RiccatiSolver::new(tol)
        .solve(&profile.0, [k1, k2], grid.nodes())
        .map_err(value_err)?;
    Ok((sol.nodes().to_vec(), sol.q().to_vec(), sol.integral().to_vec()))
}

#[pyfunction]
#[pyo3(signature = (profile, g, lattice, i, j, tol = FIELD_TOL))]
fn calibrate_sigma(profile: &Profile, g: f64, lattice: &Lattice, i: i64, j: i64, tol: f64) -> PyResult<f64> {
    dispersion::calibrate_sigma(&profile.0, g, &lattice.0, [i, j], &RiccatiSolver::new(tol)).map_err(value_err)
}

#[pyfunction]
#[pyo3(signature = (profile, params, k1, k2, tol = FIELD_TOL))]
fn dispersion_residual(profile: &Profile, params: &WaveParams, k1: f64, k2: f64, tol: f64) -> PyResult<f64> {
    dispersion::dispersion_residual(&profile.0, &params.0, [k1, k2], &RiccatiSolver::new(tol)).map_err(value_err)
}

/// Lattice indices `(i, j)` of the resonant set, in canonical order.
#[pyfunction]
#[pyo3(signature = (profile, params, lattice, membership_tol = dispersion::DEFAULT_MEMBERSHIP_TOL, n3 = 33, tol = FIELD_TOL))]
fn kernel_set(
    profile: &Profile,
    params: &WaveParams,
    lattice: &Lattice,
    membership_tol: f64,
    n3: usize,
    tol: f64,
) -> PyResult<Vec<(i64, i64)>> {
    let grid = chebyshev(n3, profile.0.depth())?;
    let set = dispersion::find_kernel_set(
        &profile.0,
        &params.0,
        &lattice.0,
        membership_tol,
        &RiccatiSolver::new(tol),
        grid.nodes(),
    )
    .map_err(value_err)?;
    Ok(set.modes.iter().map(|m| (m.index[0], m.index[1])).collect())
}

/// Obstruction verdict as a JSON string; `modes` holds `(i, j, a)` triples.
#[pyfunction]
#[pyo3(signature = (profile, params, lattice, modes, n3 = 33, tol = FIELD_TOL))]
fn verdict(
    profile: &Profile,
    params: &WaveParams,
    lattice: &Lattice,
    modes: Vec<(i64, i64, f64)>,
    n3: usize,
    tol: f64,
) -> PyResult<String> {
    let solver = RiccatiSolver::new(tol);
    let vgrid = Arc::new(chebyshev(n3, profile.0.depth())?);
    let set = dispersion::find_kernel_set(
        &profile.0,
        &params.0,
        &lattice.0,
        dispersion::DEFAULT_MEMBERSHIP_TOL,
        &solver,
        vgrid.nodes(),
    )
    .map_err(value_err)?;
    let amplitudes = KernelModeSet {
        modes: modes.into_iter().map(|(i, j, a)| KernelAmplitude { k: [i, j], a }).collect(),
        ..Default::default()
    };
    let setup = FieldSetup::new(profile.0.clone(), params.0.clone(), lattice.0, vgrid).map_err(value_err)?;
    let v = obstruction::theorem_verdict(&setup, &set, &amplitudes, &solver).map_err(value_err)?;
    serde_json::to_string(&v).map_err(value_err)
}

/// Runs a CLI subcommand on a JSON config; returns the result document as JSON.
#[pyfunction]
fn run_command(command: &str, config_json: &str, out_dir: PathBuf) -> PyResult<String> {
    let cmd = Command::from_name(command).ok_or_else(|| value_err(format!("unknown command {command:?}")))?;
    let cfg = RunConfig::from_json(config_json).map_err(value_err)?;
    let doc = Pipeline::new(cfg, out_dir).and_then(|p| p.run(cmd)).map_err(value_err)?;
    serde_json::to_string(&doc).map_err(value_err)
}

#[pymodule]
pub fn shearwave_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Profile>()?;
    m.add_class::<Lattice>()?;
    m.add_class::<WaveParams>()?;
    m.add_function(wrap_pyfunction!(solve_riccati, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate_sigma, m)?)?;
    m.add_function(wrap_pyfunction!(dispersion_residual, m)?)?;
    m.add_function(wrap_pyfunction!(kernel_set, m)?)?;
    m.add_function(wrap_pyfunction!(verdict, m)?)?;
    m.add_function(wrap_pyfunction!(run_command, m)?)?;
    m.add("FIELD_TOL", FIELD_TOL)?;
    Ok(())
}
