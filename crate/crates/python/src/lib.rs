//! Python bindings for `forster_core`.
//!
//! Input errors raise `ValueError`, failures during a computation `RuntimeError`.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use forster_core::analysis::{self, DataSeries};
use forster_core::dynamics::{self, PulseSegment, StateVector};
use forster_core::experiments;
use forster_core::pair::VdwMode;
use forster_core::stochastic::{self, NoiseModel, RunSeed};
use forster_core::{Error, PairBasis};

fn py_err(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for forster_core::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

/// Model constants: `c3` (MHz·µm³), `delta0` (MHz), `f_res` (mV/cm), `stark_exponent`.
#[pyclass(name = "PhysicalParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyParams(forster_core::PhysicalParams);

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (c3=2540.0, delta0=8.5, f_res=32.0, stark_exponent=4))]
    fn new(c3: f64, delta0: f64, f_res: f64, stark_exponent: u32) -> PyResult<Self> {
        forster_core::PhysicalParams::new(c3, delta0, f_res, stark_exponent)
            .py()
            .map(PyParams)
    }

    #[getter]
    fn c3(&self) -> f64 {
        self.0.c3
    }

    #[getter]
    fn delta0(&self) -> f64 {
        self.0.delta0
    }

    #[getter]
    fn f_res(&self) -> f64 {
        self.0.f_res
    }

    #[getter]
    fn stark_exponent(&self) -> u32 {
        self.0.stark_exponent
    }

    fn forster_defect(&self, field: f64) -> PyResult<f64> {
        self.0.forster_defect(field).py()
    }

    fn dipole_coupling(&self, r: f64) -> PyResult<f64> {
        self.0.dipole_coupling(r).py()
    }

    /// `(E_minus, E_plus, splitting, mixing_angle)`.
    fn pair_eigensplitting(&self, field: f64, r: f64) -> PyResult<(f64, f64, f64, f64)> {
        let e = self.0.pair_eigensplitting(field, r).py()?;
        Ok((e.eigenvalues[0], e.eigenvalues[1], e.splitting, e.mixing_angle))
    }

    #[pyo3(signature = (field, r, exact=false))]
    fn vdw_shift(&self, field: f64, r: f64, exact: bool) -> PyResult<f64> {
        let mode = if exact { VdwMode::Exact } else { VdwMode::Perturbative };
        self.0.vdw_shift(field, r, mode).py()
    }

    fn find_resonance_field(&self) -> PyResult<f64> {
        self.0.find_resonance_field().py()
    }

    /// 4×4 Hamiltonian in MHz, basis order `GG, DG_sym, DD, PF_sym`.
    fn hamiltonian(&self, delta: f64, omega: f64, field: f64, r: f64) -> PyResult<Vec<Vec<Complex64>>> {
        let h = self.0.build_hamiltonian(delta, omega, field, r).py()?;
        Ok((0..4)
            .map(|i| (0..4).map(|j| h.matrix()[(i, j)]).collect())
            .collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "PhysicalParams(c3={}, delta0={}, f_res={}, stark_exponent={})",
            self.0.c3, self.0.delta0, self.0.f_res, self.0.stark_exponent
        )
    }
}

fn params_or_default(params: Option<PyParams>) -> forster_core::PhysicalParams {
    params.map(|p| p.0).unwrap_or_default()
}

/// Basis labels in amplitude order.
#[pyfunction]
fn basis_labels() -> Vec<&'static str> {
    PairBasis::ALL.iter().map(|b| b.label()).collect()
}

/// Evolves four amplitudes through one constant segment.
#[pyfunction]
#[pyo3(signature = (amplitudes, omega, delta, field, duration, r, params=None))]
#[allow(clippy::too_many_arguments)]
fn propagate(
    amplitudes: [Complex64; 4],
    omega: f64,
    delta: f64,
    field: f64,
    duration: f64,
    r: f64,
    params: Option<PyParams>,
) -> PyResult<Vec<Complex64>> {
    let state = StateVector::from_amplitudes(amplitudes).py()?;
    let seg = PulseSegment::new(omega, delta, field, duration).py()?;
    let out = dynamics::propagate_segment(&state, &seg, r, &params_or_default(params)).py()?;
    Ok(out.amplitudes().to_vec())
}

#[pyfunction]
#[pyo3(signature = (interaction_time, r, params=None, omega=1.0, f_prep=64.0))]
fn pump_probe_pgg(
    interaction_time: f64,
    r: f64,
    params: Option<PyParams>,
    omega: f64,
    f_prep: f64,
) -> PyResult<f64> {
    dynamics::pump_probe_pgg(interaction_time, r, &params_or_default(params), omega, f_prep).py()
}

/// `(P_gg, P_gr + P_rg, P_rr)` after one π pulse at detuning `delta`.
#[pyfunction]
#[pyo3(signature = (delta, field, r, params=None, omega=1.0))]
fn spectrum_point(
    delta: f64,
    field: f64,
    r: f64,
    params: Option<PyParams>,
    omega: f64,
) -> PyResult<(f64, f64, f64)> {
    let p = dynamics::spectrum_point(delta, field, r, &params_or_default(params), omega).py()?;
    let [a, b, c] = p.as_array();
    Ok((a, b, c))
}

/// List of `(T, mean P_gg, standard error)`.
#[pyfunction]
#[pyo3(signature = (
    times, r, params=None, omega=1.0, f_prep=64.0,
    sigma_r=0.2, sigma_f=1.0, shots=100, projective=true, seed=0
))]
#[allow(clippy::too_many_arguments)]
fn monte_carlo_trace(
    py: Python<'_>,
    times: Vec<f64>,
    r: f64,
    params: Option<PyParams>,
    omega: f64,
    f_prep: f64,
    sigma_r: f64,
    sigma_f: f64,
    shots: u32,
    projective: bool,
    seed: u64,
) -> PyResult<Vec<(f64, f64, f64)>> {
    let noise = NoiseModel {
        sigma_r,
        sigma_f,
        shots,
        projective,
    };
    let params = params_or_default(params);
    let trace = py
        .detach(|| stochastic::monte_carlo_trace(&times, r, &params, omega, f_prep, &noise, RunSeed(seed)))
        .py()?;
    Ok(trace.iter().map(|p| (p.time, p.mean, p.std_err)).collect())
}

fn series(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<DataSeries> {
    if xs.len() != ys.len() {
        return Err(PyValueError::new_err(format!(
            "x and y lengths differ: {} vs {}",
            xs.len(),
            ys.len()
        )));
    }
    DataSeries::from_xy(&xs, &ys).py()
}

fn fit_dict<'py>(py: Python<'py>, fit: &analysis::FitResult) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("params", fit.params.clone())?;
    d.set_item("std_errors", fit.std_errors())?;
    d.set_item("covariance", fit.covariance.clone())?;
    d.set_item("cost", fit.cost)?;
    d.set_item("iterations", fit.iterations)?;
    d.set_item("converged", fit.converged)?;
    Ok(d)
}

#[pyfunction]
fn fit_double_gaussian<'py>(py: Python<'py>, xs: Vec<f64>, ys: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = analysis::fit_double_gaussian(&series(xs, ys)?).py()?;
    let d = fit_dict(py, &fit.fit)?;
    d.set_item("resolved", fit.is_resolved())?;
    d.set_item("splitting", fit.splitting)?;
    d.set_item("centers", fit.centers)?;
    d.set_item("widths", fit.widths)?;
    d.set_item("amplitudes", fit.amplitudes)?;
    d.set_item("offset", fit.offset)?;
    Ok(d)
}

#[pyfunction]
fn fit_damped_sine<'py>(py: Python<'py>, xs: Vec<f64>, ys: Vec<f64>) -> PyResult<Bound<'py, PyDict>> {
    let fit = analysis::fit_damped_sine(&series(xs, ys)?).py()?;
    let d = fit_dict(py, &fit.fit)?;
    d.set_item("frequency", fit.frequency)?;
    d.set_item("damping_time", fit.damping_time)?;
    d.set_item("contrast", fit.contrast)?;
    d.set_item("offset", fit.offset)?;
    d.set_item("phase", fit.phase)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (rs, ys, fix_exponent=None))]
fn fit_power_law<'py>(
    py: Python<'py>,
    rs: Vec<f64>,
    ys: Vec<f64>,
    fix_exponent: Option<f64>,
) -> PyResult<Bound<'py, PyDict>> {
    if rs.len() != ys.len() {
        return Err(PyValueError::new_err("R and y lengths differ"));
    }
    let pairs: Vec<(f64, f64)> = rs.into_iter().zip(ys).collect();
    let fit = analysis::fit_power_law(&pairs, fix_exponent).py()?;
    let d = fit_dict(py, &fit.fit)?;
    d.set_item("exponent", fit.exponent)?;
    d.set_item("exponent_err", fit.exponent_err)?;
    d.set_item("prefactor", fit.prefactor)?;
    d.set_item("c3", fit.c3)?;
    d.set_item("c3_err", fit.c3_err)?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (r=10.0, f_off=64.0, omega=1.0, params=None))]
fn blockade_report<'py>(
    py: Python<'py>,
    r: f64,
    f_off: f64,
    omega: f64,
    params: Option<PyParams>,
) -> PyResult<Bound<'py, PyDict>> {
    let b = experiments::blockade_report(r, f_off, &params_or_default(params), omega).py()?;
    let d = PyDict::new(py);
    d.set_item("u_off", b.u_off)?;
    d.set_item("u_on", b.u_on)?;
    d.set_item("enhancement", b.enhancement)?;
    d.set_item("radius_resonant", b.radius_resonant)?;
    d.set_item("radius_vdw", b.radius_vdw)?;
    d.set_item("radius_ratio", b.radius_ratio)?;
    Ok(d)
}

/// Runs the `forster` command line with `args` (without the program name);
/// returns its exit code.
#[pyfunction]
fn run_cli(py: Python<'_>, args: Vec<String>) -> i32 {
    let argv: Vec<String> = std::iter::once("forster".to_owned()).chain(args).collect();
    py.detach(|| forster_core::cli::run(argv))
}

#[pymodule]
fn forster(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyParams>()?;
    m.add_function(wrap_pyfunction!(basis_labels, m)?)?;
    m.add_function(wrap_pyfunction!(propagate, m)?)?;
    m.add_function(wrap_pyfunction!(pump_probe_pgg, m)?)?;
    m.add_function(wrap_pyfunction!(spectrum_point, m)?)?;
    m.add_function(wrap_pyfunction!(monte_carlo_trace, m)?)?;
    m.add_function(wrap_pyfunction!(fit_double_gaussian, m)?)?;
    m.add_function(wrap_pyfunction!(fit_damped_sine, m)?)?;
    m.add_function(wrap_pyfunction!(fit_power_law, m)?)?;
    m.add_function(wrap_pyfunction!(blockade_report, m)?)?;
    m.add_function(wrap_pyfunction!(run_cli, m)?)?;
    Ok(())
}
