//! Python bindings: games, controller tuning, experiment configs and the studies.

use pyo3::exceptions::{PyIOError, PyIndexError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nesc_core::analysis;
use nesc_core::config::ExperimentConfig;
use nesc_core::controllers::{self, GrState, Oracle};
use nesc_core::experiments::{self, ValidationHooks};
use nesc_core::{Error, FixedDemandParams, Trajectory};

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Integration(msg) => PyRuntimeError::new_err(msg),
        Error::Io(io) => PyIOError::new_err(io.to_string()),
        Error::AgentIndex { .. } => PyIndexError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// A game given by its cost functions, with analytic pseudogradient where known.
#[pyclass(name = "Game", frozen)]
struct PyGame(nesc_core::GameSpec);

#[pymethods]
impl PyGame {
    /// `J1 = (u1 - u1*)(u2 - u2*)`, `J2 = -J1`.
    #[staticmethod]
    fn bilinear(u1_star: f64, u2_star: f64) -> Self {
        PyGame(nesc_core::GameSpec::bilinear(u1_star, u2_star))
    }

    /// Producers with capacities `U_i` plus a price-setting regulator for demand `U_d`.
    #[staticmethod]
    fn fixed_demand(capacities: Vec<f64>, demand: f64) -> PyResult<Self> {
        let g = nesc_core::GameSpec::fixed_demand(&FixedDemandParams { capacities, demand }).map_err(py_err)?;
        Ok(PyGame(g))
    }

    #[getter]
    fn name(&self) -> &str {
        self.0.name()
    }

    #[getter]
    fn n_agents(&self) -> usize {
        self.0.n_agents()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.dims().to_vec()
    }

    #[getter]
    fn known_ne(&self) -> Option<Vec<f64>> {
        self.0.known_ne().map(<[f64]>::to_vec)
    }

    /// Cost of agent `i` (0-based) at the joint action `u`.
    fn evaluate_cost(&self, i: usize, u: Vec<f64>) -> PyResult<f64> {
        self.0.evaluate_cost(i, &u).map_err(py_err)
    }

    fn pseudogradient(&self, u: Vec<f64>) -> PyResult<Vec<f64>> {
        self.0.pseudogradient(&u).map_err(py_err)
    }

    fn ne_residual(&self, u: Vec<f64>) -> PyResult<f64> {
        self.0.ne_residual(&u).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Game(name={:?}, dims={:?})", self.0.name(), self.0.dims())
    }
}

/// Per-agent gains and amplitudes and per-channel dither frequencies.
#[pyclass(name = "EscParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyEscParams(controllers::EscParams);

#[pymethods]
impl PyEscParams {
    /// `oracle` holds `"zeroth"` or `"first"` per agent and defaults to all zeroth order.
    #[new]
    #[pyo3(signature = (gamma, epsilon, amplitudes, kappa, oracle=None))]
    fn new(
        gamma: Vec<f64>,
        epsilon: Vec<f64>,
        amplitudes: Vec<f64>,
        kappa: Vec<f64>,
        oracle: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let oracle = match oracle {
            None => vec![Oracle::ZerothOrder; gamma.len()],
            Some(v) => v
                .iter()
                .map(|s| Oracle::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown oracle `{s}`"))))
                .collect::<PyResult<_>>()?,
        };
        Ok(PyEscParams(controllers::EscParams {
            gamma,
            epsilon,
            amplitudes,
            kappa,
            oracle,
        }))
    }

    /// Same gains for every agent.
    #[staticmethod]
    fn uniform(n_agents: usize, gamma: f64, epsilon: f64, amplitude: f64, kappa: Vec<f64>) -> Self {
        PyEscParams(controllers::EscParams::uniform(n_agents, gamma, epsilon, amplitude, kappa))
    }

    fn validate(&self, game: &PyGame) -> PyResult<()> {
        self.0.validate(&game.0).map_err(py_err)
    }

    #[getter]
    fn kappa(&self) -> Vec<f64> {
        self.0.kappa.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "EscParams(gamma={:?}, epsilon={:?}, amplitudes={:?}, kappa={:?})",
            self.0.gamma, self.0.epsilon, self.0.amplitudes, self.0.kappa
        )
    }
}

/// Experiment configuration in the `key = value` format of the `nesc` binary.
#[pyclass(name = "ExperimentConfig", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(ExperimentConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        ExperimentConfig::preset(name).map(PyConfig).map_err(py_err)
    }

    #[staticmethod]
    fn from_text(text: &str) -> PyResult<Self> {
        text.parse().map(PyConfig).map_err(py_err)
    }

    /// Override one dotted key, e.g. `cfg.set("solver.horizon", "100")`.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.0.set(key, value).map_err(py_err)
    }

    fn validate(&self) -> PyResult<()> {
        self.0.validate().map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    fn __repr__(&self) -> String {
        format!(
            "ExperimentConfig(game={:?}, controller={:?})",
            self.0.game.name(),
            self.0.controller.name()
        )
    }
}

fn trajectory_dict<'py>(py: Python<'py>, t: &Trajectory) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("state_names", &t.state_names)?;
    d.set_item("times", &t.times)?;
    d.set_item("states", &t.states)?;
    let channels = PyDict::new(py);
    for c in &t.channels {
        channels.set_item(&c.name, &c.values)?;
    }
    d.set_item("channels", channels)?;
    d.set_item("diverged_at", t.diverged_at)?;
    Ok(d)
}

/// Integrate a config; returns times, states, named channels and `diverged_at`.
#[pyfunction]
fn run_experiment<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Bound<'py, PyDict>> {
    let cfg = config.0.clone();
    let out = py.detach(move || experiments::run_experiment(&cfg)).map_err(py_err)?;
    let d = trajectory_dict(py, &out.trajectory)?;
    d.set_item("kappa", &out.params.kappa)?;
    d.set_item("manifest", out.manifest())?;
    Ok(d)
}

/// NESC and both baselines on the bilinear game; one summary dict per controller.
#[pyfunction]
fn run_bilinear<'py>(py: Python<'py>, config: &PyConfig) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.0.clone();
    let rep = py.detach(move || experiments::run_bilinear(&cfg)).map_err(py_err)?;
    rep.summaries
        .iter()
        .map(|s| {
            let d = PyDict::new(py);
            d.set_item("controller", s.controller.name())?;
            d.set_item("initial_residual", s.initial)?;
            d.set_item("final_residual", s.last)?;
            d.set_item("tail_min", s.tail_min)?;
            d.set_item("tail_max", s.tail_max)?;
            d.set_item("tail_mean", s.tail_mean)?;
            d.set_item("diverged_at", s.diverged_at)?;
            Ok(d)
        })
        .collect()
}

/// Price histograms of the noise study, one dict per noise level.
#[pyfunction]
#[pyo3(signature = (config, sigmas=None))]
fn run_noise_study<'py>(
    py: Python<'py>,
    config: &PyConfig,
    sigmas: Option<Vec<f64>>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let cfg = config.0.clone();
    let sigmas = sigmas.unwrap_or_else(|| cfg.study.sigmas.clone());
    let rep = py
        .detach(move || experiments::run_noise_study(&cfg, &sigmas))
        .map_err(py_err)?;
    rep.results
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("sigma", r.sigma)?;
            d.set_item("bin_edges", &r.histogram.bin_edges)?;
            d.set_item("counts", &r.histogram.counts)?;
            d.set_item("mean", r.pooled.mean)?;
            d.set_item("std", r.pooled.std)?;
            d.set_item("n_samples", r.pooled.n)?;
            Ok(d)
        })
        .collect()
}

/// The projected-flow instance on which the Lyapunov function increases.
#[pyfunction]
fn run_counterexample(py: Python<'_>) -> PyResult<Bound<'_, PyDict>> {
    let r = experiments::run_counterexample().map_err(py_err)?;
    let d = PyDict::new(py);
    d.set_item("z", &r.state.z)?;
    d.set_item("u", &r.state.u)?;
    d.set_item("z_dot", &r.velocity.z)?;
    d.set_item("u_dot", &r.velocity.u)?;
    d.set_item("rate", r.rate)?;
    d.set_item("control_rate", r.control_rate)?;
    Ok(d)
}

/// Invariant suite as `(check, passed, detail)` rows.
#[pyfunction]
#[pyo3(signature = (flip_estimate_sign=false, non_monotone_game=false))]
fn run_validate(
    py: Python<'_>,
    flip_estimate_sign: bool,
    non_monotone_game: bool,
) -> PyResult<Vec<(String, bool, String)>> {
    let hooks = ValidationHooks {
        flip_estimate_sign,
        non_monotone_game,
    };
    let rep = py.detach(move || experiments::run_validate(hooks)).map_err(py_err)?;
    Ok(rep
        .checks
        .into_iter()
        .map(|c| (c.name.to_string(), c.passed, c.detail))
        .collect())
}

/// Reduced golden-ratio vector field `(ż, u̇)`.
#[pyfunction]
fn gr_flow_rhs(z: Vec<f64>, u: Vec<f64>, game: &PyGame, params: &PyEscParams) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let d = controllers::gr_flow_rhs(&GrState::new(z, u), &game.0, &params.0).map_err(py_err)?;
    Ok((d.z, d.u))
}

/// One-shot dithered pseudogradient estimate at `u` with oscillator state `mu`.
#[pyfunction]
fn dither_estimate(u: Vec<f64>, mu: Vec<f64>, game: &PyGame, params: &PyEscParams) -> PyResult<Vec<f64>> {
    controllers::dither_estimate(&game.0, &u, &mu, &params.0, &mut controllers::CleanChannel).map_err(py_err)
}

#[pyfunction]
fn lyapunov_value(z: Vec<f64>, u: Vec<f64>, game: &PyGame, params: &PyEscParams) -> PyResult<f64> {
    analysis::lyapunov_value(&game.0, &params.0, &GrState::new(z, u)).map_err(py_err)
}

#[pyfunction]
fn lyapunov_rate(z: Vec<f64>, u: Vec<f64>, game: &PyGame, params: &PyEscParams) -> PyResult<f64> {
    analysis::lyapunov_rate(&game.0, &params.0, &GrState::new(z, u)).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (game, u, step=1e-5))]
fn finite_diff_pseudogradient(game: &PyGame, u: Vec<f64>, step: f64) -> PyResult<Vec<f64>> {
    analysis::finite_diff_pseudogradient(&game.0, &u, step).map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (game, u, params, quadrature_steps=256))]
fn dither_average_error(game: &PyGame, u: Vec<f64>, params: &PyEscParams, quadrature_steps: usize) -> PyResult<f64> {
    analysis::dither_average_error(&game.0, &u, &params.0, quadrature_steps).map_err(py_err)
}

/// Smallest sampled `⟨u - v, F(u) - F(v)⟩` over the box `[lower, upper]^m`.
#[pyfunction]
#[pyo3(signature = (game, n_pairs=1000, lower=-10.0, upper=10.0, seed=0))]
fn monotonicity_probe(game: &PyGame, n_pairs: usize, lower: f64, upper: f64, seed: u64) -> PyResult<(f64, bool)> {
    let r = analysis::monotonicity_probe(&game.0, n_pairs, lower, upper, seed).map_err(py_err)?;
    Ok((r.min_inner_product, r.is_monotone()))
}

#[pymodule]
pub fn nesc(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_class::<PyEscParams>()?;
    m.add_class::<PyConfig>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(run_bilinear, m)?)?;
    m.add_function(wrap_pyfunction!(run_noise_study, m)?)?;
    m.add_function(wrap_pyfunction!(run_counterexample, m)?)?;
    m.add_function(wrap_pyfunction!(run_validate, m)?)?;
    m.add_function(wrap_pyfunction!(gr_flow_rhs, m)?)?;
    m.add_function(wrap_pyfunction!(dither_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_value, m)?)?;
    m.add_function(wrap_pyfunction!(lyapunov_rate, m)?)?;
    m.add_function(wrap_pyfunction!(finite_diff_pseudogradient, m)?)?;
    m.add_function(wrap_pyfunction!(dither_average_error, m)?)?;
    m.add_function(wrap_pyfunction!(monotonicity_probe, m)?)?;
    Ok(())
}
