//! Config-driven studies: the bilinear comparison, the fixed-demand market, its noise
//! study, the projected-flow counterexample and the invariant suite.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::{
    derive_seed, dither_average, finite_diff_pseudogradient, lyapunov_derivative_along, lyapunov_rate,
    lyapunov_value, monotonicity_probe, price_histogram, sample_stats, tail_samples, weighted_lyapunov_value,
    Histogram, NegatedChannel, NoiseConfig, NoisyChannel, SampleStats,
};
use crate::config::{ExperimentConfig, GameChoice};
use crate::controllers::{
    projected_gr_rhs, CleanChannel, ConstraintSet, ControllerKind, ControllerSystem, CostChannel, EscParams,
    GrState,
};
use crate::error::{Error, Result};
use crate::games::{norm, FixedDemandParams, GameSpec};
use crate::sim::{integrate, renormalize_pairs, Method, Observer, SolverConfig, Trajectory};

/// Channel names recorded alongside the state.
pub const RESIDUAL: &str = "ne_residual";
pub const PRICE: &str = "price";
pub const MISMATCH: &str = "mismatch";
pub const LYAPUNOV: &str = "lyapunov";

/// One integrated run with the tuning it actually used.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub params: EscParams,
    pub trajectory: Trajectory,
}

impl RunOutput {
    /// Config text followed by the resolved frequencies.
    pub fn manifest(&self) -> String {
        manifest(&self.config, &self.params)
    }
}

pub fn manifest(config: &ExperimentConfig, params: &EscParams) -> String {
    let kappa: Vec<String> = params.kappa.iter().map(|k| format!("{k:?}")).collect();
    format!(
        "{}resolved.kappa = {}\nresolved.controller_state = {}\n",
        config.to_text(),
        kappa.join(", "),
        config.controller.state_names(params.kappa.len()).join(", ")
    )
}

/// Integrate the configured controller with the configured measurement noise.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunOutput> {
    config.validate()?;
    let channel = NoisyChannel::new(config.noise)?;
    run_with_channel(config, channel)
}

/// Same as [`run_experiment`] with a caller-supplied measurement channel.
pub fn run_with_channel<C: CostChannel>(config: &ExperimentConfig, channel: C) -> Result<RunOutput> {
    let game = config.game.build()?;
    let params = config.esc_params(&game)?;
    let kind = config.controller;
    let mut system = ControllerSystem::new(kind, &game, &params, channel, config.constraint.clone())?;
    let x0 = config.initial_conditions()?.assemble(kind)?;
    let u_range = system.layout().u.clone();

    let mut observers = Vec::new();
    if game.has_pseudogradient() {
        let (g, r) = (&game, u_range.clone());
        observers.push(Observer::new(RESIDUAL, move |x: &[f64]| {
            g.ne_residual(&x[r.clone()]).unwrap_or(f64::NAN)
        }));
    }
    if let GameChoice::FixedDemand(p) = &config.game {
        let n = p.capacities.len();
        let demand = p.demand;
        let r = u_range.clone();
        observers.push(Observer::new(PRICE, move |x: &[f64]| x[r.start + n]));
        let r = u_range.clone();
        observers.push(Observer::new(MISMATCH, move |x: &[f64]| {
            x[r.start..r.start + n].iter().sum::<f64>() - demand
        }));
    }
    let names = kind.state_names(game.dim());
    let trajectory = integrate(&mut system, &x0, &config.solver, names, &observers)?;
    Ok(RunOutput {
        config: config.clone(),
        params,
        trajectory,
    })
}

/// Residual statistics of one run over `[T/2, T]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ResidualSummary {
    pub controller: ControllerKind,
    pub initial: f64,
    pub last: f64,
    pub tail_min: f64,
    pub tail_max: f64,
    pub tail_mean: f64,
    pub diverged_at: Option<f64>,
}

impl ResidualSummary {
    pub fn from_trajectory(controller: ControllerKind, traj: &Trajectory, horizon: f64) -> Result<Self> {
        let values = traj
            .channel(RESIDUAL)
            .ok_or_else(|| Error::invalid("run has no residual channel"))?;
        let tail = traj
            .window(RESIDUAL, 0.5 * horizon, horizon)
            .unwrap_or_default();
        let (tail_min, tail_max, tail_mean) = if traj.diverged() || tail.is_empty() {
            // the residual left every bound before the tail window ended
            (f64::INFINITY, f64::INFINITY, f64::INFINITY)
        } else {
            let min = tail.iter().copied().fold(f64::INFINITY, f64::min);
            let max = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (min, max, tail.iter().sum::<f64>() / tail.len() as f64)
        };
        Ok(Self {
            controller,
            initial: values[0],
            last: *values.last().expect("trajectories record t = 0"),
            tail_min,
            tail_max,
            tail_mean,
            diverged_at: traj.diverged_at,
        })
    }
}

impl fmt::Display for ResidualSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} initial_residual={:.6} final_residual={:.6} tail_min={:.6} tail_max={:.6} tail_mean={:.6}",
            self.controller, self.initial, self.last, self.tail_min, self.tail_max, self.tail_mean
        )?;
        match self.diverged_at {
            Some(t) => write!(f, " diverged_at={t}"),
            None => write!(f, " diverged=no"),
        }
    }
}

#[derive(Clone, Debug)]
pub struct BilinearReport {
    pub runs: Vec<RunOutput>,
    pub summaries: Vec<ResidualSummary>,
}

impl BilinearReport {
    pub fn summary(&self, kind: ControllerKind) -> Option<&ResidualSummary> {
        self.summaries.iter().find(|s| s.controller == kind)
    }

    pub fn run(&self, kind: ControllerKind) -> Option<&RunOutput> {
        self.runs.iter().find(|r| r.config.controller == kind)
    }
}

/// Controllers compared on the bilinear game.
pub const BILINEAR_CONTROLLERS: [ControllerKind; 3] = [
    ControllerKind::Nesc,
    ControllerKind::BaselineUnfiltered,
    ControllerKind::BaselineFiltered,
];

/// NESC and both baselines from the same config; a diverging run is kept and flagged.
pub fn run_bilinear(config: &ExperimentConfig) -> Result<BilinearReport> {
    let mut runs = Vec::new();
    let mut summaries = Vec::new();
    for kind in BILINEAR_CONTROLLERS {
        let mut cfg = config.clone();
        cfg.controller = kind;
        let out = run_experiment(&cfg)?;
        summaries.push(ResidualSummary::from_trajectory(kind, &out.trajectory, cfg.solver.horizon)?);
        runs.push(out);
    }
    Ok(BilinearReport { runs, summaries })
}

#[derive(Clone, Debug)]
pub struct FixedDemandReport {
    pub output: RunOutput,
    pub lambda_star: f64,
    pub initial_price: f64,
    pub final_price: f64,
    pub final_mismatch: f64,
    pub tail_price_min: f64,
    pub tail_price_max: f64,
    pub tail_price_mean: f64,
    /// Largest `|Σu_i - U_d|` over the tail window.
    pub tail_mismatch_max: f64,
}

impl fmt::Display for FixedDemandReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lambda_star {:.6}", self.lambda_star)?;
        writeln!(f, "initial_price {:.6}", self.initial_price)?;
        writeln!(f, "final_price {:.6}", self.final_price)?;
        writeln!(f, "final_mismatch {:.6}", self.final_mismatch)?;
        writeln!(
            f,
            "tail_price min={:.6} max={:.6} mean={:.6}",
            self.tail_price_min, self.tail_price_max, self.tail_price_mean
        )?;
        write!(f, "tail_mismatch_max_abs {:.6}", self.tail_mismatch_max)
    }
}

fn market(config: &ExperimentConfig) -> Result<&FixedDemandParams> {
    match &config.game {
        GameChoice::FixedDemand(p) => Ok(p),
        _ => Err(Error::config("this study needs `game = fixed-demand`")),
    }
}

/// The market study at noise level `sigma`; the tail window is `study.tail` seconds.
pub fn run_fixed_demand(config: &ExperimentConfig, sigma: f64) -> Result<FixedDemandReport> {
    let p = market(config)?;
    let mut cfg = config.clone();
    cfg.noise.sigma = sigma;
    let output = run_experiment(&cfg)?;
    let traj = &output.trajectory;
    if let Some(t) = traj.diverged_at {
        return Err(Error::Integration(format!("fixed-demand run diverged at t = {t}")));
    }
    let horizon = cfg.solver.horizon;
    let from = horizon - cfg.study.tail;
    let price = traj.window(PRICE, from, horizon).expect("price channel recorded");
    let mismatch = traj.window(MISMATCH, from, horizon).expect("mismatch channel recorded");
    let all_price = traj.channel(PRICE).expect("price channel recorded");
    Ok(FixedDemandReport {
        lambda_star: p.equilibrium_price(),
        initial_price: all_price[0],
        final_price: *all_price.last().expect("non-empty"),
        final_mismatch: *traj.channel(MISMATCH).and_then(|m| m.last()).expect("non-empty"),
        tail_price_min: price.iter().copied().fold(f64::INFINITY, f64::min),
        tail_price_max: price.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        tail_price_mean: price.iter().sum::<f64>() / price.len() as f64,
        tail_mismatch_max: mismatch.iter().map(|v| v.abs()).fold(0.0, f64::max),
        output,
    })
}

/// Outcome of the runs at one noise level.
#[derive(Clone, Debug)]
pub struct SigmaResult {
    pub sigma: f64,
    pub histogram: Histogram,
    /// All tail samples pooled across runs.
    pub pooled: SampleStats,
    /// Per-run tail means; the runs are the independent replicates.
    pub run_means: SampleStats,
}

impl SigmaResult {
    /// `|mean - target|` against `3 std / √n` with `n` independent runs.
    pub fn mean_consistent(&self, target: f64) -> bool {
        let n = self.run_means.n as f64;
        (self.pooled.mean - target).abs() <= 3.0 * self.pooled.std / n.sqrt()
    }

    /// The same bound with `n` the pooled sample count; samples within a run are
    /// strongly autocorrelated, so this is informational only.
    pub fn mean_consistent_pooled_n(&self, target: f64) -> bool {
        let n = self.pooled.n as f64;
        (self.pooled.mean - target).abs() <= 3.0 * self.pooled.std / n.sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct NoiseStudyReport {
    pub lambda_star: f64,
    pub runs_per_sigma: usize,
    pub results: Vec<SigmaResult>,
}

impl fmt::Display for NoiseStudyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lambda_star {:.6} runs_per_sigma {}", self.lambda_star, self.runs_per_sigma)?;
        for r in &self.results {
            writeln!(
                f,
                "sigma={} samples={} pooled_mean={:.6} pooled_std={:.6} run_mean_std={:.6} occupied_bins={}",
                r.sigma,
                r.histogram.total(),
                r.pooled.mean,
                r.pooled.std,
                r.run_means.std,
                r.histogram.occupied_bins()
            )?;
        }
        Ok(())
    }
}

/// `study.runs` fixed-demand runs per noise level, in parallel, each with a seed
/// derived from `noise.seed` and the run index.
pub fn run_noise_study(config: &ExperimentConfig, sigmas: &[f64]) -> Result<NoiseStudyReport> {
    let p = market(config)?;
    let study = &config.study;
    if sigmas.is_empty() {
        return Err(Error::config("noise study needs at least one sigma"));
    }
    let mut results = Vec::new();
    for (si, &sigma) in sigmas.iter().enumerate() {
        let runs: Vec<Vec<f64>> = (0..study.runs)
            .into_par_iter()
            .map(|r| {
                let mut cfg = config.clone();
                cfg.noise = NoiseConfig {
                    sigma,
                    seed: derive_seed(config.noise.seed, (si * study.runs + r) as u64),
                };
                let out = run_experiment(&cfg)?;
                if let Some(t) = out.trajectory.diverged_at {
                    return Err(Error::Integration(format!("noise run {r} at sigma {sigma} diverged at t = {t}")));
                }
                tail_samples(&out.trajectory, PRICE, study.tail, study.sample_period)
            })
            .collect::<Result<_>>()?;
        let pooled: Vec<f64> = runs.iter().flatten().copied().collect();
        let means: Vec<f64> = runs
            .iter()
            .map(|r| r.iter().sum::<f64>() / r.len() as f64)
            .collect();
        results.push(SigmaResult {
            sigma,
            histogram: Histogram::from_samples(&pooled, study.bin_width)?,
            pooled: sample_stats(&pooled)?,
            run_means: sample_stats(&means)?,
        });
    }
    Ok(NoiseStudyReport {
        lambda_star: p.equilibrium_price(),
        runs_per_sigma: study.runs,
        results,
    })
}

/// Pool the price tails of finished runs into one histogram.
pub fn histogram_of_runs(runs: &[RunOutput], config: &ExperimentConfig) -> Result<Histogram> {
    let trajs: Vec<Trajectory> = runs.iter().map(|r| r.trajectory.clone()).collect();
    price_histogram(&trajs, PRICE, config.study.tail, config.study.sample_period, config.study.bin_width)
}

/// A projected golden-ratio instance on which the Lyapunov function increases.
#[derive(Clone, Debug)]
pub struct CounterexampleReport {
    pub game: GameSpec,
    pub set: ConstraintSet,
    pub state: GrState,
    pub velocity: GrState,
    pub rate: f64,
    /// Same state with `Ω = R²`.
    pub control_rate: f64,
    /// `‖u(T) - u*‖` of the unconstrained flow from the same state.
    pub control_final_error: f64,
    /// Rate at `z = u = u*`.
    pub equilibrium_rate: f64,
    /// Constrained flow from the constructed state with a `lyapunov` channel.
    pub trajectory: Trajectory,
}

impl fmt::Display for CounterexampleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "field F(u) = (u2, -u1), u* = (0, 0)")?;
        if let ConstraintSet::Halfspace { normal, offset } = &self.set {
            writeln!(f, "set <({}, {}), u> <= {}", normal[0], normal[1], offset)?;
        }
        writeln!(f, "state z = {:?} u = {:?}", self.state.z, self.state.u)?;
        writeln!(f, "velocity z' = {:?} u' = {:?}", self.velocity.z, self.velocity.u)?;
        writeln!(f, "lyapunov_rate {:.6}", self.rate)?;
        writeln!(f, "control_rate_unconstrained {:.6}", self.control_rate)?;
        writeln!(f, "control_final_error {:.3e}", self.control_final_error)?;
        write!(f, "equilibrium_rate {:.6}", self.equilibrium_rate)
    }
}

/// `F(u) = (u2, -u1)` restricted to `2 u1 + u2 >= 0`, started at `u = z = (0, 1)`.
///
/// The step `z - F(u) = (-1, 1)` leaves the set and projects to `(-0.6, 1.2)`, so
/// `u'` gains a component along `u - u*` and `V' = 0.2 > 0`.
pub fn run_counterexample() -> Result<CounterexampleReport> {
    let game = GameSpec::bilinear(0.0, 0.0);
    let unit = EscParams::uniform(2, 1.0, 1.0, 0.1, vec![0.3, 0.7]);
    let set = ConstraintSet::Halfspace {
        normal: vec![-2.0, -1.0],
        offset: 0.0,
    };
    let state = GrState::new(vec![0.0, 1.0], vec![0.0, 1.0]);
    if !set.contains(&state.u, 0.0) {
        return Err(Error::invalid("constructed state must lie in the set"));
    }
    let velocity = projected_gr_rhs(&state, &game, &set)?;
    let rate = lyapunov_derivative_along(&game, &unit, &state, &velocity)?;
    if !(rate > 0.0) {
        return Err(Error::Integration(format!(
            "constructed instance gives a non-positive rate {rate}; the instance must be re-derived"
        )));
    }
    let whole = ConstraintSet::unconstrained(2);
    let control_rate = lyapunov_derivative_along(&game, &unit, &state, &projected_gr_rhs(&state, &game, &whole)?)?;
    let origin = GrState::new(vec![0.0; 2], vec![0.0; 2]);
    let equilibrium_rate =
        lyapunov_derivative_along(&game, &unit, &origin, &projected_gr_rhs(&origin, &game, &set)?)?;

    let solver = SolverConfig {
        method: Method::Rk4,
        step: 1e-2,
        horizon: 100.0,
        record_every: 10,
        seed: 0,
        renormalize: false,
    };
    let flow = |s: ConstraintSet| ControllerSystem::new(ControllerKind::ProjectedGr, &game, &unit, CleanChannel, Some(s));
    let names = ControllerKind::ProjectedGr.state_names(2);
    let x0 = [state.z.clone(), state.u.clone()].concat();
    let v_obs = [Observer::new(LYAPUNOV, |x: &[f64]| {
        weighted_lyapunov_value(&GrState::new(x[..2].to_vec(), x[2..].to_vec()), &[0.0, 0.0], &[1.0, 1.0])
    })];
    let trajectory = integrate(&mut flow(set.clone())?, &x0, &solver, names.clone(), &v_obs)?;
    let control = integrate(&mut flow(whole)?, &x0, &solver, names, &[])?;
    let control_final_error = norm(&control.final_state()[2..]);
    Ok(CounterexampleReport {
        game,
        set,
        state,
        velocity,
        rate,
        control_rate,
        control_final_error,
        equilibrium_rate,
        trajectory,
    })
}

/// Fault injection for the invariant suite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ValidationHooks {
    /// Negate every cost measurement seen by the dither-average checks.
    pub flip_estimate_sign: bool,
    /// Probe an anti-monotone field in place of the market game.
    pub non_monotone_game: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

impl fmt::Display for ValidationReport {
    /// Tab-separated `check status detail` rows.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "check\tstatus\tdetail")?;
        for c in &self.checks {
            writeln!(f, "{}\t{}\t{}", c.name, if c.passed { "pass" } else { "fail" }, c.detail)?;
        }
        Ok(())
    }
}

fn preset_market() -> GameSpec {
    GameSpec::fixed_demand(&FixedDemandParams {
        capacities: vec![172.0, 47.0, 66.0],
        demand: 350.0,
    })
    .expect("preset market is valid")
}

fn anti_monotone() -> GameSpec {
    GameSpec::new("anti-monotone", vec![1, 1], |i, u: &[f64]| -0.5 * u[i] * u[i])
        .and_then(|g| {
            g.with_pseudogradient(|u, out| {
                out[0] = -u[0];
                out[1] = -u[1];
            })
        })
        .expect("anti-monotone field is valid")
}

/// Largest relative gap between central differences and `F` at random points.
pub fn gradient_check(game: &GameSpec, n_points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n_points {
        let u: Vec<f64> = (0..game.dim()).map(|_| rng.random_range(-100.0..100.0)).collect();
        let fd = finite_diff_pseudogradient(game, &u, 1e-4)?;
        let f = game.pseudogradient(&u)?;
        let diff: Vec<f64> = fd.iter().zip(&f).map(|(a, b)| a - b).collect();
        worst = worst.max(norm(&diff) / norm(&f).max(1.0));
    }
    Ok(worst)
}

/// Error of the dither average against `F` for `J = u²` with amplitude `a`.
fn power_average_error<C: CostChannel>(power: i32, a: f64, channel: &mut C) -> Result<f64> {
    let pf = power as f64;
    let game = GameSpec::new(format!("u^{power}"), vec![1], move |_, u: &[f64]| u[0].powi(power))?
        .with_pseudogradient(move |u, out| out[0] = pf * u[0].powi(power - 1))?;
    let params = EscParams::uniform(1, 1.0, 1.0, a, vec![0.7]);
    let avg = dither_average(&game, &[1.0], &params, 64, channel)?;
    Ok((avg[0] - pf).abs())
}

/// `V` along the reduced flow on the bilinear game from `((0,0),(5,5))`; returns the
/// largest step-to-step increase and the final distance to `u*`.
pub fn reduced_flow_check(horizon: f64, step: f64) -> Result<(f64, f64)> {
    let game = GameSpec::bilinear(2.0, -3.0);
    let params = EscParams::uniform(2, 0.1, 1.0, 0.1, vec![0.3, 0.7]);
    let mut system = ControllerSystem::new(ControllerKind::GrFlow, &game, &params, CleanChannel, None)?;
    let solver = SolverConfig {
        method: Method::Rk4,
        step,
        horizon,
        record_every: 1,
        seed: 0,
        renormalize: false,
    };
    let v = [Observer::new(LYAPUNOV, |x: &[f64]| {
        lyapunov_value(&game, &params, &GrState::new(x[..2].to_vec(), x[2..].to_vec())).unwrap_or(f64::NAN)
    })];
    let traj = integrate(&mut system, &[0.0, 0.0, 5.0, 5.0], &solver, ControllerKind::GrFlow.state_names(2), &v)?;
    let values = traj.channel(LYAPUNOV).expect("recorded");
    let max_increase = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    let end = traj.final_state();
    let err = norm(&[end[2] - 2.0, end[3] + 3.0]);
    Ok((max_increase, err))
}

/// Largest gap between the closed-form rate and a central difference quotient of `V`
/// along a reduced-flow trajectory of the market game.
fn lyapunov_quotient_check() -> Result<f64> {
    let game = preset_market();
    let params = EscParams::uniform(4, 0.02, 1.0 / 3.0, 20.0, vec![0.1778, 0.1238, 0.1824, 0.15]);
    let h = 1e-3;
    let mut system = ControllerSystem::new(ControllerKind::GrFlow, &game, &params, CleanChannel, None)?;
    let solver = SolverConfig {
        method: Method::Rk4,
        step: h,
        horizon: 2.0,
        record_every: 1,
        seed: 0,
        renormalize: false,
    };
    let x0 = [vec![100.0, 20.0, 30.0, 10.0], vec![150.0, 40.0, 80.0, 30.0]].concat();
    let traj = integrate(&mut system, &x0, &solver, ControllerKind::GrFlow.state_names(4), &[])?;
    let state = |k: usize| GrState::new(traj.states[k][..4].to_vec(), traj.states[k][4..].to_vec());
    let mut worst: f64 = 0.0;
    for k in (1..traj.len() - 1).step_by(100) {
        let quotient = (lyapunov_value(&game, &params, &state(k + 1))? - lyapunov_value(&game, &params, &state(k - 1))?)
            / (2.0 * h);
        let rate = lyapunov_rate(&game, &params, &state(k))?;
        worst = worst.max((quotient - rate).abs() / rate.abs().max(1.0));
    }
    Ok(worst)
}

/// Error ratio of RK4 on a damped rotation when the step is halved.
pub fn rk4_order_ratio() -> Result<f64> {
    let exact = |t: f64| {
        let d = (-0.5 * t).exp();
        [d * (3.0 * t).cos(), -d * (3.0 * t).sin()]
    };
    let err = |h: f64| -> Result<f64> {
        let mut rhs = |x: &[f64], dx: &mut [f64]| {
            dx[0] = -0.5 * x[0] + 3.0 * x[1];
            dx[1] = -3.0 * x[0] - 0.5 * x[1];
        };
        let solver = SolverConfig {
            method: Method::Rk4,
            step: h,
            horizon: 2.0,
            record_every: 1_000_000,
            seed: 0,
            renormalize: false,
        };
        let traj = integrate(&mut rhs, &[1.0, 0.0], &solver, vec!["x".into(), "y".into()], &[])?;
        let e = exact(2.0);
        let end = traj.final_state();
        Ok(norm(&[end[0] - e[0], end[1] - e[1]]))
    };
    Ok(err(0.02)? / err(0.01)?)
}

/// Largest `|‖μ_j‖ - 1|` after `steps` RK4 steps of the oscillator bank.
pub fn oscillator_drift(kappa: &[f64], step: f64, steps: usize, renormalize: bool) -> Result<f64> {
    let m = kappa.len();
    let mut rhs = |x: &[f64], dx: &mut [f64]| crate::controllers::oscillator_into(kappa, x, dx);
    struct Bank<F>(F);
    impl<F: FnMut(&[f64], &mut [f64])> crate::sim::OdeSystem for Bank<F> {
        fn rhs(&mut self, x: &[f64], dx: &mut [f64]) {
            (self.0)(x, dx)
        }
        fn renormalize(&mut self, x: &mut [f64]) -> Result<()> {
            renormalize_pairs(x)
        }
    }
    let solver = SolverConfig {
        method: Method::Rk4,
        step,
        horizon: step * steps as f64,
        record_every: steps,
        seed: 0,
        renormalize,
    };
    let x0: Vec<f64> = (0..m).flat_map(|j| [(0.3 * j as f64).cos(), (0.3 * j as f64).sin()]).collect();
    let names = (0..2 * m).map(|k| format!("mu{k}")).collect();
    let traj = integrate(&mut Bank(&mut rhs), &x0, &solver, names, &[])?;
    Ok(traj
        .states
        .iter()
        .flat_map(|s| s.chunks(2).map(|p| (p[0].hypot(p[1]) - 1.0).abs()))
        .fold(0.0, f64::max))
}

/// The invariant suite behind `nesc validate`.
pub fn run_validate(hooks: ValidationHooks) -> Result<ValidationReport> {
    let mut checks = Vec::new();
    let mut push = |name: &'static str, passed: bool, detail: String| checks.push(Check { name, passed, detail });

    let bilinear = GameSpec::bilinear(2.0, -3.0);
    let market = preset_market();
    for (name, game, seed) in [
        ("gradient-bilinear", &bilinear, 11),
        ("gradient-fixed-demand", &market, 12),
    ] {
        let worst = gradient_check(game, 100, seed)?;
        push(name, worst <= 1e-6, format!("max_rel_error={worst:.3e} tol=1e-6"));
    }

    let r = monotonicity_probe(&bilinear, 1000, -10.0, 10.0, 21)?;
    push(
        "monotone-bilinear",
        r.is_monotone() && r.min_inner_product.abs() <= 1e-9,
        format!("min_inner_product={:.3e}", r.min_inner_product),
    );
    let probed = if hooks.non_monotone_game { anti_monotone() } else { market.clone() };
    let r = monotonicity_probe(&probed, 1000, -10.0, 10.0, 22)?;
    push(
        "monotone-fixed-demand",
        r.is_monotone(),
        format!("game={} min_inner_product={:.3e}", probed.name(), r.min_inner_product),
    );

    let (quad, q1, q2) = if hooks.flip_estimate_sign {
        let mut ch = NegatedChannel(CleanChannel);
        (
            power_average_error(2, 0.5, &mut ch)?,
            power_average_error(4, 0.1, &mut ch)?,
            power_average_error(4, 0.05, &mut ch)?,
        )
    } else {
        let mut ch = CleanChannel;
        (
            power_average_error(2, 0.5, &mut ch)?,
            power_average_error(4, 0.1, &mut ch)?,
            power_average_error(4, 0.05, &mut ch)?,
        )
    };
    push("dither-average-quadratic", quad <= 1e-8, format!("error={quad:.3e} tol=1e-8"));
    let ratio = q1 / q2;
    push(
        "dither-average-quartic-ratio",
        (3.5..=4.5).contains(&ratio),
        format!("ratio={ratio:.4} range=[3.5,4.5]"),
    );

    let (increase, err) = reduced_flow_check(500.0, 1e-2)?;
    push(
        "lyapunov-decrease",
        increase <= 1e-9 && err <= 1e-3,
        format!("max_increase={increase:.3e} final_error={err:.3e}"),
    );
    let gap = lyapunov_quotient_check()?;
    push("lyapunov-rate-quotient", gap <= 1e-5, format!("max_gap={gap:.3e} tol=1e-5"));

    let ratio = rk4_order_ratio()?;
    push("rk4-order", (12.0..=20.0).contains(&ratio), format!("halving_ratio={ratio:.3} expect=16"));

    let bilinear_cfg = ExperimentConfig::bilinear();
    let kappa = bilinear_cfg.esc_params(&bilinear)?.kappa;
    let drift = oscillator_drift(&kappa, 1e-2, 100_000, true)?;
    push("oscillator-norm", drift <= 1e-6, format!("max_drift={drift:.3e} steps=100000 tol=1e-6"));

    let report = run_counterexample()?;
    push(
        "counterexample",
        report.rate > 0.0 && report.control_rate <= 1e-12,
        format!("rate={:.4} control_rate={:.2e}", report.rate, report.control_rate),
    );

    Ok(ValidationReport { checks })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_bilinear() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::bilinear();
        cfg.solver.horizon = 20.0;
        cfg
    }

    #[test]
    fn runs_are_reproducible() {
        let cfg = short_bilinear();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.trajectory.write_csv(&mut buf_a).unwrap();
        b.trajectory.write_csv(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn noisy_runs_depend_on_seed() {
        let mut cfg = ExperimentConfig::fixed_demand();
        cfg.solver.horizon = 5.0;
        cfg.noise.sigma = 3.0;
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.trajectory, run_experiment(&cfg).unwrap().trajectory);
        cfg.noise.seed = 99;
        assert_ne!(a.trajectory, run_experiment(&cfg).unwrap().trajectory);
    }

    #[test]
    fn residual_channel_starts_at_initial_residual() {
        let out = run_experiment(&short_bilinear()).unwrap();
        let r = out.trajectory.channel(RESIDUAL).unwrap();
        assert!((r[0] - 13f64.sqrt()).abs() < 1e-12);
        assert!(out.manifest().contains("resolved.kappa = "));
    }

    #[test]
    fn equilibrium_start_without_dither_stays_put() {
        let mut cfg = short_bilinear();
        cfg.solver.horizon = 200.0;
        cfg.esc.amplitude = vec![1e-6];
        cfg.init_z = crate::config::VectorSpec::List(vec![2.0, -3.0]);
        cfg.init_u = crate::config::VectorSpec::List(vec![2.0, -3.0]);
        let out = run_experiment(&cfg).unwrap();
        let worst = out.trajectory.channel(RESIDUAL).unwrap().iter().copied().fold(0.0, f64::max);
        assert!(worst <= 1e-3, "{worst}");
    }

    #[test]
    fn market_starts_at_zero_price() {
        let mut cfg = ExperimentConfig::fixed_demand();
        cfg.solver.horizon = 300.0;
        cfg.study.tail = 50.0;
        let r = run_fixed_demand(&cfg, 0.0).unwrap();
        assert_eq!(r.initial_price, 0.0);
        assert!((r.lambda_star - 130.0 / 3.0).abs() < 1e-12);
        assert!(run_fixed_demand(&short_bilinear(), 0.0).is_err());
    }

    #[test]
    fn counterexample_instance() {
        let r = run_counterexample().unwrap();
        assert!((r.rate - 0.2).abs() < 1e-12, "{}", r.rate);
        assert!((r.velocity.u[0] + 0.6).abs() < 1e-12 && (r.velocity.u[1] - 0.2).abs() < 1e-12);
        assert_eq!(r.control_rate, 0.0);
        assert_eq!(r.equilibrium_rate, 0.0);
        assert!(r.control_final_error < 1e-3, "{}", r.control_final_error);
        let v = r.trajectory.channel(LYAPUNOV).unwrap();
        assert!(v[1] > v[0]);
        assert!(r.to_string().contains("lyapunov_rate 0.2"));
    }

    #[test]
    fn small_noise_study() {
        let mut cfg = ExperimentConfig::fixed_demand();
        cfg.solver.horizon = 60.0;
        cfg.study.runs = 3;
        cfg.study.tail = 20.0;
        let rep = run_noise_study(&cfg, &[0.0, 5.0]).unwrap();
        assert_eq!(rep.results.len(), 2);
        for r in &rep.results {
            assert_eq!(r.histogram.total(), 3 * 21);
        }
        // σ = 0 runs are identical
        assert_eq!(rep.results[0].run_means.std, 0.0);
        let again = run_noise_study(&cfg, &[0.0, 5.0]).unwrap();
        assert_eq!(again.results[1].histogram, rep.results[1].histogram);
    }
}
