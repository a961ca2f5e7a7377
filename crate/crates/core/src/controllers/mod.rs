//! Right-hand sides of the seeking dynamics.
//!
//! The full payoff-feedback controller flows `(z, u, ξ, μ)`: `z` is the auxiliary
//! golden-ratio state, `u` the nominal action, `ξ` a first-order filter of the
//! dithered pseudogradient estimate and `μ` a bank of unit-circle oscillators that
//! generate the dither. Its companions (reduced flow, nominal average, boundary layer,
//! the two classic baselines and the projected flow) share the same kernels.

mod params;
mod projection;
mod system;

use std::f64::consts::TAU;

pub use params::{draw_kappa, EscParams, Oracle, KAPPA_DISTINCT_TOL, KAPPA_DRAW_GAP};
pub(crate) use params::ChannelGains;
pub use projection::ConstraintSet;
pub use system::{ControllerKind, ControllerSystem, InitialConditions, StateLayout};

use crate::error::{check_len, Error, Result};
use crate::games::GameSpec;

/// Source of cost measurements for the zeroth-order agents.
pub trait CostChannel {
    fn measure(&mut self, game: &GameSpec, agent: usize, u: &[f64]) -> f64;
}

/// Exact, noise-free cost evaluation.
#[derive(Clone, Copy, Debug, Default)]
pub struct CleanChannel;

impl CostChannel for CleanChannel {
    #[inline]
    fn measure(&mut self, game: &GameSpec, agent: usize, u: &[f64]) -> f64 {
        game.cost_unchecked(agent, u)
    }
}

impl<C: CostChannel + ?Sized> CostChannel for &mut C {
    #[inline]
    fn measure(&mut self, game: &GameSpec, agent: usize, u: &[f64]) -> f64 {
        (**self).measure(game, agent, u)
    }
}

/// State of the full controller.
#[derive(Clone, Debug, PartialEq)]
pub struct EscState {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    /// `m` oscillator pairs stored as `(μ_j,1, μ_j,2)`.
    pub mu: Vec<f64>,
}

impl EscState {
    /// Zero `(z, u, ξ)` with every oscillator at `(1, 0)`.
    pub fn initial(m: usize) -> Self {
        Self {
            z: vec![0.0; m],
            u: vec![0.0; m],
            xi: vec![0.0; m],
            mu: (0..m).flat_map(|_| [1.0, 0.0]).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    fn check(&self, m: usize) -> Result<()> {
        check_len("z", m, self.z.len())?;
        check_len("u", m, self.u.len())?;
        check_len("xi", m, self.xi.len())?;
        check_len("mu", 2 * m, self.mu.len())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        [&self.z[..], &self.u, &self.xi, &self.mu].concat()
    }

    pub fn from_flat(m: usize, x: &[f64]) -> Result<Self> {
        check_len("flat controller state", 5 * m, x.len())?;
        Ok(Self {
            z: x[..m].to_vec(),
            u: x[m..2 * m].to_vec(),
            xi: x[2 * m..3 * m].to_vec(),
            mu: x[3 * m..].to_vec(),
        })
    }
}

/// State of the reduced golden-ratio flow.
#[derive(Clone, Debug, PartialEq)]
pub struct GrState {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
}

impl GrState {
    pub fn new(z: Vec<f64>, u: Vec<f64>) -> Self {
        Self { z, u }
    }

    fn check(&self, m: usize) -> Result<()> {
        check_len("z", m, self.z.len())?;
        check_len("u", m, self.u.len())
    }
}

/// `(z, u, ξ)` of the nominal average system.
#[derive(Clone, Debug, PartialEq)]
pub struct AverageState {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
}

/// `(u, ξ, μ)` of the classic baselines; `xi` is empty for the unfiltered variant.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineState {
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    pub mu: Vec<f64>,
}

/// First component of every oscillator pair.
pub fn dither_signal(mu: &[f64]) -> Result<Vec<f64>> {
    if mu.len() % 2 != 0 {
        return Err(Error::invalid(format!(
            "oscillator state must have even length, got {}",
            mu.len()
        )));
    }
    Ok(mu.iter().step_by(2).copied().collect())
}

/// `2π R_κ μ`: each pair rotates at `κ_j` revolutions per unit time.
pub fn oscillator_rhs(mu: &[f64], params: &EscParams) -> Result<Vec<f64>> {
    check_len("mu", 2 * params.kappa.len(), mu.len())?;
    let mut out = vec![0.0; mu.len()];
    oscillator_into(&params.kappa, mu, &mut out);
    Ok(out)
}

#[inline]
pub(crate) fn oscillator_into(kappa: &[f64], mu: &[f64], out: &mut [f64]) {
    for (j, k) in kappa.iter().enumerate() {
        let w = TAU * k;
        out[2 * j] = -w * mu[2 * j + 1];
        out[2 * j + 1] = w * mu[2 * j];
    }
}

/// Scratch buffers for the estimate kernel.
#[derive(Clone, Debug)]
pub(crate) struct Scratch {
    point: Vec<f64>,
    field: Vec<f64>,
}

impl Scratch {
    pub(crate) fn new(m: usize) -> Self {
        Self {
            point: vec![0.0; m],
            field: vec![0.0; m],
        }
    }
}

/// Dithered pseudogradient estimate `F̃(u, μ)`.
///
/// Zeroth-order agents measure `J_i(u + A D μ)` and correlate it with their own dither,
/// `(2 / a_i) J_i(·) D μ_i`. First-order agents read their analytic block at the played
/// action, which carries no dither of their own.
pub(crate) fn estimate_into<C: CostChannel + ?Sized>(
    game: &GameSpec,
    gains: &ChannelGains,
    u: &[f64],
    mu: &[f64],
    channel: &mut C,
    scratch: &mut Scratch,
    out: &mut [f64],
) {
    let m = u.len();
    for j in 0..m {
        scratch.point[j] = u[j] + gains.dither_amplitude[j] * mu[2 * j];
    }
    if gains.first_order.iter().any(|f| *f) {
        // dimensions were validated when the gains were built
        game.pseudogradient_into(&scratch.point, &mut scratch.field)
            .expect("first-order agents require an analytic pseudogradient");
    }
    for i in 0..game.n_agents() {
        let block = game.block(i);
        if gains.first_order[block.start] {
            out[block.clone()].copy_from_slice(&scratch.field[block]);
        } else {
            let cost = channel.measure(game, i, &scratch.point);
            for j in block {
                out[j] = 2.0 / gains.amplitude[j] * cost * mu[2 * j];
            }
        }
    }
}

fn prepare(game: &GameSpec, params: &EscParams) -> Result<ChannelGains> {
    params.validate(game)?;
    Ok(params.channel_gains(game))
}

fn require_field(game: &GameSpec) -> Result<()> {
    if game.has_pseudogradient() {
        Ok(())
    } else {
        Err(Error::MissingPseudogradient(game.name().to_string()))
    }
}

/// `F̃(u, μ)` through the given measurement channel.
pub fn dither_estimate<C: CostChannel + ?Sized>(
    game: &GameSpec,
    u: &[f64],
    mu: &[f64],
    params: &EscParams,
    channel: &mut C,
) -> Result<Vec<f64>> {
    let gains = prepare(game, params)?;
    let m = game.dim();
    check_len("u", m, u.len())?;
    check_len("mu", 2 * m, mu.len())?;
    let mut out = vec![0.0; m];
    estimate_into(game, &gains, u, mu, channel, &mut Scratch::new(m), &mut out);
    Ok(out)
}

/// Derivative of the full payoff-feedback golden-ratio controller.
pub fn esc_gr_rhs<C: CostChannel + ?Sized>(
    state: &EscState,
    game: &GameSpec,
    params: &EscParams,
    channel: &mut C,
) -> Result<EscState> {
    let m = game.dim();
    state.check(m)?;
    let mut sys = ControllerSystem::new(ControllerKind::Nesc, game, params, channel, None)?;
    let x = state.to_flat();
    let mut dx = vec![0.0; x.len()];
    crate::sim::OdeSystem::rhs(&mut sys, &x, &mut dx);
    EscState::from_flat(m, &dx)
}

/// Derivative of the classic baseline; `filtered` selects the variant with the `ξ` filter.
pub fn esc_baseline_rhs<C: CostChannel + ?Sized>(
    state: &BaselineState,
    game: &GameSpec,
    params: &EscParams,
    filtered: bool,
    channel: &mut C,
) -> Result<BaselineState> {
    let m = game.dim();
    check_len("u", m, state.u.len())?;
    check_len("xi", if filtered { m } else { 0 }, state.xi.len())?;
    check_len("mu", 2 * m, state.mu.len())?;
    let kind = if filtered {
        ControllerKind::BaselineFiltered
    } else {
        ControllerKind::BaselineUnfiltered
    };
    let mut sys = ControllerSystem::new(kind, game, params, channel, None)?;
    let x = [&state.u[..], &state.xi, &state.mu].concat();
    let mut dx = vec![0.0; x.len()];
    crate::sim::OdeSystem::rhs(&mut sys, &x, &mut dx);
    let (du, rest) = dx.split_at(m);
    let (dxi, dmu) = rest.split_at(state.xi.len());
    Ok(BaselineState {
        u: du.to_vec(),
        xi: dxi.to_vec(),
        mu: dmu.to_vec(),
    })
}

/// Reduced golden-ratio flow with normalized gains `γ̃ ε̃`.
pub fn gr_flow_rhs(state: &GrState, game: &GameSpec, params: &EscParams) -> Result<GrState> {
    require_field(game)?;
    state.check(game.dim())?;
    flow_with_clean_channel(ControllerKind::GrFlow, game, params, None, &[&state.z, &state.u])
        .map(|dx| split_gr(game.dim(), dx))
}

/// Nominal average system: `(z, u)` rows scaled by `ε̄ γ̃ ε̃`, filter row by `γ̃`.
pub fn nominal_average_rhs(
    state: &AverageState,
    game: &GameSpec,
    params: &EscParams,
) -> Result<AverageState> {
    require_field(game)?;
    let m = game.dim();
    check_len("z", m, state.z.len())?;
    check_len("u", m, state.u.len())?;
    check_len("xi", m, state.xi.len())?;
    let dx = flow_with_clean_channel(
        ControllerKind::NominalAverage,
        game,
        params,
        None,
        &[&state.z, &state.u, &state.xi],
    )?;
    Ok(AverageState {
        z: dx[..m].to_vec(),
        u: dx[m..2 * m].to_vec(),
        xi: dx[2 * m..].to_vec(),
    })
}

/// Boundary-layer filter `γ̃ (-ξ + F(u_frozen))` with the slow state frozen.
pub fn boundary_layer_rhs(
    xi: &[f64],
    u_frozen: &[f64],
    game: &GameSpec,
    params: &EscParams,
) -> Result<Vec<f64>> {
    require_field(game)?;
    let gains = prepare(game, params)?;
    check_len("xi", game.dim(), xi.len())?;
    let target = game.pseudogradient(u_frozen)?;
    Ok(xi
        .iter()
        .zip(&target)
        .zip(&gains.gamma_norm)
        .map(|((x, f), g)| g * (f - x))
        .collect())
}

/// Projected flow `ż = -z + u`, `u̇ = -u + proj_Ω(z - F(u))` with unit gains.
pub fn projected_gr_rhs(state: &GrState, game: &GameSpec, set: &ConstraintSet) -> Result<GrState> {
    require_field(game)?;
    let m = game.dim();
    state.check(m)?;
    let params = EscParams::uniform(game.n_agents(), 1.0, 1.0, 1.0, distinct_kappa(m));
    flow_with_clean_channel(
        ControllerKind::ProjectedGr,
        game,
        &params,
        Some(set.clone()),
        &[&state.z, &state.u],
    )
    .map(|dx| split_gr(m, dx))
}

/// Placeholder frequencies for flows that never touch the oscillators.
pub(crate) fn distinct_kappa(m: usize) -> Vec<f64> {
    (1..=m).map(|j| j as f64).collect()
}

fn flow_with_clean_channel(
    kind: ControllerKind,
    game: &GameSpec,
    params: &EscParams,
    set: Option<ConstraintSet>,
    parts: &[&[f64]],
) -> Result<Vec<f64>> {
    let mut sys = ControllerSystem::new(kind, game, params, CleanChannel, set)?;
    let x = parts.concat();
    let mut dx = vec![0.0; x.len()];
    crate::sim::OdeSystem::rhs(&mut sys, &x, &mut dx);
    Ok(dx)
}

fn split_gr(m: usize, dx: Vec<f64>) -> GrState {
    GrState {
        z: dx[..m].to_vec(),
        u: dx[m..].to_vec(),
    }
}
