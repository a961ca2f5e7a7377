use crate::controllers::{EscParams, GrState};
use crate::error::{check_len, Result};
use crate::games::{dot, GameSpec};

/// Per-channel weights `1 / (γ̃_i ε̃_i)` of the Lyapunov function.
pub fn lyapunov_weights(game: &GameSpec, params: &EscParams) -> Result<Vec<f64>> {
    params.validate(game)?;
    let (gt, et) = (params.normalized_gamma(), params.normalized_epsilon());
    let mut w = vec![0.0; game.dim()];
    for i in 0..game.n_agents() {
        for j in game.block(i) {
            w[j] = 1.0 / (gt[i] * et[i]);
        }
    }
    Ok(w)
}

/// `V = ½‖z - u*‖²_W + ½‖u - u*‖²_W` with `W = diag(1 / (γ̃ ε̃))`.
pub fn lyapunov_value(game: &GameSpec, params: &EscParams, state: &GrState) -> Result<f64> {
    let u_star = game.require_known_ne()?;
    let m = game.dim();
    check_len("z", m, state.z.len())?;
    check_len("u", m, state.u.len())?;
    let w = lyapunov_weights(game, params)?;
    Ok(weighted_lyapunov_value(state, u_star, &w))
}

/// `½‖z - u*‖²_W + ½‖u - u*‖²_W` for explicit diagonal weights.
pub fn weighted_lyapunov_value(state: &GrState, u_star: &[f64], weights: &[f64]) -> f64 {
    let mut v = 0.0;
    for j in 0..u_star.len() {
        let (dz, du) = (state.z[j] - u_star[j], state.u[j] - u_star[j]);
        v += 0.5 * weights[j] * (dz * dz + du * du);
    }
    v
}

/// Closed-form rate of `V` along the reduced flow:
/// `V̇ = -‖u - z‖² - ⟨u - u*, F(u) - F(u*)⟩`, non-positive for monotone games.
pub fn lyapunov_rate(game: &GameSpec, params: &EscParams, state: &GrState) -> Result<f64> {
    let u_star = game.require_known_ne()?;
    params.validate(game)?;
    let m = game.dim();
    check_len("z", m, state.z.len())?;
    check_len("u", m, state.u.len())?;
    let f = game.pseudogradient(&state.u)?;
    let f_star = game.pseudogradient(u_star)?;
    let mut rate = 0.0;
    for j in 0..m {
        let gap = state.u[j] - state.z[j];
        rate -= gap * gap + (state.u[j] - u_star[j]) * (f[j] - f_star[j]);
    }
    Ok(rate)
}

/// Directional derivative of `V` at `state` along an arbitrary velocity `(ż, u̇)`.
pub fn lyapunov_derivative_along(
    game: &GameSpec,
    params: &EscParams,
    state: &GrState,
    velocity: &GrState,
) -> Result<f64> {
    let u_star = game.require_known_ne()?;
    let m = game.dim();
    check_len("z velocity", m, velocity.z.len())?;
    check_len("u velocity", m, velocity.u.len())?;
    let w = lyapunov_weights(game, params)?;
    let dz: Vec<f64> = (0..m).map(|j| w[j] * (state.z[j] - u_star[j])).collect();
    let du: Vec<f64> = (0..m).map(|j| w[j] * (state.u[j] - u_star[j])).collect();
    Ok(dot(&dz, &velocity.z) + dot(&du, &velocity.u))
}
