use std::f64::consts::TAU;

use crate::controllers::{ChannelGains, CleanChannel, CostChannel, EscParams, Scratch};
use crate::error::{check_len, Error, Result};
use crate::games::{norm, GameSpec};

const MAX_DENOMINATOR: u64 = 100_000;
/// Periods of the slowest oscillator used when the frequencies are incommensurate.
const IRRATIONAL_PERIODS: f64 = 1e3;

/// Window over which the oscillator bank is averaged.
///
/// Commensurate frequencies use the exact common period `1 / gcd(κ)`. Otherwise, or
/// when that period is longer than the fallback, the window is `10³` periods of the
/// slowest oscillator and the average carries an `O(1 / T)` remainder.
pub fn averaging_window(kappa: &[f64]) -> Result<f64> {
    if kappa.is_empty() || kappa.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
        return Err(Error::invalid("frequencies must be positive"));
    }
    let slowest = kappa.iter().copied().fold(f64::INFINITY, f64::min);
    let fallback = IRRATIONAL_PERIODS / slowest;
    match common_period(kappa) {
        Some(t) if t <= fallback => Ok(t),
        _ => Ok(fallback),
    }
}

fn common_period(kappa: &[f64]) -> Option<f64> {
    let fracs: Vec<(u64, u64)> = kappa.iter().map(|k| rational(*k)).collect::<Option<_>>()?;
    // gcd(p_i / q_i) = gcd(p_i * L / q_i) / L with L = lcm(q_i)
    let mut lcm: u128 = 1;
    for &(_, q) in &fracs {
        lcm = lcm / gcd(lcm, q as u128) * q as u128;
        if lcm > 1 << 60 {
            return None;
        }
    }
    let g = fracs
        .iter()
        .map(|&(p, q)| p as u128 * (lcm / q as u128))
        .fold(0, gcd);
    Some(lcm as f64 / g as f64)
}

/// Continued-fraction approximation `p / q` reproducing `x` to 1e-12 relative.
fn rational(x: f64) -> Option<(u64, u64)> {
    let (mut h0, mut h1) = (0u64, 1u64);
    let (mut k0, mut k1) = (1u64, 0u64);
    let mut r = x;
    for _ in 0..64 {
        let a = r.floor();
        if a > u32::MAX as f64 {
            return None;
        }
        let a = a as u64;
        let h2 = a.checked_mul(h1)?.checked_add(h0)?;
        let k2 = a.checked_mul(k1)?.checked_add(k0)?;
        if k2 > MAX_DENOMINATOR {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        if (h1 as f64 / k1 as f64 - x).abs() <= 1e-12 * x.max(1.0) {
            return (h1 > 0).then_some((h1, k1));
        }
        let frac = r - a as f64;
        if frac <= 0.0 {
            return None;
        }
        r = 1.0 / frac;
    }
    None
}

fn gcd(a: u128, b: u128) -> u128 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Time average of `F̃(u, μ(t))` along the closed-form oscillator flow from `μ(0) = (1, 0)`,
/// by the rectangle rule over one averaging window (exact trapezoid for periodic data).
pub fn dither_average<C: CostChannel + ?Sized>(
    game: &GameSpec,
    u: &[f64],
    params: &EscParams,
    quadrature_steps: usize,
    channel: &mut C,
) -> Result<Vec<f64>> {
    params.validate(game)?;
    check_len("joint action", game.dim(), u.len())?;
    if quadrature_steps == 0 {
        return Err(Error::invalid("quadrature needs at least one node"));
    }
    let m = game.dim();
    let gains: ChannelGains = params.channel_gains(game);
    let window = averaging_window(&params.kappa)?;
    let dt = window / quadrature_steps as f64;
    let mut scratch = Scratch::new(m);
    let mut mu = vec![0.0; 2 * m];
    let mut est = vec![0.0; m];
    let mut acc = vec![0.0; m];
    for k in 0..quadrature_steps {
        let t = k as f64 * dt;
        for (j, kappa) in params.kappa.iter().enumerate() {
            let angle = TAU * kappa * t;
            mu[2 * j] = angle.cos();
            mu[2 * j + 1] = angle.sin();
        }
        crate::controllers::estimate_into(game, &gains, u, &mu, channel, &mut scratch, &mut est);
        for (a, e) in acc.iter_mut().zip(&est) {
            *a += e;
        }
    }
    Ok(acc.into_iter().map(|a| a / quadrature_steps as f64).collect())
}

/// `‖avg F̃(u, μ) - F(u)‖` with clean cost measurements.
pub fn dither_average_error(
    game: &GameSpec,
    u: &[f64],
    params: &EscParams,
    quadrature_steps: usize,
) -> Result<f64> {
    let avg = dither_average(game, u, params, quadrature_steps, &mut CleanChannel)?;
    let f = game.pseudogradient(u)?;
    let diff: Vec<f64> = avg.iter().zip(&f).map(|(a, b)| a - b).collect();
    Ok(norm(&diff))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn power_game(p: i32) -> GameSpec {
        let pf = p as f64;
        GameSpec::new(format!("u^{p}"), vec![1], move |_, u: &[f64]| u[0].powi(p))
            .unwrap()
            .with_pseudogradient(move |u, out| out[0] = pf * u[0].powi(p - 1))
            .unwrap()
    }

    /// `(1/T) ∫ (2/a) J(u + a cos θ) cos θ dθ` by brute-force midpoint quadrature over one turn.
    fn brute_force_average(j: impl Fn(f64) -> f64, u: f64, a: f64) -> f64 {
        let n = 200_000;
        (0..n)
            .map(|k| {
                let th = TAU * (k as f64 + 0.5) / n as f64;
                2.0 / a * j(u + a * th.cos()) * th.cos()
            })
            .sum::<f64>()
            / n as f64
    }

    #[test]
    fn windows() {
        assert!((averaging_window(&[0.5]).unwrap() - 2.0).abs() < 1e-12);
        assert!((averaging_window(&[0.2, 0.3]).unwrap() - 10.0).abs() < 1e-9);
        assert!((averaging_window(&[1.0, 1.5, 2.0]).unwrap() - 2.0).abs() < 1e-12);
        // 1/gcd(0.1778, 0.1238, 0.1824) = 5000 s, within the 10³-period fallback
        assert!((averaging_window(&[0.1778, 0.1238, 0.1824]).unwrap() - 5000.0).abs() < 1e-6);
        let irrational = [0.5, std::f64::consts::SQRT_2 / 3.0];
        let w = averaging_window(&irrational).unwrap();
        assert!((w - 1e3 / irrational[1]).abs() < 1e-9);
        assert!(averaging_window(&[]).is_err());
        assert!(averaging_window(&[0.0]).is_err());
    }

    #[test]
    fn quadratic_cost_has_no_averaging_bias() {
        let g = power_game(2);
        for a in [0.05, 0.1, 0.5, 2.0] {
            let p = EscParams::uniform(1, 1.0, 1.0, a, vec![0.7]);
            let err = dither_average_error(&g, &[1.0], &p, 64).unwrap();
            assert!(err <= 1e-8, "a = {a}: {err:e}");
            let avg = dither_average(&g, &[1.0], &p, 64, &mut CleanChannel).unwrap();
            assert!((avg[0] - 2.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn quartic_bias_is_quadratic_in_amplitude() {
        let g = power_game(4);
        let err = |a: f64| {
            let p = EscParams::uniform(1, 1.0, 1.0, a, vec![0.7]);
            dither_average_error(&g, &[1.0], &p, 64).unwrap()
        };
        // independent oracle: brute-force quadrature of the estimate over one period
        for a in [0.2, 0.1, 0.05] {
            let oracle = (brute_force_average(|x| x.powi(4), 1.0, a) - 4.0).abs();
            assert!((err(a) - oracle).abs() < 1e-9, "a = {a}");
        }
        let ratio = err(0.1) / err(0.05);
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn error_vanishes_with_amplitude() {
        let g = power_game(4);
        let mut prev = f64::INFINITY;
        for a in [1.0, 0.1, 0.01, 1e-3] {
            let p = EscParams::uniform(1, 1.0, 1.0, a, vec![0.7]);
            let e = dither_average_error(&g, &[1.0], &p, 64).unwrap();
            assert!(e < prev);
            prev = e;
        }
        assert!(prev < 1e-5);
    }

    #[test]
    fn multi_agent_average_recovers_bilinear_field() {
        let g = GameSpec::bilinear(2.0, -3.0);
        let p = EscParams::uniform(2, 1.0, 1.0, 0.1, vec![0.3, 0.5]);
        let err = dither_average_error(&g, &[0.5, 1.0], &p, 400).unwrap();
        assert!(err < 1e-10, "{err:e}");
    }
}
