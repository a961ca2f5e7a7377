use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::games::GameSpec;

/// Minimum separation between two dither frequencies for them to count as distinct.
pub const KAPPA_DISTINCT_TOL: f64 = 1e-12;

/// Minimum gap enforced when frequencies are drawn at random.
pub const KAPPA_DRAW_GAP: f64 = 0.01;

/// How an agent obtains its pseudogradient block.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Oracle {
    /// Payoff feedback only: the block is estimated from dithered cost measurements.
    ZerothOrder,
    /// The analytic block is measured directly and the agent is not dithered.
    FirstOrder,
}

impl Oracle {
    pub fn as_str(self) -> &'static str {
        match self {
            Oracle::ZerothOrder => "zeroth",
            Oracle::FirstOrder => "first",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "zeroth" | "zeroth-order" => Some(Oracle::ZerothOrder),
            "first" | "first-order" => Some(Oracle::FirstOrder),
            _ => None,
        }
    }
}

/// Tuning of the extremum seeking controller.
///
/// `gamma`, `epsilon`, `amplitudes` and `oracle` are per agent; `kappa` holds one
/// frequency per scalar action channel.
#[derive(Clone, Debug, PartialEq)]
pub struct EscParams {
    pub gamma: Vec<f64>,
    pub epsilon: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub kappa: Vec<f64>,
    pub oracle: Vec<Oracle>,
}

impl EscParams {
    /// Identical gains for every agent, all agents zeroth-order.
    pub fn uniform(n_agents: usize, gamma: f64, epsilon: f64, amplitude: f64, kappa: Vec<f64>) -> Self {
        Self {
            gamma: vec![gamma; n_agents],
            epsilon: vec![epsilon; n_agents],
            amplitudes: vec![amplitude; n_agents],
            kappa,
            oracle: vec![Oracle::ZerothOrder; n_agents],
        }
    }

    pub fn validate(&self, game: &GameSpec) -> Result<()> {
        let n = game.n_agents();
        check_len("gamma", n, self.gamma.len())?;
        check_len("epsilon", n, self.epsilon.len())?;
        check_len("amplitudes", n, self.amplitudes.len())?;
        check_len("oracle modes", n, self.oracle.len())?;
        check_len("kappa", game.dim(), self.kappa.len())?;
        for (name, values) in [
            ("gamma", &self.gamma),
            ("epsilon", &self.epsilon),
            ("amplitudes", &self.amplitudes),
            ("kappa", &self.kappa),
        ] {
            if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::invalid(format!("{name} entries must be positive, got {v}")));
            }
        }
        for (i, a) in self.kappa.iter().enumerate() {
            for b in &self.kappa[i + 1..] {
                if (a - b).abs() <= KAPPA_DISTINCT_TOL {
                    return Err(Error::invalid(format!(
                        "dither frequencies must be pairwise distinct, found {a} twice"
                    )));
                }
            }
        }
        if self.oracle.contains(&Oracle::FirstOrder) && !game.has_pseudogradient() {
            return Err(Error::MissingPseudogradient(game.name().to_string()));
        }
        Ok(())
    }

    pub fn gamma_max(&self) -> f64 {
        max(&self.gamma)
    }

    pub fn epsilon_max(&self) -> f64 {
        max(&self.epsilon)
    }

    pub fn amplitude_max(&self) -> f64 {
        max(&self.amplitudes)
    }

    /// `γ / γ̄`, per agent.
    pub fn normalized_gamma(&self) -> Vec<f64> {
        let g = self.gamma_max();
        self.gamma.iter().map(|v| v / g).collect()
    }

    /// `ε / ε̄`, per agent.
    pub fn normalized_epsilon(&self) -> Vec<f64> {
        let e = self.epsilon_max();
        self.epsilon.iter().map(|v| v / e).collect()
    }

    /// Same parameters with every amplitude multiplied by `factor`.
    pub fn scale_amplitudes(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.amplitudes.iter_mut().for_each(|a| *a *= factor);
        out
    }

    /// Expand the per-agent gains to per-channel vectors for the inner loops.
    pub(crate) fn channel_gains(&self, game: &GameSpec) -> ChannelGains {
        let m = game.dim();
        let (gt, et) = (self.normalized_gamma(), self.normalized_epsilon());
        let eps_max = self.epsilon_max();
        let mut g = ChannelGains {
            gamma: vec![0.0; m],
            gamma_eps: vec![0.0; m],
            amplitude: vec![0.0; m],
            dither_amplitude: vec![0.0; m],
            first_order: vec![false; m],
            gamma_norm: vec![0.0; m],
            gamma_eps_norm: vec![0.0; m],
            eps_max,
            kappa: self.kappa.clone(),
        };
        for i in 0..game.n_agents() {
            let first = self.oracle[i] == Oracle::FirstOrder;
            for j in game.block(i) {
                g.gamma[j] = self.gamma[i];
                g.gamma_eps[j] = self.gamma[i] * self.epsilon[i];
                g.amplitude[j] = self.amplitudes[i];
                g.dither_amplitude[j] = if first { 0.0 } else { self.amplitudes[i] };
                g.first_order[j] = first;
                g.gamma_norm[j] = gt[i];
                g.gamma_eps_norm[j] = gt[i] * et[i];
            }
        }
        g
    }
}

#[derive(Clone, Debug)]
pub(crate) struct ChannelGains {
    pub gamma: Vec<f64>,
    pub gamma_eps: Vec<f64>,
    pub amplitude: Vec<f64>,
    /// Amplitude actually applied to the played action (zero for first-order agents).
    pub dither_amplitude: Vec<f64>,
    pub first_order: Vec<bool>,
    pub gamma_norm: Vec<f64>,
    pub gamma_eps_norm: Vec<f64>,
    pub eps_max: f64,
    pub kappa: Vec<f64>,
}

fn max(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Draw `m` frequencies uniformly from `(0, 1]`, rejecting any draw within
/// [`KAPPA_DRAW_GAP`] of zero or of an already accepted frequency.
pub fn draw_kappa<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::with_capacity(m);
    while out.len() < m {
        let k: f64 = rng.random_range(0.0..=1.0);
        if k < KAPPA_DRAW_GAP || out.iter().any(|o| (o - k).abs() < KAPPA_DRAW_GAP) {
            continue;
        }
        out.push(k);
    }
    out
}
