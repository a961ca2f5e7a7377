use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use super::{estimate_into, oscillator_into, ChannelGains, ConstraintSet, CostChannel, EscParams, Scratch};
use crate::error::{check_len, Error, Result};
use crate::games::GameSpec;
use crate::sim::{renormalize_pairs, OdeSystem};

/// Every dynamical system that can be integrated from an experiment config.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControllerKind {
    /// Full payoff-feedback golden-ratio controller on `(z, u, ξ, μ)`.
    Nesc,
    /// `u̇ = -γε F̃(u, μ)` on `(u, μ)`.
    BaselineUnfiltered,
    /// `u̇ = -γε ξ`, `ξ̇ = γ(-ξ + F̃(u, μ))` on `(u, ξ, μ)`.
    BaselineFiltered,
    /// Reduced flow on `(z, u)` with the analytic pseudogradient.
    GrFlow,
    /// Nominal average system on `(z, u, ξ)`.
    NominalAverage,
    /// Projected reduced flow on `(z, u)` with unit gains.
    ProjectedGr,
}

impl ControllerKind {
    pub const ALL: [ControllerKind; 6] = [
        ControllerKind::Nesc,
        ControllerKind::BaselineUnfiltered,
        ControllerKind::BaselineFiltered,
        ControllerKind::GrFlow,
        ControllerKind::NominalAverage,
        ControllerKind::ProjectedGr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ControllerKind::Nesc => "nesc",
            ControllerKind::BaselineUnfiltered => "baseline-unfiltered",
            ControllerKind::BaselineFiltered => "baseline-filtered",
            ControllerKind::GrFlow => "gr-flow",
            ControllerKind::NominalAverage => "nominal-average",
            ControllerKind::ProjectedGr => "projected-gr",
        }
    }

    /// Whether the system carries oscillators and uses cost measurements.
    pub fn is_dithered(self) -> bool {
        matches!(
            self,
            ControllerKind::Nesc | ControllerKind::BaselineUnfiltered | ControllerKind::BaselineFiltered
        )
    }

    pub fn needs_pseudogradient(self) -> bool {
        !self.is_dithered()
    }

    pub fn layout(self, m: usize) -> StateLayout {
        let blocks: &[Block] = match self {
            ControllerKind::Nesc => &[Block::Z, Block::U, Block::Xi, Block::Mu],
            ControllerKind::BaselineUnfiltered => &[Block::U, Block::Mu],
            ControllerKind::BaselineFiltered => &[Block::U, Block::Xi, Block::Mu],
            ControllerKind::GrFlow | ControllerKind::ProjectedGr => &[Block::Z, Block::U],
            ControllerKind::NominalAverage => &[Block::Z, Block::U, Block::Xi],
        };
        let mut layout = StateLayout {
            z: None,
            u: 0..0,
            xi: None,
            mu: None,
            len: 0,
        };
        for b in blocks {
            let width = if *b == Block::Mu { 2 * m } else { m };
            let r = layout.len..layout.len + width;
            layout.len += width;
            match b {
                Block::Z => layout.z = Some(r),
                Block::U => layout.u = r,
                Block::Xi => layout.xi = Some(r),
                Block::Mu => layout.mu = Some(r),
            }
        }
        layout
    }

    /// Column names for the flat state, channels numbered from 1.
    pub fn state_names(self, m: usize) -> Vec<String> {
        let layout = self.layout(m);
        let mut names = Vec::with_capacity(layout.len);
        let mut push = |prefix: &str| (1..=m).for_each(|j| names.push(format!("{prefix}{j}")));
        if layout.z.is_some() {
            push("z");
        }
        push("u");
        if layout.xi.is_some() {
            push("xi");
        }
        if layout.mu.is_some() {
            for j in 1..=m {
                names.push(format!("mu{j}_1"));
                names.push(format!("mu{j}_2"));
            }
        }
        names
    }
}

impl fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::config(format!("unknown controller `{s}`")))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Block {
    Z,
    U,
    Xi,
    Mu,
}

/// Where each sub-state lives inside the flat state vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateLayout {
    pub z: Option<Range<usize>>,
    pub u: Range<usize>,
    pub xi: Option<Range<usize>>,
    pub mu: Option<Range<usize>>,
    pub len: usize,
}

/// Initial `(z, u, ξ)` and oscillator phases; only the blocks a controller has are used.
#[derive(Clone, Debug, PartialEq)]
pub struct InitialConditions {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub xi: Vec<f64>,
    /// Initial angle of each oscillator pair; zero places it at `(1, 0)`.
    pub phases: Vec<f64>,
}

impl InitialConditions {
    pub fn zeros(m: usize) -> Self {
        Self {
            z: vec![0.0; m],
            u: vec![0.0; m],
            xi: vec![0.0; m],
            phases: vec![0.0; m],
        }
    }

    pub fn assemble(&self, kind: ControllerKind) -> Result<Vec<f64>> {
        let m = self.u.len();
        check_len("initial z", m, self.z.len())?;
        check_len("initial xi", m, self.xi.len())?;
        check_len("initial phases", m, self.phases.len())?;
        let layout = kind.layout(m);
        let mut x = vec![0.0; layout.len];
        if let Some(r) = layout.z {
            x[r].copy_from_slice(&self.z);
        }
        x[layout.u].copy_from_slice(&self.u);
        if let Some(r) = layout.xi {
            x[r].copy_from_slice(&self.xi);
        }
        if let Some(r) = layout.mu {
            for (j, phase) in self.phases.iter().enumerate() {
                x[r.start + 2 * j] = phase.cos();
                x[r.start + 2 * j + 1] = phase.sin();
            }
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("initial state must be finite"));
        }
        Ok(x)
    }
}

/// A controller bound to a game, its tuning and a measurement channel, ready to integrate.
pub struct ControllerSystem<C> {
    kind: ControllerKind,
    game: GameSpec,
    gains: ChannelGains,
    set: Option<ConstraintSet>,
    channel: C,
    layout: StateLayout,
    scratch: Scratch,
    estimate: Vec<f64>,
    field: Vec<f64>,
    m: usize,
}

impl<C: CostChannel> ControllerSystem<C> {
    pub fn new(
        kind: ControllerKind,
        game: &GameSpec,
        params: &EscParams,
        channel: C,
        set: Option<ConstraintSet>,
    ) -> Result<Self> {
        params.validate(game)?;
        if kind.needs_pseudogradient() && !game.has_pseudogradient() {
            return Err(Error::MissingPseudogradient(game.name().to_string()));
        }
        let m = game.dim();
        let set = match (kind, set) {
            (ControllerKind::ProjectedGr, None) => Some(ConstraintSet::unconstrained(m)),
            (_, s) => s,
        };
        if let Some(s) = &set {
            check_len("constraint set", m, s.dim())?;
            s.validate()?;
        }
        Ok(Self {
            kind,
            game: game.clone(),
            gains: params.channel_gains(game),
            set,
            channel,
            layout: kind.layout(m),
            scratch: Scratch::new(m),
            estimate: vec![0.0; m],
            field: vec![0.0; m],
            m,
        })
    }

    pub fn kind(&self) -> ControllerKind {
        self.kind
    }

    pub fn layout(&self) -> &StateLayout {
        &self.layout
    }

    pub fn state_dim(&self) -> usize {
        self.layout.len
    }

    pub fn game(&self) -> &GameSpec {
        &self.game
    }

    pub fn channel_mut(&mut self) -> &mut C {
        &mut self.channel
    }

    fn field_at(&mut self, u: &[f64]) {
        self.game
            .pseudogradient_into(u, &mut self.field)
            .expect("analytic pseudogradient checked at construction");
    }
}

impl<C: CostChannel> OdeSystem for ControllerSystem<C> {
    fn rhs(&mut self, x: &[f64], dx: &mut [f64]) {
        debug_assert_eq!(x.len(), self.layout.len);
        let m = self.m;
        let u = &x[self.layout.u.clone()];
        match self.kind {
            ControllerKind::Nesc => {
                let (z, xi, mu) = (&x[..m], &x[2 * m..3 * m], &x[3 * m..]);
                estimate_into(
                    &self.game,
                    &self.gains,
                    u,
                    mu,
                    &mut self.channel,
                    &mut self.scratch,
                    &mut self.estimate,
                );
                let g = &self.gains;
                for j in 0..m {
                    dx[j] = g.gamma_eps[j] * (u[j] - z[j]);
                    dx[m + j] = g.gamma_eps[j] * (z[j] - u[j] - xi[j]);
                    dx[2 * m + j] = g.gamma[j] * (self.estimate[j] - xi[j]);
                }
                oscillator_into(&g.kappa, mu, &mut dx[3 * m..]);
            }
            ControllerKind::BaselineUnfiltered => {
                let mu = &x[m..];
                estimate_into(
                    &self.game,
                    &self.gains,
                    u,
                    mu,
                    &mut self.channel,
                    &mut self.scratch,
                    &mut self.estimate,
                );
                for j in 0..m {
                    dx[j] = -self.gains.gamma_eps[j] * self.estimate[j];
                }
                oscillator_into(&self.gains.kappa, mu, &mut dx[m..]);
            }
            ControllerKind::BaselineFiltered => {
                let (xi, mu) = (&x[m..2 * m], &x[2 * m..]);
                estimate_into(
                    &self.game,
                    &self.gains,
                    u,
                    mu,
                    &mut self.channel,
                    &mut self.scratch,
                    &mut self.estimate,
                );
                let g = &self.gains;
                for j in 0..m {
                    dx[j] = -g.gamma_eps[j] * xi[j];
                    dx[m + j] = g.gamma[j] * (self.estimate[j] - xi[j]);
                }
                oscillator_into(&g.kappa, mu, &mut dx[2 * m..]);
            }
            ControllerKind::GrFlow => {
                let z = &x[..m];
                self.field_at(u);
                let g = &self.gains.gamma_eps_norm;
                for j in 0..m {
                    dx[j] = g[j] * (u[j] - z[j]);
                    dx[m + j] = g[j] * (z[j] - u[j] - self.field[j]);
                }
            }
            ControllerKind::NominalAverage => {
                let (z, xi) = (&x[..m], &x[2 * m..]);
                self.field_at(u);
                let g = &self.gains;
                for j in 0..m {
                    let slow = g.eps_max * g.gamma_eps_norm[j];
                    dx[j] = slow * (u[j] - z[j]);
                    dx[m + j] = slow * (z[j] - u[j] - xi[j]);
                    dx[2 * m + j] = g.gamma_norm[j] * (self.field[j] - xi[j]);
                }
            }
            ControllerKind::ProjectedGr => {
                let z = &x[..m];
                self.field_at(u);
                for j in 0..m {
                    self.scratch.point[j] = z[j] - self.field[j];
                }
                let set = self.set.as_ref().expect("projected flow always has a set");
                set.project_into(&self.scratch.point, &mut self.estimate);
                for j in 0..m {
                    dx[j] = u[j] - z[j];
                    dx[m + j] = self.estimate[j] - u[j];
                }
            }
        }
    }

    fn renormalize(&mut self, x: &mut [f64]) -> Result<()> {
        match &self.layout.mu {
            Some(r) => renormalize_pairs(&mut x[r.clone()]),
            None => Ok(()),
        }
    }
}
