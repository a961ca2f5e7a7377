//! Game definitions: agents, costs, pseudogradients and the builtin example games.
//!
//! Joint actions are flat vectors with the agent blocks stored in index order.
//! Agent `i` owns the coordinates `offsets[i]..offsets[i + 1]`.

use std::fmt;
use std::ops::Range;
use std::sync::Arc;

use crate::error::{check_len, Error, Result};

/// Stationarity tolerance required of a declared equilibrium.
pub const NE_TOLERANCE: f64 = 1e-9;

/// Cost evaluator `(agent, joint action) -> J_agent(u)`.
pub type CostFn = dyn Fn(usize, &[f64]) -> f64 + Send + Sync;

/// Vector field evaluator writing `F(u)` into the output slice.
pub type FieldFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// An unconstrained N-player game with (possibly cost-only) agents.
///
/// Immutable once built; every evaluator is a pure function.
#[derive(Clone)]
pub struct GameSpec {
    name: String,
    dims: Vec<usize>,
    offsets: Vec<usize>,
    cost: Arc<CostFn>,
    pseudogradient: Option<Arc<FieldFn>>,
    known_ne: Option<Vec<f64>>,
}

impl fmt::Debug for GameSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GameSpec")
            .field("name", &self.name)
            .field("dims", &self.dims)
            .field("analytic_pseudogradient", &self.pseudogradient.is_some())
            .field("known_ne", &self.known_ne)
            .finish()
    }
}

impl GameSpec {
    /// A cost-only game. `dims[i]` is the action dimension of agent `i`.
    pub fn new<C>(name: impl Into<String>, dims: Vec<usize>, cost: C) -> Result<Self>
    where
        C: Fn(usize, &[f64]) -> f64 + Send + Sync + 'static,
    {
        if dims.is_empty() {
            return Err(Error::invalid("a game needs at least one agent"));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("agent dimensions must be positive"));
        }
        let mut offsets = Vec::with_capacity(dims.len() + 1);
        offsets.push(0);
        for d in &dims {
            offsets.push(offsets.last().unwrap() + d);
        }
        Ok(Self {
            name: name.into(),
            dims,
            offsets,
            cost: Arc::new(cost),
            pseudogradient: None,
            known_ne: None,
        })
    }

    /// Attach the analytic pseudogradient.
    pub fn with_pseudogradient<F>(mut self, field: F) -> Result<Self>
    where
        F: Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    {
        self.pseudogradient = Some(Arc::new(field));
        self.check_equilibrium()?;
        Ok(self)
    }

    /// Attach a known Nash equilibrium, used by diagnostics.
    pub fn with_known_ne(mut self, u_star: Vec<f64>) -> Result<Self> {
        check_len("known equilibrium", self.dim(), u_star.len())?;
        self.known_ne = Some(u_star);
        self.check_equilibrium()?;
        Ok(self)
    }

    fn check_equilibrium(&self) -> Result<()> {
        if let (Some(_), Some(u_star)) = (&self.pseudogradient, &self.known_ne) {
            let r = self.ne_residual(u_star)?;
            if r > NE_TOLERANCE {
                return Err(Error::invalid(format!(
                    "declared equilibrium of `{}` is not stationary: |F(u*)| = {r:e}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn n_agents(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Total action dimension `m`.
    pub fn dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Coordinates owned by agent `i`.
    pub fn block(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Agent owning scalar channel `j`.
    pub fn agent_of(&self, j: usize) -> usize {
        // offsets is sorted; the owner is the last offset <= j
        self.offsets.partition_point(|&o| o <= j) - 1
    }

    pub fn has_pseudogradient(&self) -> bool {
        self.pseudogradient.is_some()
    }

    pub fn known_ne(&self) -> Option<&[f64]> {
        self.known_ne.as_deref()
    }

    pub(crate) fn require_known_ne(&self) -> Result<&[f64]> {
        self.known_ne()
            .ok_or_else(|| Error::MissingEquilibrium(self.name.clone()))
    }

    /// `J_i(u)` for agent `i` (zero-based) at the joint action `u`.
    pub fn evaluate_cost(&self, i: usize, u: &[f64]) -> Result<f64> {
        if i >= self.n_agents() {
            return Err(Error::AgentIndex {
                index: i,
                n_agents: self.n_agents(),
            });
        }
        check_len("joint action", self.dim(), u.len())?;
        Ok((self.cost)(i, u))
    }

    /// Unchecked cost evaluation for inner loops whose dimensions were validated upfront.
    #[inline]
    pub(crate) fn cost_unchecked(&self, i: usize, u: &[f64]) -> f64 {
        (self.cost)(i, u)
    }

    /// The pseudogradient `F(u) = col(∇_{u_i} J_i(u))`.
    pub fn pseudogradient(&self, u: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.dim()];
        self.pseudogradient_into(u, &mut out)?;
        Ok(out)
    }

    pub fn pseudogradient_into(&self, u: &[f64], out: &mut [f64]) -> Result<()> {
        let field = self
            .pseudogradient
            .as_ref()
            .ok_or_else(|| Error::MissingPseudogradient(self.name.clone()))?;
        check_len("joint action", self.dim(), u.len())?;
        check_len("pseudogradient output", self.dim(), out.len())?;
        field(u, out);
        Ok(())
    }

    /// Euclidean norm of the pseudogradient; zero exactly at Nash equilibria.
    pub fn ne_residual(&self, u: &[f64]) -> Result<f64> {
        Ok(norm(&self.pseudogradient(u)?))
    }

    /// Two scalar agents with `J_1 = (u_1 - u_1*)(u_2 - u_2*)` and `J_2 = -J_1`.
    ///
    /// The pseudogradient is a rotation about `(u_1*, u_2*)`: monotone but not strongly
    /// monotone.
    pub fn bilinear(u1_star: f64, u2_star: f64) -> Self {
        let cost = move |i: usize, u: &[f64]| {
            let j1 = (u[0] - u1_star) * (u[1] - u2_star);
            if i == 0 {
                j1
            } else {
                -j1
            }
        };
        Self::new("bilinear", vec![1, 1], cost)
            .and_then(|g| {
                g.with_pseudogradient(move |u, out| {
                    out[0] = u[1] - u2_star;
                    out[1] = -(u[0] - u1_star);
                })
            })
            .and_then(|g| g.with_known_ne(vec![u1_star, u2_star]))
            .expect("bilinear game is well-formed")
    }

    /// Producers `J_i = u_i (u_i - 2 U_i) - λ u_i` and a price-setting regulator
    /// `J_{N+1} = λ (Σ u_i - U_d)`, appended as the last scalar agent.
    pub fn fixed_demand(params: &FixedDemandParams) -> Result<Self> {
        params.validate()?;
        let caps = params.capacities.clone();
        let demand = params.demand;
        let n = caps.len();

        let cost_caps = caps.clone();
        let cost = move |i: usize, u: &[f64]| {
            let price = u[n];
            if i < n {
                u[i] * (u[i] - 2.0 * cost_caps[i]) - price * u[i]
            } else {
                price * (u[..n].iter().sum::<f64>() - demand)
            }
        };
        let field_caps = caps;
        let field = move |u: &[f64], out: &mut [f64]| {
            let price = u[n];
            for i in 0..n {
                out[i] = 2.0 * u[i] - 2.0 * field_caps[i] - price;
            }
            out[n] = u[..n].iter().sum::<f64>() - demand;
        };
        Self::new("fixed-demand", vec![1; n + 1], cost)?
            .with_pseudogradient(field)?
            .with_known_ne(params.equilibrium())
    }
}

/// Producer capacities and the demand of the fixed-demand market game (kW).
#[derive(Clone, Debug, PartialEq)]
pub struct FixedDemandParams {
    pub capacities: Vec<f64>,
    pub demand: f64,
}

impl FixedDemandParams {
    pub fn validate(&self) -> Result<()> {
        if self.capacities.is_empty() {
            return Err(Error::invalid("fixed-demand game needs at least one producer"));
        }
        if self.capacities.iter().chain([&self.demand]).any(|v| !v.is_finite()) {
            return Err(Error::invalid("fixed-demand parameters must be finite"));
        }
        Ok(())
    }

    /// Equilibrium price `λ* = 2 (U_d - Σ U_i) / N`.
    pub fn equilibrium_price(&self) -> f64 {
        let n = self.capacities.len() as f64;
        2.0 * (self.demand - self.capacities.iter().sum::<f64>()) / n
    }

    /// `(U_1 + λ*/2, ..., U_N + λ*/2, λ*)`, the solution of `F(u) = 0`.
    pub fn equilibrium(&self) -> Vec<f64> {
        let price = self.equilibrium_price();
        self.capacities
            .iter()
            .map(|c| c + 0.5 * price)
            .chain([price])
            .collect()
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
