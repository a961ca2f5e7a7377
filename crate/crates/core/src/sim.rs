//! Fixed-step explicit integration with trajectory recording.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::error::{Error, Result};

/// States whose sup-norm exceeds this are treated as diverged.
pub const DIVERGENCE_THRESHOLD: f64 = 1e9;

/// Oscillator pairs are rescaled to the unit circle every this many steps.
pub const RENORMALIZE_INTERVAL: usize = 1000;

/// A vector field `x -> ẋ` with an optional periodic state correction.
pub trait OdeSystem {
    fn rhs(&mut self, x: &[f64], dx: &mut [f64]);

    /// Project the state back onto its invariant manifold.
    fn renormalize(&mut self, _x: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

impl<F: FnMut(&[f64], &mut [f64])> OdeSystem for F {
    fn rhs(&mut self, x: &[f64], dx: &mut [f64]) {
        self(x, dx)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Rk4,
    Euler,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Rk4 => "rk4",
            Method::Euler => "euler",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rk4" => Ok(Method::Rk4),
            "euler" => Ok(Method::Euler),
            _ => Err(Error::config(format!("unknown integration method `{s}`"))),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub method: Method,
    pub step: f64,
    pub horizon: f64,
    /// Record every n-th step; `t = 0` and `t = T` are always recorded.
    pub record_every: usize,
    pub seed: u64,
    /// Rescale oscillator pairs every [`RENORMALIZE_INTERVAL`] steps.
    pub renormalize: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: Method::Rk4,
            step: 1e-2,
            horizon: 1.0,
            record_every: 1,
            seed: 0,
            renormalize: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step.is_finite() && self.step > 0.0) {
            return Err(Error::invalid(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon.is_finite() && self.horizon >= self.step) {
            return Err(Error::invalid(format!(
                "horizon {} must be finite and at least one step {}",
                self.horizon, self.step
            )));
        }
        if self.record_every == 0 {
            return Err(Error::invalid("record_every must be at least 1"));
        }
        Ok(())
    }

    /// Number of steps; the last one is shortened when `T / h` is not an integer.
    pub fn n_steps(&self) -> usize {
        let n = self.horizon / self.step;
        let rounded = n.round();
        if (n - rounded).abs() <= 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }
}

/// A named scalar function of the state evaluated at recorded steps.
pub struct Observer<'a> {
    pub name: String,
    pub f: Box<dyn Fn(&[f64]) -> f64 + 'a>,
}

impl<'a> Observer<'a> {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + 'a) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }
}

/// Scalar series recorded alongside the states.
#[derive(Clone, Debug, PartialEq)]
pub struct Channel {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub state_names: Vec<String>,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub channels: Vec<Channel>,
    /// Time of the step that left the finite region, when the run was aborted.
    pub diverged_at: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn diverged(&self) -> bool {
        self.diverged_at.is_some()
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.channels
            .iter()
            .find(|c| c.name == name)
            .map(|c| c.values.as_slice())
    }

    pub fn final_time(&self) -> f64 {
        *self.times.last().expect("trajectories always record t = 0")
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectories always record t = 0")
    }

    /// Index of the recorded time closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let i = self.times.partition_point(|&s| s < t);
        if i == 0 {
            0
        } else if i == self.times.len() || (t - self.times[i - 1]) <= (self.times[i] - t) {
            i - 1
        } else {
            i
        }
    }

    /// Values of a channel at recorded times in `[from, to]`.
    pub fn window(&self, name: &str, from: f64, to: f64) -> Option<Vec<f64>> {
        let values = self.channel(name)?;
        Some(
            self.times
                .iter()
                .zip(values)
                .filter(|(t, _)| **t >= from && **t <= to)
                .map(|(_, v)| *v)
                .collect(),
        )
    }

    /// CSV with header `t,<state names>,<channel names>` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<&str> = std::iter::once("t")
            .chain(self.state_names.iter().map(String::as_str))
            .chain(self.channels.iter().map(|c| c.name.as_str()))
            .collect();
        writeln!(w, "{}", header.join(","))?;
        let mut line = String::new();
        for (k, t) in self.times.iter().enumerate() {
            line.clear();
            push_number(&mut line, *t);
            for v in &self.states[k] {
                line.push(',');
                push_number(&mut line, *v);
            }
            for c in &self.channels {
                line.push(',');
                push_number(&mut line, c.values[k]);
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }
}

pub(crate) fn push_number(line: &mut String, v: f64) {
    use std::fmt::Write as _;
    write!(line, "{v:.16e}").expect("writing to a String cannot fail");
}

/// Integrate `system` from `x0` with a fixed step.
///
/// A non-finite state, or one beyond [`DIVERGENCE_THRESHOLD`], stops the run; the
/// trajectory recorded so far is returned with `diverged_at` set.
pub fn integrate<S: OdeSystem + ?Sized>(
    system: &mut S,
    x0: &[f64],
    config: &SolverConfig,
    state_names: Vec<String>,
    observers: &[Observer<'_>],
) -> Result<Trajectory> {
    config.validate()?;
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("initial state must be finite"));
    }
    if state_names.len() != x0.len() {
        return Err(Error::Dimension {
            what: "state names",
            expected: x0.len(),
            got: state_names.len(),
        });
    }

    let n = config.n_steps();
    let h = config.step;
    let dim = x0.len();
    let mut x = x0.to_vec();
    let mut stepper = Stepper::new(dim);

    let mut traj = Trajectory {
        state_names,
        times: Vec::new(),
        states: Vec::new(),
        channels: observers
            .iter()
            .map(|o| Channel {
                name: o.name.clone(),
                values: Vec::new(),
            })
            .collect(),
        diverged_at: None,
    };
    record(&mut traj, 0.0, &x, observers);

    for k in 1..=n {
        let t_prev = (k - 1) as f64 * h;
        let t = if k == n { config.horizon } else { k as f64 * h };
        let dt = t - t_prev;
        match config.method {
            Method::Rk4 => stepper.rk4(system, &mut x, dt),
            Method::Euler => stepper.euler(system, &mut x, dt),
        }
        if x.iter().any(|v| !(v.abs() <= DIVERGENCE_THRESHOLD)) {
            traj.diverged_at = Some(t);
            return Ok(traj);
        }
        if config.renormalize && k % RENORMALIZE_INTERVAL == 0 {
            system.renormalize(&mut x)?;
        }
        if k % config.record_every == 0 || k == n {
            record(&mut traj, t, &x, observers);
        }
    }
    Ok(traj)
}

fn record(traj: &mut Trajectory, t: f64, x: &[f64], observers: &[Observer<'_>]) {
    traj.times.push(t);
    traj.states.push(x.to_vec());
    for (c, o) in traj.channels.iter_mut().zip(observers) {
        c.values.push((o.f)(x));
    }
}

struct Stepper {
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
        }
    }

    fn euler<S: OdeSystem + ?Sized>(&mut self, system: &mut S, x: &mut [f64], h: f64) {
        system.rhs(x, &mut self.k[0]);
        for (xi, ki) in x.iter_mut().zip(&self.k[0]) {
            *xi += h * ki;
        }
    }

    fn rk4<S: OdeSystem + ?Sized>(&mut self, system: &mut S, x: &mut [f64], h: f64) {
        let [k1, k2, k3, k4] = &mut self.k;
        let tmp = &mut self.tmp;

        system.rhs(x, k1);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k1[i];
        }
        system.rhs(tmp, k2);
        for i in 0..x.len() {
            tmp[i] = x[i] + 0.5 * h * k2[i];
        }
        system.rhs(tmp, k3);
        for i in 0..x.len() {
            tmp[i] = x[i] + h * k3[i];
        }
        system.rhs(tmp, k4);
        for i in 0..x.len() {
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
}

/// Rescale every `(μ_j,1, μ_j,2)` pair to unit norm.
pub fn renormalize_pairs(mu: &mut [f64]) -> Result<()> {
    if mu.len() % 2 != 0 {
        return Err(Error::invalid("oscillator state must have even length"));
    }
    for pair in mu.chunks_exact_mut(2) {
        let r = pair[0].hypot(pair[1]);
        if !(r > 1e-6) || !r.is_finite() {
            return Err(Error::Integration(format!(
                "oscillator pair collapsed to norm {r:e}"
            )));
        }
        pair[0] /= r;
        pair[1] /= r;
    }
    Ok(())
}

/// Return a copy of the controller state with unit-norm oscillator pairs.
pub fn renormalize_dither(state: &crate::controllers::EscState) -> Result<crate::controllers::EscState> {
    let mut out = state.clone();
    renormalize_pairs(&mut out.mu)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::TAU;

    fn decay(step: f64, method: Method) -> f64 {
        let cfg = SolverConfig {
            method,
            step,
            horizon: 1.0,
            ..Default::default()
        };
        let mut f = |x: &[f64], dx: &mut [f64]| dx[0] = -x[0];
        let traj = integrate(&mut f, &[1.0], &cfg, vec!["x".into()], &[]).unwrap();
        traj.final_state()[0]
    }

    #[test]
    fn exponential_decay() {
        assert!((decay(0.01, Method::Rk4) - (-1f64).exp()).abs() < 1e-7);
        // explicit Euler is only first order
        let e = (decay(0.01, Method::Euler) - (-1f64).exp()).abs();
        assert!(e > 1e-4 && e < 1e-2);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let exact = (-1f64).exp();
        let errs: Vec<f64> = [0.02, 0.01, 0.005]
            .iter()
            .map(|h| (decay(*h, Method::Rk4) - exact).abs())
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((8.0..=32.0).contains(&ratio), "ratio {ratio}");
        }
    }

    #[test]
    fn constant_trajectory() {
        let cfg = SolverConfig {
            horizon: 0.5,
            record_every: 10,
            ..Default::default()
        };
        let mut f = |_: &[f64], dx: &mut [f64]| dx.fill(0.0);
        let traj = integrate(&mut f, &[3.0, -1.0], &cfg, vec!["a".into(), "b".into()], &[]).unwrap();
        assert!(traj.states.iter().all(|s| s == &[3.0, -1.0]));
    }

    #[test]
    fn oscillator_returns_after_one_period() {
        let cfg = SolverConfig {
            step: 1e-3,
            horizon: 1.0,
            record_every: 1000,
            ..Default::default()
        };
        let mut f = |x: &[f64], dx: &mut [f64]| {
            dx[0] = -TAU * x[1];
            dx[1] = TAU * x[0];
        };
        let traj = integrate(&mut f, &[1.0, 0.0], &cfg, vec!["c".into(), "s".into()], &[]).unwrap();
        let end = traj.final_state();
        assert!((end[0] - 1.0).abs() < 1e-6 && end[1].abs() < 1e-6);
    }

    #[test]
    fn records_endpoints_and_stride() {
        let cfg = SolverConfig {
            step: 0.1,
            horizon: 1.05,
            record_every: 4,
            ..Default::default()
        };
        let mut f = |x: &[f64], dx: &mut [f64]| dx[0] = x[0];
        let obs = [Observer::new("double", |x: &[f64]| 2.0 * x[0])];
        let traj = integrate(&mut f, &[1.0], &cfg, vec!["x".into()], &obs).unwrap();
        assert_eq!(cfg.n_steps(), 11);
        let expect = [0.0, 0.4, 0.8, 1.05];
        assert_eq!(traj.len(), expect.len());
        for (t, e) in traj.times.iter().zip(expect) {
            assert!((t - e).abs() < 1e-12);
        }
        assert!((traj.final_state()[0] - 1.05f64.exp()).abs() < 1e-5);
        let doubled = traj.channel("double").unwrap();
        for (s, d) in traj.states.iter().zip(doubled) {
            assert_eq!(2.0 * s[0], *d);
        }
    }

    #[test]
    fn divergence_aborts_with_partial_trajectory() {
        let cfg = SolverConfig {
            step: 0.01,
            horizon: 10.0,
            ..Default::default()
        };
        // finite-time blow-up at t = 1
        let mut f = |x: &[f64], dx: &mut [f64]| dx[0] = x[0] * x[0];
        let traj = integrate(&mut f, &[1.0], &cfg, vec!["x".into()], &[]).unwrap();
        let t = traj.diverged_at.unwrap();
        assert!(t > 0.9 && t < 1.1, "{t}");
        assert!(traj.final_time() < t);
        assert!(traj.final_state()[0].is_finite());
    }

    #[test]
    fn invalid_configs() {
        let mut f = |_: &[f64], dx: &mut [f64]| dx.fill(0.0);
        let bad = [
            SolverConfig { step: 0.0, ..Default::default() },
            SolverConfig { step: 2.0, horizon: 1.0, ..Default::default() },
            SolverConfig { record_every: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(integrate(&mut f, &[0.0], &cfg, vec!["x".into()], &[]).is_err());
        }
        assert!(integrate(&mut f, &[f64::NAN], &SolverConfig::default(), vec!["x".into()], &[]).is_err());
    }

    #[test]
    fn renormalization() {
        let mut mu = vec![2.0, 0.0, 0.6, 0.8, 3.0, 4.0];
        renormalize_pairs(&mut mu).unwrap();
        let expect = [1.0, 0.0, 0.6, 0.8, 0.6, 0.8];
        for (a, b) in mu.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(renormalize_pairs(&mut [0.0, 1e-9]).is_err());
        assert!(renormalize_pairs(&mut [1.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let traj = Trajectory {
            state_names: vec!["x".into()],
            times: vec![0.0, 0.5],
            states: vec![vec![1.0], vec![1.0 / 3.0]],
            channels: vec![Channel {
                name: "v".into(),
                values: vec![2.0, 0.1],
            }],
            diverged_at: None,
        };
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,x,v");
        let row: Vec<f64> = lines[2].split(',').map(|s| s.parse().unwrap()).collect();
        assert_eq!(row, vec![0.5, 1.0 / 3.0, 0.1]);
        assert_eq!(lines[2].split(',').nth(1).unwrap(), "3.3333333333333331e-1");
    }
}
