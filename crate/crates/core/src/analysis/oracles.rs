use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};
use crate::games::{dot, GameSpec};

/// Sampled inner products below this are reported as monotonicity violations.
pub const VIOLATION_TOL: f64 = -1e-9;

/// Central differences of each `J_i` in agent `i`'s own coordinates.
pub fn finite_diff_pseudogradient(game: &GameSpec, u: &[f64], step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) {
        return Err(Error::invalid(format!("difference step must be positive, got {step}")));
    }
    check_len("joint action", game.dim(), u.len())?;
    let mut x = u.to_vec();
    let mut out = vec![0.0; u.len()];
    for i in 0..game.n_agents() {
        for j in game.block(i) {
            x[j] = u[j] + step;
            let up = game.cost_unchecked(i, &x);
            x[j] = u[j] - step;
            let down = game.cost_unchecked(i, &x);
            x[j] = u[j];
            out[j] = (up - down) / (2.0 * step);
        }
    }
    Ok(out)
}

/// Outcome of sampling `⟨u - v, F(u) - F(v)⟩` over random pairs.
#[derive(Clone, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub n_pairs: usize,
    pub min_inner_product: f64,
    /// The pair attaining the minimum, if it falls below [`VIOLATION_TOL`].
    pub violating_pair: Option<(Vec<f64>, Vec<f64>)>,
}

impl MonotonicityReport {
    pub fn is_monotone(&self) -> bool {
        self.violating_pair.is_none()
    }
}

impl fmt::Display for MonotonicityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pairs {}", self.n_pairs)?;
        writeln!(f, "min_inner_product {:e}", self.min_inner_product)?;
        match &self.violating_pair {
            None => writeln!(f, "violation none"),
            Some((u, v)) => writeln!(f, "violation u={u:?} v={v:?}"),
        }
    }
}

/// Sample `n_pairs` uniform pairs in the box `[lower, upper]^m`.
pub fn monotonicity_probe(
    game: &GameSpec,
    n_pairs: usize,
    lower: f64,
    upper: f64,
    seed: u64,
) -> Result<MonotonicityReport> {
    if !(lower < upper) {
        return Err(Error::invalid("probe box needs lower < upper"));
    }
    let m = game.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..m).map(|_| rng.random_range(lower..upper)).collect() };
    let mut best = f64::INFINITY;
    let mut worst_pair = None;
    for _ in 0..n_pairs {
        let (u, v) = (draw(&mut rng), draw(&mut rng));
        let fu = game.pseudogradient(&u)?;
        let fv = game.pseudogradient(&v)?;
        let du: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a - b).collect();
        let df: Vec<f64> = fu.iter().zip(&fv).map(|(a, b)| a - b).collect();
        let ip = dot(&du, &df);
        if ip < best {
            best = ip;
            worst_pair = Some((u, v));
        }
    }
    Ok(MonotonicityReport {
        n_pairs,
        min_inner_product: best,
        violating_pair: if best < VIOLATION_TOL { worst_pair } else { None },
    })
}
