use crate::error::{check_len, Error, Result};
use crate::games::dot;

/// Closed convex set with a closed-form Euclidean projection.
#[derive(Clone, Debug, PartialEq)]
pub enum ConstraintSet {
    /// `{x : lower <= x <= upper}`; infinite bounds are allowed.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// `{x : <normal, x> <= offset}`.
    Halfspace { normal: Vec<f64>, offset: f64 },
}

impl ConstraintSet {
    /// The whole space `R^m`.
    pub fn unconstrained(m: usize) -> Self {
        ConstraintSet::Box {
            lower: vec![f64::NEG_INFINITY; m],
            upper: vec![f64::INFINITY; m],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ConstraintSet::Box { lower, .. } => lower.len(),
            ConstraintSet::Halfspace { normal, .. } => normal.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ConstraintSet::Box { lower, upper } => {
                check_len("box upper bound", lower.len(), upper.len())?;
                if lower.iter().zip(upper).any(|(l, u)| !(l <= u)) {
                    return Err(Error::EmptySet);
                }
            }
            ConstraintSet::Halfspace { normal, offset } => {
                if offset.is_nan() || normal.iter().any(|v| !v.is_finite()) {
                    return Err(Error::invalid("halfspace must have finite normal and offset"));
                }
                // a zero normal describes either R^m or the empty set
                if dot(normal, normal) == 0.0 && *offset < 0.0 {
                    return Err(Error::EmptySet);
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            ConstraintSet::Box { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(v, (l, u))| *v >= l - tol && *v <= u + tol),
            ConstraintSet::Halfspace { normal, offset } => dot(normal, x) <= offset + tol,
        }
    }

    pub fn project_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ConstraintSet::Box { lower, upper } => {
                for j in 0..x.len() {
                    out[j] = x[j].clamp(lower[j], upper[j]);
                }
            }
            ConstraintSet::Halfspace { normal, offset } => {
                let nn = dot(normal, normal);
                let excess = dot(normal, x) - offset;
                out.copy_from_slice(x);
                if excess > 0.0 && nn > 0.0 {
                    let t = excess / nn;
                    for (o, n) in out.iter_mut().zip(normal) {
                        *o -= t * n;
                    }
                }
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.project_into(x, &mut out);
        out
    }
}
