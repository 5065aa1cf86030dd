//! Geometric LPs solved through their duals. For `max cᵀx s.t. F x <= g`
//! the dual `min gᵀy s.t. Fᵀy = c, y >= 0` has only `n` equality rows, which
//! keeps the tableau tiny when the polytope has many rows.

use nalgebra::{DMatrix, DVector};

use super::HPolytope;
use crate::error::{Error, Result};
use crate::solvers::simplex::{solve_standard, StdOutcome};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    Bounded(f64),
    Unbounded,
    Empty,
}

impl Support {
    pub fn value(self) -> Result<f64> {
        match self {
            Support::Bounded(v) => Ok(v),
            Support::Unbounded => Err(Error::UnboundedPolytope),
            Support::Empty => Err(Error::EmptyPolytope),
        }
    }
}

/// Support function `h_P(c) = max{cᵀx : x ∈ P}`.
pub fn support(p: &HPolytope, c: &DVector<f64>) -> Result<Support> {
    support_rows(p.f(), p.g(), c, None)
}

/// Support over the rows of `(f, g)`, optionally skipping row `skip`.
pub(crate) fn support_rows(
    f: &DMatrix<f64>,
    g: &DVector<f64>,
    c: &DVector<f64>,
    skip: Option<usize>,
) -> Result<Support> {
    let n = f.ncols();
    if c.len() != n {
        return Err(Error::DimensionMismatch("support direction has wrong length".into()));
    }
    let rows: Vec<usize> = (0..f.nrows()).filter(|&i| Some(i) != skip).collect();
    let m = rows.len();
    let mut a = DMatrix::zeros(n, m);
    let mut cost = DVector::zeros(m);
    for (k, &i) in rows.iter().enumerate() {
        for j in 0..n {
            a[(j, k)] = f[(i, j)];
        }
        cost[k] = g[i];
    }
    match solve_standard(&a, c, &cost) {
        StdOutcome::Optimal { objective, .. } => Ok(Support::Bounded(objective)),
        StdOutcome::Unbounded => Ok(Support::Empty),
        StdOutcome::Infeasible => {
            if radius_rows(f, g, &rows)? < -1e-9 {
                Ok(Support::Empty)
            } else {
                Ok(Support::Unbounded)
            }
        }
        StdOutcome::IterationLimit => Err(Error::numerical("support", "simplex failed")),
    }
}

/// Radius of the largest inscribed ball (`+∞` if unbounded, negative if empty).
pub fn chebyshev_radius(p: &HPolytope) -> Result<f64> {
    let rows: Vec<usize> = (0..p.num_rows()).collect();
    radius_rows(p.f(), p.g(), &rows)
}

fn radius_rows(f: &DMatrix<f64>, g: &DVector<f64>, rows: &[usize]) -> Result<f64> {
    let n = f.ncols();
    let m = rows.len();
    if m == 0 {
        return Ok(f64::INFINITY);
    }
    // min gᵀy s.t. Fᵀy = 0, 1ᵀy = 1, y >= 0  (dual of max r s.t. Fx + r 1 <= g)
    let mut a = DMatrix::zeros(n + 1, m);
    let mut cost = DVector::zeros(m);
    for (k, &i) in rows.iter().enumerate() {
        for j in 0..n {
            a[(j, k)] = f[(i, j)];
        }
        a[(n, k)] = 1.0;
        cost[k] = g[i];
    }
    let mut b = DVector::zeros(n + 1);
    b[n] = 1.0;
    match solve_standard(&a, &b, &cost) {
        StdOutcome::Optimal { objective, .. } => Ok(objective),
        StdOutcome::Infeasible => Ok(f64::INFINITY),
        StdOutcome::Unbounded => Err(Error::numerical("chebyshev", "dual unbounded")),
        StdOutcome::IterationLimit => Err(Error::numerical("chebyshev", "simplex failed")),
    }
}

pub(crate) fn is_empty(p: &HPolytope) -> Result<bool> {
    Ok(chebyshev_radius(p)? < -1e-9)
}
