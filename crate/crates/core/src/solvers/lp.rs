//! Linear programs `min cᵀx  s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq` with
//! per-variable sign restrictions, solved by the dense simplex core.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::simplex::{solve_standard, StdOutcome};
use crate::error::{Error, Result};
use crate::linalg::{serde_mat, serde_vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarBound {
    #[default]
    Free,
    NonNegative,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpProblem {
    #[serde(with = "serde_vec")]
    pub c: DVector<f64>,
    #[serde(with = "serde_mat")]
    pub a_ineq: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub b_ineq: DVector<f64>,
    #[serde(with = "serde_mat")]
    pub a_eq: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub b_eq: DVector<f64>,
    /// Sign restriction per variable; empty means all free.
    #[serde(default)]
    pub bounds: Vec<VarBound>,
}

/// Residuals of the returned primal/dual pair, recomputed from the data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpCertificate {
    /// Multipliers of `A_ineq x <= b_ineq` (nonnegative).
    #[serde(with = "serde_vec")]
    pub ineq_duals: DVector<f64>,
    /// Multipliers of `A_eq x = b_eq`.
    #[serde(with = "serde_vec")]
    pub eq_duals: DVector<f64>,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub complementarity: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LpSolution {
    #[serde(with = "serde_vec")]
    pub x: DVector<f64>,
    pub objective: f64,
    pub certificate: LpCertificate,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum LpOutcome {
    Optimal(LpSolution),
    Infeasible,
    Unbounded,
}

impl LpOutcome {
    pub fn optimal(self) -> Option<LpSolution> {
        match self {
            LpOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }
}

impl LpProblem {
    /// Problem with only inequality rows and free variables.
    pub fn inequality(c: DVector<f64>, a_ineq: DMatrix<f64>, b_ineq: DVector<f64>) -> Self {
        let n = c.len();
        LpProblem {
            c,
            a_ineq,
            b_ineq,
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
            bounds: Vec::new(),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.c.len()
    }

    fn bound(&self, j: usize) -> VarBound {
        self.bounds.get(j).copied().unwrap_or_default()
    }

    fn validate(&self) -> Result<()> {
        let n = self.c.len();
        let ok = self.a_ineq.ncols() == n
            && self.a_eq.ncols() == n
            && self.a_ineq.nrows() == self.b_ineq.len()
            && self.a_eq.nrows() == self.b_eq.len()
            && (self.bounds.is_empty() || self.bounds.len() == n);
        if !ok {
            return Err(Error::DimensionMismatch("LP data shapes are inconsistent".into()));
        }
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.b_ineq.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite())
            && self.a_ineq.iter().all(|v| v.is_finite())
            && self.a_eq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("LP data has non-finite entries".into()));
        }
        Ok(())
    }

    /// Residuals of a candidate primal/dual pair.
    pub fn certify(&self, x: &DVector<f64>, mu: &DVector<f64>, nu: &DVector<f64>) -> LpCertificate {
        let mut primal: f64 = 0.0;
        let slack = &self.b_ineq - &self.a_ineq * x;
        for s in slack.iter() {
            primal = primal.max(-s);
        }
        for r in (&self.a_eq * x - &self.b_eq).iter() {
            primal = primal.max(r.abs());
        }
        for j in 0..x.len() {
            if self.bound(j) == VarBound::NonNegative {
                primal = primal.max(-x[j]);
            }
        }
        // c + A_ineqᵀ μ - A_eqᵀ ν = r, with r >= 0 on sign-restricted variables.
        let r = &self.c + self.a_ineq.transpose() * mu - self.a_eq.transpose() * nu;
        let mut dual: f64 = mu.iter().fold(0.0, |a, &m| a.max(-m));
        let mut comp: f64 = 0.0;
        for j in 0..r.len() {
            match self.bound(j) {
                VarBound::Free => dual = dual.max(r[j].abs()),
                VarBound::NonNegative => {
                    dual = dual.max(-r[j]);
                    comp = comp.max((r[j] * x[j]).abs());
                }
            }
        }
        for i in 0..mu.len() {
            comp = comp.max((mu[i] * slack[i]).abs());
        }
        LpCertificate {
            ineq_duals: mu.clone(),
            eq_duals: nu.clone(),
            primal_residual: primal,
            dual_residual: dual,
            complementarity: comp,
        }
    }
}

/// Solves the LP. Deterministic for a fixed input.
pub fn solve_lp(p: &LpProblem) -> Result<LpOutcome> {
    p.validate()?;
    let n = p.num_vars();
    let mi = p.a_ineq.nrows();
    let me = p.a_eq.nrows();

    // Column map: free variables split into (+, -), then one slack per inequality.
    let mut col_of = Vec::with_capacity(n);
    let mut ncols = 0;
    for j in 0..n {
        match p.bound(j) {
            VarBound::Free => {
                col_of.push((ncols, Some(ncols + 1)));
                ncols += 2;
            }
            VarBound::NonNegative => {
                col_of.push((ncols, None));
                ncols += 1;
            }
        }
    }
    let slack0 = ncols;
    ncols += mi;
    let rows = mi + me;
    let mut a = DMatrix::zeros(rows, ncols);
    let mut b = DVector::zeros(rows);
    let mut c = DVector::zeros(ncols);
    for j in 0..n {
        let (pos, neg) = col_of[j];
        c[pos] = p.c[j];
        if let Some(ng) = neg {
            c[ng] = -p.c[j];
        }
        for i in 0..mi {
            a[(i, pos)] = p.a_ineq[(i, j)];
            if let Some(ng) = neg {
                a[(i, ng)] = -p.a_ineq[(i, j)];
            }
        }
        for i in 0..me {
            a[(mi + i, pos)] = p.a_eq[(i, j)];
            if let Some(ng) = neg {
                a[(mi + i, ng)] = -p.a_eq[(i, j)];
            }
        }
    }
    for i in 0..mi {
        a[(i, slack0 + i)] = 1.0;
        b[i] = p.b_ineq[i];
    }
    for i in 0..me {
        b[mi + i] = p.b_eq[i];
    }

    match solve_standard(&a, &b, &c) {
        StdOutcome::Optimal {
            y,
            duals,
            iterations,
            ..
        } => {
            let x = DVector::from_iterator(
                n,
                col_of
                    .iter()
                    .map(|&(pos, neg)| y[pos] - neg.map_or(0.0, |ng| y[ng])),
            );
            let mu = DVector::from_iterator(mi, (0..mi).map(|i| (-duals[i]).max(0.0)));
            let nu = DVector::from_iterator(me, (0..me).map(|i| duals[mi + i]));
            let certificate = p.certify(&x, &mu, &nu);
            let objective = p.c.dot(&x);
            Ok(LpOutcome::Optimal(LpSolution {
                x,
                objective,
                certificate,
                iterations,
            }))
        }
        StdOutcome::Infeasible => Ok(LpOutcome::Infeasible),
        StdOutcome::Unbounded => Ok(LpOutcome::Unbounded),
        StdOutcome::IterationLimit => Err(Error::numerical(
            "lp",
            "simplex iteration limit or singular basis",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn min_x_with_lower_bound() {
        // min x s.t. -x <= -1
        let p = LpProblem::inequality(dv(&[1.0]), DMatrix::from_element(1, 1, -1.0), dv(&[-1.0]));
        let s = solve_lp(&p).unwrap().optimal().unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.certificate.ineq_duals[0] - 1.0).abs() < 1e-12);
        assert!(s.certificate.dual_residual < 1e-12);
    }

    #[test]
    fn infeasible_pair() {
        let a = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        let p = LpProblem::inequality(dv(&[0.0]), a, dv(&[0.0, -1.0]));
        assert!(matches!(solve_lp(&p).unwrap(), LpOutcome::Infeasible));
    }

    #[test]
    fn unbounded_direction() {
        let p = LpProblem::inequality(dv(&[-1.0]), DMatrix::from_element(1, 1, -1.0), dv(&[0.0]));
        assert!(matches!(solve_lp(&p).unwrap(), LpOutcome::Unbounded));
    }

    #[test]
    fn equality_and_nonnegativity() {
        // min x0 + 2 x1 s.t. x0 + x1 = 1, x >= 0
        let mut p = LpProblem::inequality(dv(&[1.0, 2.0]), DMatrix::zeros(0, 2), dv(&[]));
        p.a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        p.b_eq = dv(&[1.0]);
        p.bounds = vec![VarBound::NonNegative; 2];
        let s = solve_lp(&p).unwrap().optimal().unwrap();
        assert!((s.objective - 1.0).abs() < 1e-12);
        assert!(s.certificate.complementarity < 1e-12);
    }

    #[test]
    fn shape_errors() {
        let p = LpProblem::inequality(dv(&[1.0, 1.0]), DMatrix::zeros(1, 3), dv(&[1.0]));
        assert!(matches!(solve_lp(&p), Err(Error::DimensionMismatch(_))));
    }
}
