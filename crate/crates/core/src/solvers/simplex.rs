//! Dense two-phase tableau simplex for `min cᵀy  s.t.  A y = b, y >= 0`.
//!
//! Dantzig pricing with a switch to Bland's rule after a run of degenerate
//! pivots. The final basis is refactored from the original data, so returned
//! primal values and duals do not carry tableau drift.

use nalgebra::{DMatrix, DVector};

const PIVOT_TOL: f64 = 1e-9;
const DEGENERATE_RUN: usize = 40;
const REFACTOR_ROUNDS: usize = 4;

#[derive(Debug, Clone)]
pub(crate) enum StdOutcome {
    Optimal {
        y: DVector<f64>,
        /// Equality-row duals `π` with `c - Aᵀπ >= 0` (zero on redundant rows).
        duals: DVector<f64>,
        objective: f64,
        iterations: usize,
    },
    Infeasible,
    Unbounded,
    IterationLimit,
}

struct Tableau {
    rows: usize,
    cols: usize, // structural columns (excluding rhs)
    t: Vec<f64>,  // rows x (cols + 1)
    obj: Vec<f64>, // reduced costs, last entry is -objective
    basis: Vec<usize>,
}

impl Tableau {
    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.cols + 1) + j]
    }

    #[inline]
    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.cols)
    }

    fn pivot(&mut self, r: usize, c: usize) {
        let w = self.cols + 1;
        let p = self.t[r * w + c];
        for j in 0..w {
            self.t[r * w + j] /= p;
        }
        let (before, rest) = self.t.split_at_mut(r * w);
        let (prow, after) = rest.split_at_mut(w);
        for row in before.chunks_mut(w).chain(after.chunks_mut(w)) {
            let f = row[c];
            if f != 0.0 {
                for (x, &pv) in row.iter_mut().zip(prow.iter()) {
                    *x -= f * pv;
                }
                row[c] = 0.0;
            }
        }
        let f = self.obj[c];
        if f != 0.0 {
            for (x, &pv) in self.obj.iter_mut().zip(prow.iter()) {
                *x -= f * pv;
            }
            self.obj[c] = 0.0;
        }
        self.basis[r] = c;
    }

    /// Runs simplex iterations over the columns `allowed` until optimal.
    /// With `skip_rays`, columns without a pivot row are treated as numerical
    /// noise and excluded (phase one is bounded, so such rays cannot be real).
    fn optimize(&mut self, allowed: usize, dual_tol: f64, skip_rays: bool, budget: &mut usize) -> Step {
        let mut degenerate = 0usize;
        let mut blocked = vec![false; allowed];
        loop {
            if *budget == 0 {
                return Step::Limit;
            }
            *budget -= 1;
            let bland = degenerate >= DEGENERATE_RUN;
            let mut enter = None;
            let mut best = -dual_tol;
            for j in 0..allowed {
                if blocked[j] {
                    continue;
                }
                let d = self.obj[j];
                if d < best {
                    enter = Some(j);
                    if bland {
                        break;
                    }
                    best = d;
                }
            }
            let Some(c) = enter else {
                return Step::Optimal;
            };
            let mut leave: Option<usize> = None;
            let mut ratio = f64::INFINITY;
            for i in 0..self.rows {
                let a = self.at(i, c);
                if a > PIVOT_TOL {
                    let q = self.rhs(i).max(0.0) / a;
                    let better = match leave {
                        None => true,
                        Some(l) => {
                            q < ratio - 1e-12 * (1.0 + ratio.abs())
                                || (q <= ratio + 1e-12 * (1.0 + ratio.abs())
                                    && self.basis[i] < self.basis[l])
                        }
                    };
                    if better {
                        leave = Some(i);
                        ratio = ratio.min(q);
                    }
                }
            }
            let Some(r) = leave else {
                if skip_rays {
                    blocked[c] = true;
                    continue;
                }
                return Step::Unbounded;
            };
            if ratio <= 1e-14 {
                degenerate += 1;
            } else {
                degenerate = 0;
            }
            self.pivot(r, c);
        }
    }
}

enum Step {
    Optimal,
    Unbounded,
    Limit,
}

/// Solves the standard-form LP. Rows of `a` may be linearly dependent.
pub(crate) fn solve_standard(a: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> StdOutcome {
    let (m, n) = a.shape();
    debug_assert_eq!(b.len(), m);
    debug_assert_eq!(c.len(), n);
    if m == 0 {
        return if c.iter().any(|&v| v < 0.0) {
            StdOutcome::Unbounded
        } else {
            StdOutcome::Optimal {
                y: DVector::zeros(n),
                duals: DVector::zeros(0),
                objective: 0.0,
                iterations: 0,
            }
        };
    }

    let scale_b = b.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let scale_c = c.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let dual_tol = 1e-10 * scale_c;
    let mut budget = 50 * (m + n) + 1000;
    let mut iterations_used = budget;

    // Phase 1: [A | I | b] with b >= 0.
    let cols = n + m;
    let w = cols + 1;
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        let s = if b[i] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..n {
            t[i * w + j] = s * a[(i, j)];
        }
        t[i * w + n + i] = 1.0;
        t[i * w + cols] = s * b[i];
    }
    let mut obj = vec![0.0; w];
    for i in 0..m {
        for j in 0..n {
            obj[j] -= t[i * w + j];
        }
        obj[cols] -= t[i * w + cols];
    }
    let mut tab = Tableau {
        rows: m,
        cols,
        t,
        obj,
        basis: (n..n + m).collect(),
    };
    match tab.optimize(cols, 1e-12, true, &mut budget) {
        Step::Optimal => {}
        Step::Unbounded => unreachable!("phase one objective is bounded below"),
        Step::Limit => return StdOutcome::IterationLimit,
    }
    if -tab.obj[cols] > 1e-9 * scale_b {
        return StdOutcome::Infeasible;
    }

    // Drive artificial columns out of the basis; rows where that is
    // impossible are linearly dependent and get dropped.
    let mut keep_row = vec![true; m];
    for i in 0..m {
        if tab.basis[i] >= n {
            let mut best: Option<(usize, f64)> = None;
            for j in 0..n {
                let v = tab.at(i, j).abs();
                if v > PIVOT_TOL && best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((j, v));
                }
            }
            match best {
                Some((j, _)) => tab.pivot(i, j),
                None => keep_row[i] = false,
            }
        }
    }

    let rows: Vec<usize> = (0..m).filter(|&i| keep_row[i]).collect();
    let mut basis: Vec<usize> = rows.iter().map(|&i| tab.basis[i]).collect();
    let a_r = a.select_rows(&rows);
    let b_r = b.select_rows(&rows);

    for _ in 0..REFACTOR_ROUNDS {
        let Some(mut tab) = tableau_from_basis(&a_r, &b_r, c, &basis) else {
            return StdOutcome::IterationLimit;
        };
        match tab.optimize(n, dual_tol, false, &mut budget) {
            Step::Optimal => {}
            Step::Unbounded => return StdOutcome::Unbounded,
            Step::Limit => return StdOutcome::IterationLimit,
        }
        basis = tab.basis.clone();
        if let Some((y, pi_r, objective, ok)) = extract(&a_r, &b_r, c, &basis, dual_tol) {
            if ok {
                let mut duals = DVector::zeros(m);
                for (k, &i) in rows.iter().enumerate() {
                    duals[i] = pi_r[k];
                }
                iterations_used -= budget;
                return StdOutcome::Optimal {
                    y,
                    duals,
                    objective,
                    iterations: iterations_used,
                };
            }
        }
    }
    StdOutcome::IterationLimit
}

fn tableau_from_basis(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    basis: &[usize],
) -> Option<Tableau> {
    let (m, n) = a.shape();
    let ab = a.select_columns(basis);
    let lu = ab.lu();
    let binv_a = lu.solve(a)?;
    let binv_b = lu.solve(b)?;
    let w = n + 1;
    let mut t = vec![0.0; m * w];
    for i in 0..m {
        for j in 0..n {
            t[i * w + j] = binv_a[(i, j)];
        }
        t[i * w + n] = binv_b[i];
    }
    for (i, &bj) in basis.iter().enumerate() {
        for k in 0..m {
            t[k * w + bj] = if k == i { 1.0 } else { 0.0 };
        }
    }
    let mut obj = vec![0.0; w];
    for j in 0..n {
        let mut d = c[j];
        for i in 0..m {
            d -= c[basis[i]] * t[i * w + j];
        }
        obj[j] = d;
    }
    let mut val = 0.0;
    for i in 0..m {
        val += c[basis[i]] * t[i * w + n];
    }
    obj[n] = -val;
    for &bj in basis {
        obj[bj] = 0.0;
    }
    Some(Tableau {
        rows: m,
        cols: n,
        t,
        obj,
        basis: basis.to_vec(),
    })
}

/// Recomputes `(y, π, objective)` from the basis and reports whether the
/// point is primal and dual feasible at the working tolerances.
fn extract(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
    basis: &[usize],
    dual_tol: f64,
) -> Option<(DVector<f64>, DVector<f64>, f64, bool)> {
    let n = a.ncols();
    let ab = a.select_columns(basis);
    let lu = ab.clone().lu();
    let yb = lu.solve(b)?;
    let cb = DVector::from_iterator(basis.len(), basis.iter().map(|&j| c[j]));
    let pi = ab.transpose().lu().solve(&cb)?;
    let scale_b = b.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let mut ok = yb.iter().all(|&v| v >= -1e-9 * scale_b);
    let mut y = DVector::zeros(n);
    for (k, &j) in basis.iter().enumerate() {
        y[j] = yb[k].max(0.0);
    }
    let reduced = c - a.transpose() * &pi;
    ok &= reduced.iter().all(|&d| d >= -10.0 * dual_tol);
    let objective = c.dot(&y);
    Some((y, pi, objective, ok))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_standard_lp() {
        // min -x1 - x2 s.t. x1 + s1 = 1, x2 + s2 = 2
        let a = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let c = DVector::from_vec(vec![-1.0, -1.0, 0.0, 0.0]);
        match solve_standard(&a, &b, &c) {
            StdOutcome::Optimal { y, objective, .. } => {
                assert!((objective + 3.0).abs() < 1e-12);
                assert!((y[0] - 1.0).abs() < 1e-12 && (y[1] - 2.0).abs() < 1e-12);
            }
            o => panic!("unexpected {o:?}"),
        }
    }

    #[test]
    fn redundant_rows_are_tolerated() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 2.0, 2.0]);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let c = DVector::from_vec(vec![1.0, 2.0]);
        match solve_standard(&a, &b, &c) {
            StdOutcome::Optimal { objective, .. } => assert!((objective - 1.0).abs() < 1e-12),
            o => panic!("unexpected {o:?}"),
        }
    }

    #[test]
    fn detects_infeasible_and_unbounded() {
        let a = DMatrix::from_row_slice(1, 1, &[1.0]);
        let b = DVector::from_vec(vec![-1.0]);
        let c = DVector::from_vec(vec![1.0]);
        assert!(matches!(solve_standard(&a, &b, &c), StdOutcome::Infeasible));
        let a = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![0.0]);
        let c = DVector::from_vec(vec![-1.0, 0.0]);
        assert!(matches!(solve_standard(&a, &b, &c), StdOutcome::Unbounded));
    }
}
