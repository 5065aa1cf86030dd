//! Dense convex QP `min ½xᵀHx + fᵀx  s.t.  A_ineq x <= b_ineq,  A_eq x = b_eq`.
//!
//! Dual active-set method (Goldfarb–Idnani): start from the unconstrained
//! minimizer and add the most violated constraint until the iterate is primal
//! feasible, dropping active constraints whose multipliers would turn negative.
//! Iterates stay dual feasible, so infeasibility is detected when a violated
//! constraint cannot be added. Positive semidefinite `H` is handled with an
//! outer proximal-point loop.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, serde_mat, serde_vec, symmetrize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpProblem {
    #[serde(with = "serde_mat")]
    pub h: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub f: DVector<f64>,
    #[serde(with = "serde_mat")]
    pub a_ineq: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub b_ineq: DVector<f64>,
    #[serde(with = "serde_mat")]
    pub a_eq: DMatrix<f64>,
    #[serde(with = "serde_vec")]
    pub b_eq: DVector<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct QpSolution {
    #[serde(with = "serde_vec")]
    pub x: DVector<f64>,
    pub objective: f64,
    /// Multipliers of the inequality rows (nonnegative).
    #[serde(with = "serde_vec")]
    pub ineq_duals: DVector<f64>,
    #[serde(with = "serde_vec")]
    pub eq_duals: DVector<f64>,
    /// Indices of inequality rows in the final active set.
    pub active: Vec<usize>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum QpOutcome {
    Optimal(QpSolution),
    Infeasible,
}

impl QpOutcome {
    pub fn optimal(self) -> Option<QpSolution> {
        match self {
            QpOutcome::Optimal(s) => Some(s),
            QpOutcome::Infeasible => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct QpOptions {
    /// Feasibility tolerance on constraint violation, relative to `1 + |b_i|`.
    pub feas_tol: f64,
    pub max_iter: usize,
}

impl Default for QpOptions {
    fn default() -> Self {
        QpOptions {
            feas_tol: 1e-10,
            max_iter: 10_000,
        }
    }
}

impl QpProblem {
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Self {
        let n = f.len();
        QpProblem {
            h,
            f,
            a_ineq: DMatrix::zeros(0, n),
            b_ineq: DVector::zeros(0),
            a_eq: DMatrix::zeros(0, n),
            b_eq: DVector::zeros(0),
        }
    }

    pub fn num_vars(&self) -> usize {
        self.f.len()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.f.dot(x)
    }

    fn validate(&self) -> Result<()> {
        let n = self.f.len();
        let ok = self.h.shape() == (n, n)
            && self.a_ineq.ncols() == n
            && self.a_eq.ncols() == n
            && self.a_ineq.nrows() == self.b_ineq.len()
            && self.a_eq.nrows() == self.b_eq.len();
        if !ok {
            return Err(Error::DimensionMismatch("QP data shapes are inconsistent".into()));
        }
        let scale = 1.0 + crate::linalg::max_abs(&self.h);
        if (&self.h - self.h.transpose()).amax() > 1e-9 * scale {
            return Err(Error::InvalidInput("QP Hessian is not symmetric".into()));
        }
        if n > 0 && min_eigenvalue(&self.h) < -1e-9 * scale {
            return Err(Error::InvalidInput("QP Hessian is not positive semidefinite".into()));
        }
        Ok(())
    }

    /// Max violation of stationarity, primal feasibility, dual sign and complementarity.
    pub fn kkt_residual(&self, x: &DVector<f64>, mu: &DVector<f64>, nu: &DVector<f64>) -> f64 {
        let grad = &self.h * x + &self.f + self.a_ineq.transpose() * mu + self.a_eq.transpose() * nu;
        let mut r = crate::linalg::inf_norm(&grad);
        let slack = &self.b_ineq - &self.a_ineq * x;
        for i in 0..slack.len() {
            r = r.max(-slack[i]).max(-mu[i]).max((mu[i] * slack[i]).abs());
        }
        for v in (&self.a_eq * x - &self.b_eq).iter() {
            r = r.max(v.abs());
        }
        r
    }
}

pub fn solve_qp(p: &QpProblem) -> Result<QpOutcome> {
    solve_qp_with(p, &QpOptions::default())
}

pub fn solve_qp_with(p: &QpProblem, opts: &QpOptions) -> Result<QpOutcome> {
    p.validate()?;
    let n = p.num_vars();
    if n == 0 {
        return Ok(QpOutcome::Optimal(QpSolution {
            x: DVector::zeros(0),
            objective: 0.0,
            ineq_duals: DVector::zeros(p.a_ineq.nrows()),
            eq_duals: DVector::zeros(p.a_eq.nrows()),
            active: Vec::new(),
            kkt_residual: 0.0,
            iterations: 0,
        }));
    }
    let h = symmetrize(&p.h);
    if let Some(chol) = Cholesky::new(h.clone()) {
        let scale = h.diagonal().amax().max(1e-300);
        let dmin = chol.l_dirty().diagonal().iter().fold(f64::INFINITY, |a, &d| a.min(d * d));
        if dmin > 1e-12 * scale {
            return dual_active_set(p, &p.f, &chol, opts);
        }
    }
    proximal(p, &h, opts)
}

/// Proximal-point outer loop for merely semidefinite Hessians.
fn proximal(p: &QpProblem, h: &DMatrix<f64>, opts: &QpOptions) -> Result<QpOutcome> {
    let n = p.num_vars();
    let rho = 1e-3 * (1.0 + h.diagonal().amax());
    let hr = h + DMatrix::identity(n, n) * rho;
    let chol = Cholesky::new(hr.clone()).ok_or_else(|| Error::numerical("qp", "regularized Hessian not PD"))?;
    let mut x = DVector::zeros(n);
    let mut last = None;
    for outer in 0..5000 {
        let f = &p.f - &x * rho;
        match dual_active_set(p, &f, &chol, opts)? {
            QpOutcome::Infeasible => return Ok(QpOutcome::Infeasible),
            QpOutcome::Optimal(s) => {
                let step = (&s.x - &x).amax();
                x = s.x.clone();
                let mu = s.ineq_duals.clone();
                let nu = s.eq_duals.clone();
                let kkt = p.kkt_residual(&x, &mu, &nu);
                last = Some(QpSolution {
                    objective: p.objective(&x),
                    kkt_residual: kkt,
                    iterations: s.iterations + outer,
                    ..s
                });
                if step < 1e-12 * (1.0 + x.amax()) || kkt < 1e-10 {
                    return Ok(QpOutcome::Optimal(last.unwrap()));
                }
            }
        }
    }
    match last {
        Some(s) if s.kkt_residual < 1e-7 => Ok(QpOutcome::Optimal(s)),
        _ => Err(Error::MaxIterations {
            solver: "qp (proximal)",
            iterations: 5000,
        }),
    }
}

struct Active {
    /// Constraint normal in "n·x >= b" form.
    normal: DVector<f64>,
    /// Index into the original rows: `Ok(i)` inequality, `Err(i)` equality.
    source: std::result::Result<usize, usize>,
    /// Sign applied to the original row to obtain `normal`.
    sign: f64,
    mult: f64,
}

impl Active {
    fn is_equality(&self) -> bool {
        self.source.is_err()
    }
}

fn dual_active_set(
    p: &QpProblem,
    f: &DVector<f64>,
    chol: &Cholesky<f64, Dyn>,
    opts: &QpOptions,
) -> Result<QpOutcome> {
    let mi = p.a_ineq.nrows();
    let me = p.a_eq.nrows();
    let mut x = -chol.solve(f);
    let mut active: Vec<Active> = Vec::new();
    let mut is_active = vec![false; mi];
    let mut iterations = 0usize;

    let viol_tol = |b: f64| opts.feas_tol * (1.0 + b.abs());

    // Equalities first, then the most violated inequality, until feasible.
    let mut next_eq = 0usize;
    loop {
        iterations += 1;
        if iterations > opts.max_iter {
            return Err(Error::MaxIterations {
                solver: "qp",
                iterations: opts.max_iter,
            });
        }
        let candidate = if next_eq < me {
            let e = next_eq;
            next_eq += 1;
            let row = p.a_eq.row(e).transpose();
            let r = row.dot(&x) - p.b_eq[e];
            // n·x >= b with n = -sign(r)·row
            let sign = if r > 0.0 { -1.0 } else { 1.0 };
            Some((row * sign, p.b_eq[e] * sign, Err(e), sign))
        } else {
            let mut worst: Option<(usize, f64)> = None;
            for i in 0..mi {
                if is_active[i] {
                    continue;
                }
                let v = p.a_ineq.row(i).transpose().dot(&x) - p.b_ineq[i];
                if v > viol_tol(p.b_ineq[i]) && worst.is_none_or(|(_, w)| v > w) {
                    worst = Some((i, v));
                }
            }
            worst.map(|(i, _)| {
                let row = -p.a_ineq.row(i).transpose();
                (row, -p.b_ineq[i], Ok(i), -1.0)
            })
        };
        let Some((np, bp, source, sign)) = candidate else {
            break;
        };
        let is_eq = source.is_err();
        let mut up = 0.0;
        loop {
            iterations += 1;
            if iterations > opts.max_iter {
                return Err(Error::MaxIterations {
                    solver: "qp",
                    iterations: opts.max_iter,
                });
            }
            let (z, r) = step_directions(chol, &active, &np)?;
            let sp = np.dot(&x) - bp;
            // Largest dual step keeping active inequality multipliers nonnegative.
            let mut t1 = f64::INFINITY;
            let mut block = None;
            for (k, a) in active.iter().enumerate() {
                if !a.is_equality() && r[k] > 1e-14 {
                    let t = a.mult / r[k];
                    if t < t1 {
                        t1 = t;
                        block = Some(k);
                    }
                }
            }
            let zn = z.dot(&np);
            let z_small = z.amax() <= 1e-12 * (1.0 + np.amax()) || zn <= 1e-14;
            if z_small {
                if block.is_none() {
                    if is_eq && sp.abs() <= viol_tol(bp) {
                        break;
                    }
                    return Ok(QpOutcome::Infeasible);
                }
                let t = t1;
                for (k, a) in active.iter_mut().enumerate() {
                    a.mult -= t * r[k];
                }
                up += t;
                let k = block.unwrap();
                if let Ok(i) = active[k].source {
                    is_active[i] = false;
                }
                active.remove(k);
                continue;
            }
            let t2 = -sp / zn;
            let t = t1.min(t2).max(0.0);
            x += &z * t;
            for (k, a) in active.iter_mut().enumerate() {
                a.mult -= t * r[k];
            }
            up += t;
            if t2 <= t1 {
                if let Ok(i) = source {
                    is_active[i] = true;
                }
                active.push(Active {
                    normal: np.clone(),
                    source,
                    sign,
                    mult: up,
                });
                break;
            }
            let k = block.unwrap();
            if let Ok(i) = active[k].source {
                is_active[i] = false;
            }
            active.remove(k);
        }
    }

    let mut mu = DVector::zeros(mi);
    let mut nu = DVector::zeros(me);
    let mut act = Vec::new();
    for a in &active {
        match a.source {
            Ok(i) => {
                mu[i] = a.mult.max(0.0);
                act.push(i);
            }
            // Hx + f = u·normal = u·sign·row, and stationarity uses + ν·row.
            Err(e) => nu[e] = -a.mult * a.sign,
        }
    }
    act.sort_unstable();
    let kkt = p.kkt_residual(&x, &mu, &nu);
    Ok(QpOutcome::Optimal(QpSolution {
        objective: p.objective(&x),
        x,
        ineq_duals: mu,
        eq_duals: nu,
        active: act,
        kkt_residual: kkt,
        iterations,
    }))
}

/// Primal step `z` and dual step `r` for adding normal `np` to the active set:
/// `r = (NᵀK N)⁻¹ NᵀK np`, `z = K (np - N r)` with `K = H⁻¹`.
fn step_directions(
    chol: &Cholesky<f64, Dyn>,
    active: &[Active],
    np: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let knp = chol.solve(np);
    let q = active.len();
    if q == 0 {
        return Ok((knp, DVector::zeros(0)));
    }
    let n = np.len();
    let mut nmat = DMatrix::zeros(n, q);
    for (k, a) in active.iter().enumerate() {
        nmat.set_column(k, &a.normal);
    }
    let kn = chol.solve(&nmat);
    let m = nmat.transpose() * &kn;
    let rhs = nmat.transpose() * &knp;
    let r = match Cholesky::new(symmetrize(&m)) {
        Some(c) => c.solve(&rhs),
        None => m
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::numerical("qp", "active constraint normals are dependent"))?,
    };
    let z = knp - kn * &r;
    Ok((z, r))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(v)
    }

    #[test]
    fn squared_norm_with_lower_bound() {
        // min x² s.t. x >= 1
        let mut p = QpProblem::unconstrained(DMatrix::from_element(1, 1, 2.0), dv(&[0.0]));
        p.a_ineq = DMatrix::from_element(1, 1, -1.0);
        p.b_ineq = dv(&[-1.0]);
        let s = solve_qp(&p).unwrap().optimal().unwrap();
        assert!((s.x[0] - 1.0).abs() < 1e-12);
        assert!((s.ineq_duals[0] - 2.0).abs() < 1e-12);
        assert!(s.kkt_residual < 1e-10);
    }

    #[test]
    fn unconstrained_minimizer() {
        let h = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let f = dv(&[1.0, -2.0]);
        let s = solve_qp(&QpProblem::unconstrained(h.clone(), f.clone()))
            .unwrap()
            .optimal()
            .unwrap();
        let expect = -h.lu().solve(&f).unwrap();
        assert!((s.x - expect).amax() < 1e-12);
    }

    #[test]
    fn equality_constrained() {
        // min x0² + x1² s.t. x0 + x1 = 2
        let mut p = QpProblem::unconstrained(DMatrix::identity(2, 2) * 2.0, dv(&[0.0, 0.0]));
        p.a_eq = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        p.b_eq = dv(&[2.0]);
        let s = solve_qp(&p).unwrap().optimal().unwrap();
        assert!((s.x - dv(&[1.0, 1.0])).amax() < 1e-12);
        assert!(s.kkt_residual < 1e-10);
    }

    #[test]
    fn infeasible_box() {
        let mut p = QpProblem::unconstrained(DMatrix::identity(1, 1), dv(&[0.0]));
        p.a_ineq = DMatrix::from_column_slice(2, 1, &[1.0, -1.0]);
        p.b_ineq = dv(&[0.0, -1.0]);
        assert!(matches!(solve_qp(&p).unwrap(), QpOutcome::Infeasible));
    }

    #[test]
    fn semidefinite_hessian_uses_proximal_loop() {
        // min x0² + x1 s.t. x1 >= 1, (x1 enters linearly)
        let mut p = QpProblem::unconstrained(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            dv(&[0.0, 1.0]),
        );
        p.a_ineq = DMatrix::from_row_slice(1, 2, &[0.0, -1.0]);
        p.b_ineq = dv(&[-1.0]);
        let s = solve_qp(&p).unwrap().optimal().unwrap();
        assert!((&s.x - dv(&[0.0, 1.0])).amax() < 1e-8, "{:?}", s.x);
    }

    #[test]
    fn rejects_indefinite() {
        let p = QpProblem::unconstrained(DMatrix::from_row_slice(1, 1, &[-1.0]), dv(&[0.0]));
        assert!(solve_qp(&p).is_err());
    }
}
