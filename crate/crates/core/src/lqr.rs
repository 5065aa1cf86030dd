//! Problem description plus Riccati and Lyapunov machinery.

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_mat};
use crate::polytope::HPolytope;

/// Constrained linear system `x+ = A x + B u` with stage cost
/// `xᵀQx + uᵀRu`, state set `X` and input set `U`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawSystem", into = "RawSystem")]
pub struct LinearSystem {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub x: HPolytope,
    pub u: HPolytope,
}

#[derive(Serialize, Deserialize)]
struct RawSystem {
    #[serde(rename = "A", with = "serde_mat")]
    a: DMatrix<f64>,
    #[serde(rename = "B", with = "serde_mat")]
    b: DMatrix<f64>,
    #[serde(rename = "Q", with = "serde_mat")]
    q: DMatrix<f64>,
    #[serde(rename = "R", with = "serde_mat")]
    r: DMatrix<f64>,
    #[serde(rename = "X")]
    x: HPolytope,
    #[serde(rename = "U")]
    u: HPolytope,
}

impl TryFrom<RawSystem> for LinearSystem {
    type Error = Error;
    fn try_from(s: RawSystem) -> Result<Self> {
        LinearSystem::new(s.a, s.b, s.q, s.r, s.x, s.u)
    }
}

impl From<LinearSystem> for RawSystem {
    fn from(s: LinearSystem) -> Self {
        RawSystem { a: s.a, b: s.b, q: s.q, r: s.r, x: s.x, u: s.u }
    }
}

impl LinearSystem {
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        q: DMatrix<f64>,
        r: DMatrix<f64>,
        x: HPolytope,
        u: HPolytope,
    ) -> Result<Self> {
        let n = a.nrows();
        let m = b.ncols();
        let dims_ok = a.ncols() == n
            && b.nrows() == n
            && q.shape() == (n, n)
            && r.shape() == (m, m)
            && x.dim() == n
            && u.dim() == m;
        if !dims_ok || n == 0 || m == 0 {
            return Err(Error::DimensionMismatch(format!(
                "A {:?}, B {:?}, Q {:?}, R {:?}, X dim {}, U dim {}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape(),
                x.dim(),
                u.dim()
            )));
        }
        check_symmetric(&q, "Q")?;
        check_symmetric(&r, "R")?;
        if linalg::min_eigenvalue(&q) < -1e-10 {
            return Err(Error::InvalidInput("Q is not positive semidefinite".into()));
        }
        if linalg::min_eigenvalue(&r) <= 0.0 {
            return Err(Error::InvalidInput("R is not positive definite".into()));
        }
        if !x.is_cset() || !u.is_cset() {
            return Err(Error::NotCset);
        }
        let sys = LinearSystem { a, b, q, r, x, u };
        if linalg::rank(&sys.controllability_matrix(), 1e-8) < n {
            return Err(Error::InvalidInput("(A, B) is not reachable".into()));
        }
        Ok(sys)
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b.ncols()
    }

    /// `[B, AB, …, A^{n-1}B]`.
    pub fn controllability_matrix(&self) -> DMatrix<f64> {
        let (n, m) = (self.state_dim(), self.input_dim());
        let mut c = DMatrix::zeros(n, n * m);
        let mut blk = self.b.clone();
        for k in 0..n {
            c.view_mut((0, k * m), (n, m)).copy_from(&blk);
            blk = &self.a * blk;
        }
        c
    }

    /// Infinite-horizon LQR with the default tolerance.
    pub fn dare(&self) -> Result<RiccatiSolution> {
        solve_dare(&self.a, &self.b, &self.q, &self.r, DARE_TOL, DARE_MAX_ITER)
    }

    /// Closed-loop matrix `A − B L`.
    pub fn closed_loop(&self, l: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * l
    }

    /// Cost-to-go `P` of `u = −L x`: `P = Q + LᵀRL + (A−BL)ᵀP(A−BL)`.
    pub fn feedback_cost(&self, l: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let qbar = &self.q + l.transpose() * &self.r * l;
        solve_lyapunov(&self.closed_loop(l), &qbar)
    }
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<()> {
    let asym = linalg::max_abs(&(m - m.transpose()));
    if asym > 1e-10 * (1.0 + linalg::max_abs(m)) {
        return Err(Error::InvalidInput(format!("{name} is not symmetric")));
    }
    Ok(())
}

pub const DARE_TOL: f64 = 1e-12;
pub const DARE_MAX_ITER: usize = 100_000;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RiccatiSolution {
    #[serde(rename = "P_inf", with = "serde_mat")]
    pub p_inf: DMatrix<f64>,
    #[serde(rename = "L_inf", with = "serde_mat")]
    pub l_inf: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// One Riccati step: returns `(L, P_prev)` with
/// `L = (BᵀPB + R)⁻¹BᵀPA` and `P_prev = Q + AᵀP(A − BL)`.
fn riccati_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let pb = p * b;
    let s = b.transpose() * &pb + r;
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::IndefiniteIterate(linalg::min_eigenvalue(&(b.transpose() * &pb + r))))?;
    let l = chol.solve(&(pb.transpose() * a));
    let next = q + a.transpose() * p * (a - b * &l);
    Ok((l, linalg::symmetrize(&next)))
}

/// Solves the discrete algebraic Riccati equation by iterating the Riccati
/// recursion from `P = Q`.
pub fn solve_dare(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<RiccatiSolution> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (b.ncols(), b.ncols()) {
        return Err(Error::DimensionMismatch("solve_dare: inconsistent shapes".into()));
    }
    if !detectable(a, q) {
        log::warn!("(Q^1/2, A) is not detectable; the Riccati limit may not stabilize");
    }
    let mut p = linalg::symmetrize(q);
    for it in 1..=max_iter {
        let (_, next) = riccati_step(a, b, q, r, &p)?;
        let me = linalg::min_eigenvalue(&next);
        if me < -1e-10 * (1.0 + linalg::max_abs(&next)) {
            return Err(Error::IndefiniteIterate(me));
        }
        let diff = (&next - &p).norm();
        p = next;
        if diff < tol * (1.0 + p.norm()) {
            let (l, p_check) = riccati_step(a, b, q, r, &p)?;
            let residual = (&p - &p_check).norm();
            let rho = linalg::spectral_radius(&(a - b * &l));
            if rho >= 1.0 {
                return Err(Error::UnstableClosedLoop(rho));
            }
            return Ok(RiccatiSolution { p_inf: p, l_inf: l, residual, iterations: it });
        }
    }
    Err(Error::NotConverged { max_iter, last: None })
}

/// Hautus test on eigenvalues with `|μ| >= 1`: `[A − μI; Q^{1/2}]` has full
/// column rank.
fn detectable(a: &DMatrix<f64>, q: &DMatrix<f64>) -> bool {
    let n = a.nrows();
    let eig = linalg::symmetrize(q).symmetric_eigen();
    let sqrt_vals = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let q_half = &eig.eigenvectors * DMatrix::from_diagonal(&sqrt_vals) * eig.eigenvectors.transpose();
    a.complex_eigenvalues().iter().filter(|mu| mu.norm() >= 1.0 - 1e-12).all(|&mu| {
        let mut h = DMatrix::<Complex<f64>>::zeros(2 * n, n);
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] = Complex::new(a[(i, j)], 0.0) - if i == j { mu } else { Complex::new(0.0, 0.0) };
                h[(n + i, j)] = Complex::new(q_half[(i, j)], 0.0);
            }
        }
        let sv = h.svd(false, false).singular_values;
        let smax = sv.max();
        sv.iter().filter(|&&s| s > 1e-8 * smax.max(1.0)).count() == n
    })
}

/// Solves `P = Qbar + A_clᵀ P A_cl` for a Schur-stable `A_cl` through the
/// linear system in the `n(n+1)/2` upper-triangular coordinates of `P`.
pub fn solve_lyapunov(a_cl: &DMatrix<f64>, qbar: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_cl.nrows();
    if a_cl.ncols() != n || qbar.shape() != (n, n) {
        return Err(Error::DimensionMismatch("solve_lyapunov: inconsistent shapes".into()));
    }
    let rho = linalg::spectral_radius(a_cl);
    if rho >= 1.0 {
        return Err(Error::UnstableMatrix(rho));
    }
    let pairs = linalg::sym_index_pairs(n);
    let d = pairs.len();
    let mut coord = DMatrix::<usize>::zeros(n, n);
    for (k, &(i, j)) in pairs.iter().enumerate() {
        coord[(i, j)] = k;
        coord[(j, i)] = k;
    }
    let qs = linalg::symmetrize(qbar);
    let mut m = DMatrix::<f64>::identity(d, d);
    let mut rhs = nalgebra::DVector::zeros(d);
    for (row, &(i, j)) in pairs.iter().enumerate() {
        rhs[row] = qs[(i, j)];
        for k in 0..n {
            for l in 0..n {
                m[(row, coord[(k, l)])] -= a_cl[(k, i)] * a_cl[(l, j)];
            }
        }
    }
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::numerical("lyapunov", "singular symmetric system"))?;
    Ok(linalg::sym_from_coords(n, sol.as_slice()))
}

/// First-step gain of the `T`-step backward Riccati recursion started at `P_T`.
pub fn finite_horizon_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p_t: &DMatrix<f64>,
    horizon: usize,
) -> Result<DMatrix<f64>> {
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let n = a.nrows();
    if p_t.shape() != (n, n) || b.nrows() != n {
        return Err(Error::DimensionMismatch("finite_horizon_gain: inconsistent shapes".into()));
    }
    let mut p = linalg::symmetrize(p_t);
    let mut gain = DMatrix::zeros(b.ncols(), n);
    for _ in 0..horizon {
        let (l, prev) = riccati_step(a, b, q, r, &p)?;
        gain = l;
        p = prev;
    }
    Ok(gain)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, v)
    }

    #[test]
    fn zero_dynamics_dare() {
        let q = m(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let s = solve_dare(&DMatrix::zeros(2, 2), &m(2, 1, &[0.0, 1.0]), &q, &m(1, 1, &[1.0]), DARE_TOL, 100).unwrap();
        assert!((&s.p_inf - &q).amax() < 1e-14);
        assert!(s.l_inf.amax() < 1e-14);
    }

    #[test]
    fn scalar_dare_closed_form() {
        // p = q + a²p − a²p²b²/(b²p + r) with a = 2, b = q = r = 1: p = 2 + √5.
        let s = solve_dare(&m(1, 1, &[2.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), &m(1, 1, &[1.0]), DARE_TOL, 1000)
            .unwrap();
        assert!((s.p_inf[(0, 0)] - (2.0 + 5f64.sqrt())).abs() < 1e-10);
        assert!(s.residual < 1e-8);
    }

    #[test]
    fn lyapunov_zero_and_series() {
        let q = m(2, 2, &[1.0, 0.2, 0.2, 3.0]);
        assert!((solve_lyapunov(&DMatrix::zeros(2, 2), &q).unwrap() - &q).amax() < 1e-14);
        let a = m(2, 2, &[0.5, 0.3, -0.2, 0.7]);
        let p = solve_lyapunov(&a, &q).unwrap();
        let mut series = DMatrix::zeros(2, 2);
        let mut ak = DMatrix::identity(2, 2);
        for _ in 0..400 {
            series += ak.transpose() * &q * &ak;
            ak = &a * ak;
        }
        assert!((p - series).amax() < 1e-10);
    }

    #[test]
    fn lyapunov_rejects_unstable() {
        assert!(matches!(
            solve_lyapunov(&m(1, 1, &[1.2]), &m(1, 1, &[1.0])),
            Err(Error::UnstableMatrix(_))
        ));
    }

    #[test]
    fn gain_fixed_point() {
        let a = m(2, 2, &[1.1, 2.0, 0.0, 0.95]);
        let b = m(2, 1, &[0.0, 0.0787]);
        let q = m(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let r = m(1, 1, &[1.0]);
        let s = solve_dare(&a, &b, &q, &r, DARE_TOL, DARE_MAX_ITER).unwrap();
        for t in [1, 3, 7] {
            let l = finite_horizon_gain(&a, &b, &q, &r, &s.p_inf, t).unwrap();
            assert!((l - &s.l_inf).amax() < 1e-10);
        }
    }

    #[test]
    fn unreachable_system_rejected() {
        let x = HPolytope::from_box(&[1.0, 1.0]).unwrap();
        let u = HPolytope::from_box(&[1.0]).unwrap();
        let r = LinearSystem::new(
            DMatrix::identity(2, 2),
            m(2, 1, &[1.0, 0.0]),
            DMatrix::identity(2, 2),
            m(1, 1, &[1.0]),
            x,
            u,
        );
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn system_json_roundtrip() {
        let sys = LinearSystem::new(
            m(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            m(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            m(1, 1, &[1.0]),
            HPolytope::from_box(&[5.0, 5.0]).unwrap(),
            HPolytope::from_box(&[1.0]).unwrap(),
        )
        .unwrap();
        let s = serde_json::to_string(&sys).unwrap();
        let back: LinearSystem = serde_json::from_str(&s).unwrap();
        assert_eq!(back.a, sys.a);
        assert_eq!(back.x.g(), sys.x.g());
    }
}
