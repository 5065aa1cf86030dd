//! Receding-horizon control with a condensed planning QP.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{self, serde_vec_list};
use crate::lqr::LinearSystem;
use crate::polytope::{bounding_box, is_subset, HPolytope, EPS_SET};
use crate::solvers::{solve_lp, solve_qp, LpOutcome, LpProblem, QpOutcome, QpProblem};

/// Threshold for "driven to rest".
pub const REST_TOL: f64 = 1e-3;
pub const MAX_HORIZON: usize = 30;

/// Planning problem
///
/// ```text
/// min Σ_{k<T} (x̂_kᵀQx̂_k + û_kᵀRû_k) + x̂_TᵀQ_T x̂_T
/// s.t. x̂_k ∈ X, û_k ∈ U (k < T),  x̂_T ∈ X_T
/// ```
///
/// with the states eliminated, so the QP in `û = (û_0, …, û_{T−1})` reads
/// `min ½ûᵀHû + (F x₀)ᵀû + x₀ᵀY x₀  s.t.  G û <= w + E x₀`.
#[derive(Clone, Debug)]
pub struct MpcController {
    sys: LinearSystem,
    horizon: usize,
    terminal_set: HPolytope,
    terminal_weight: DMatrix<f64>,
    h: DMatrix<f64>,
    f: DMatrix<f64>,
    y: DMatrix<f64>,
    g: DMatrix<f64>,
    w: DVector<f64>,
    e: DMatrix<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RhcStep {
    #[serde(with = "linalg::serde_vec")]
    pub u: DVector<f64>,
    /// Full planned input sequence, stacked.
    #[serde(with = "linalg::serde_vec")]
    pub plan: DVector<f64>,
    /// Optimal planning cost including the constant term.
    pub objective: f64,
    pub active: Vec<usize>,
    pub iterations: usize,
}

pub fn build_controller(
    sys: &LinearSystem,
    horizon: usize,
    terminal_set: &HPolytope,
    terminal_weight: &DMatrix<f64>,
) -> Result<MpcController> {
    MpcController::new(sys, horizon, terminal_set, terminal_weight)
}

impl MpcController {
    pub fn new(
        sys: &LinearSystem,
        horizon: usize,
        terminal_set: &HPolytope,
        terminal_weight: &DMatrix<f64>,
    ) -> Result<Self> {
        let n = sys.state_dim();
        let m = sys.input_dim();
        if horizon == 0 || horizon > MAX_HORIZON {
            return Err(Error::InvalidInput(format!("horizon {horizon} not in 1..={MAX_HORIZON}")));
        }
        if terminal_set.dim() != n || terminal_weight.shape() != (n, n) {
            return Err(Error::DimensionMismatch("terminal ingredients have wrong dimension".into()));
        }
        let qt = linalg::symmetrize(terminal_weight);
        if linalg::max_abs(&(terminal_weight - &qt)) > 1e-9 * (1.0 + linalg::max_abs(&qt)) {
            return Err(Error::InvalidInput("terminal weight is not symmetric".into()));
        }
        if linalg::min_eigenvalue(&qt) <= 0.0 {
            return Err(Error::InvalidInput("terminal weight is not positive definite".into()));
        }
        if !is_subset(terminal_set, &sys.x, EPS_SET)? {
            return Err(Error::InvalidInput("terminal set is not contained in X".into()));
        }

        let t = horizon;
        let nu = t * m;
        // Φ_k = A^k and Γ_k with x̂_k = Φ_k x₀ + Γ_k û.
        let mut phi = vec![DMatrix::identity(n, n)];
        let mut gamma = vec![DMatrix::zeros(n, nu)];
        for k in 1..=t {
            phi.push(&sys.a * &phi[k - 1]);
            let mut gk = &sys.a * &gamma[k - 1];
            gk.view_mut((0, (k - 1) * m), (n, m)).copy_from(&sys.b);
            gamma.push(gk);
        }

        let mut h = DMatrix::zeros(nu, nu);
        let mut f = DMatrix::zeros(nu, n);
        let mut y = DMatrix::zeros(n, n);
        for k in 0..=t {
            let wk = if k == t { &qt } else { &sys.q };
            h += gamma[k].transpose() * wk * &gamma[k];
            f += gamma[k].transpose() * wk * &phi[k];
            y += phi[k].transpose() * wk * &phi[k];
        }
        for k in 0..t {
            let mut blk = h.view_mut((k * m, k * m), (m, m));
            blk += &sys.r;
        }
        let h = linalg::symmetrize(&(h * 2.0));
        let f = f * 2.0;

        let (fx, gx) = (sys.x.f(), sys.x.g());
        let (fu, gu) = (sys.u.f(), sys.u.g());
        let (ft, gt) = (terminal_set.f(), terminal_set.g());
        let rows = (t - 1) * fx.nrows() + t * fu.nrows() + ft.nrows();
        let mut g = DMatrix::zeros(rows, nu);
        let mut w = DVector::zeros(rows);
        let mut e = DMatrix::zeros(rows, n);
        let mut r = 0;
        for k in 1..t {
            let q = fx.nrows();
            g.view_mut((r, 0), (q, nu)).copy_from(&(fx * &gamma[k]));
            w.rows_mut(r, q).copy_from(gx);
            e.view_mut((r, 0), (q, n)).copy_from(&(-(fx * &phi[k])));
            r += q;
        }
        for k in 0..t {
            let q = fu.nrows();
            g.view_mut((r, k * m), (q, m)).copy_from(fu);
            w.rows_mut(r, q).copy_from(gu);
            r += q;
        }
        let q = ft.nrows();
        g.view_mut((r, 0), (q, nu)).copy_from(&(ft * &gamma[t]));
        w.rows_mut(r, q).copy_from(gt);
        e.view_mut((r, 0), (q, n)).copy_from(&(-(ft * &phi[t])));

        Ok(MpcController {
            sys: sys.clone(),
            horizon,
            terminal_set: terminal_set.clone(),
            terminal_weight: qt,
            h,
            f,
            y,
            g,
            w,
            e,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn system(&self) -> &LinearSystem {
        &self.sys
    }

    pub fn terminal_set(&self) -> &HPolytope {
        &self.terminal_set
    }

    pub fn terminal_weight(&self) -> &DMatrix<f64> {
        &self.terminal_weight
    }

    /// The planning QP instantiated at `x0`.
    pub fn qp(&self, x0: &DVector<f64>) -> QpProblem {
        let nu = self.h.nrows();
        QpProblem {
            h: self.h.clone(),
            f: &self.f * x0,
            a_ineq: self.g.clone(),
            b_ineq: &self.w + &self.e * x0,
            a_eq: DMatrix::zeros(0, nu),
            b_eq: DVector::zeros(0),
        }
    }

    /// Whether the planning problem has a feasible point (phase-one LP).
    pub fn is_feasible(&self, x0: &DVector<f64>) -> Result<bool> {
        if !self.sys.x.contains(x0, 1e-9) {
            return Ok(false);
        }
        let nu = self.h.nrows();
        let lp = LpProblem::inequality(DVector::zeros(nu), self.g.clone(), &self.w + &self.e * x0);
        Ok(matches!(solve_lp(&lp)?, LpOutcome::Optimal(_)))
    }

    pub fn step(&self, x: &DVector<f64>) -> Result<RhcStep> {
        let n = self.sys.state_dim();
        let m = self.sys.input_dim();
        if x.len() != n {
            return Err(Error::DimensionMismatch("state has wrong length".into()));
        }
        if !self.sys.x.contains(x, 1e-9) {
            return Err(Error::InfeasibleState);
        }
        match solve_qp(&self.qp(x))? {
            QpOutcome::Optimal(sol) => Ok(RhcStep {
                u: sol.x.rows(0, m).into_owned(),
                objective: sol.objective + x.dot(&(&self.y * x)),
                plan: sol.x,
                active: sol.active,
                iterations: sol.iterations,
            }),
            QpOutcome::Infeasible => Err(Error::InfeasibleState),
        }
    }
}

/// Applies the first planned input at `x`.
pub fn rhc_step(ctrl: &MpcController, x: &DVector<f64>) -> Result<RhcStep> {
    ctrl.step(x)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trajectory {
    #[serde(with = "serde_vec_list")]
    pub states: Vec<DVector<f64>>,
    #[serde(with = "serde_vec_list")]
    pub inputs: Vec<DVector<f64>>,
    /// Planning cost per applied step.
    pub objectives: Vec<f64>,
    /// QP status per attempted step (`"optimal"` or the error text).
    pub status: Vec<String>,
    pub feasible_throughout: bool,
}

impl Trajectory {
    /// First time index with `‖x_t‖_∞ < tol`.
    pub fn time_to_rest(&self, tol: f64) -> Option<usize> {
        self.states.iter().position(|x| linalg::inf_norm(x) < tol)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trajectory serializes")
    }

    /// Columns `t, x1..xn, u1..um, cost, feasible`; the final state has no input.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, |x| x.len());
        let m = self.inputs.first().map_or(0, |u| u.len());
        let mut head = vec!["t".to_string()];
        head.extend((1..=n).map(|i| format!("x{i}")));
        head.extend((1..=m).map(|j| format!("u{j}")));
        head.push("cost".into());
        head.push("feasible".into());
        let mut out = head.join(",");
        out.push('\n');
        for (t, x) in self.states.iter().enumerate() {
            let mut row = vec![t.to_string()];
            row.extend(x.iter().map(|v| v.to_string()));
            match self.inputs.get(t) {
                Some(u) => {
                    row.extend(u.iter().map(|v| v.to_string()));
                    row.push(self.objectives[t].to_string());
                    row.push("true".into());
                }
                None => {
                    row.extend(std::iter::repeat_n(String::new(), m + 1));
                    let feasible = self.status.get(t).is_none_or(|s| s == "optimal");
                    row.push(feasible.to_string());
                }
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Closed-loop rollout; stops at the first infeasible step.
pub fn simulate(ctrl: &MpcController, x0: &DVector<f64>, steps: usize) -> Trajectory {
    let sys = ctrl.system();
    let mut traj = Trajectory {
        states: vec![x0.clone()],
        inputs: Vec::new(),
        objectives: Vec::new(),
        status: Vec::new(),
        feasible_throughout: true,
    };
    let mut x = x0.clone();
    for _ in 0..steps {
        match ctrl.step(&x) {
            Ok(s) => {
                x = &sys.a * &x + &sys.b * &s.u;
                traj.inputs.push(s.u);
                traj.objectives.push(s.objective);
                traj.status.push("optimal".into());
                traj.states.push(x.clone());
            }
            Err(e) => {
                traj.status.push(e.to_string());
                traj.feasible_throughout = false;
                break;
            }
        }
    }
    traj
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(with = "linalg::serde_vec")]
    pub lo: DVector<f64>,
    #[serde(with = "linalg::serde_vec")]
    pub hi: DVector<f64>,
    pub points_per_axis: usize,
}

impl GridSpec {
    /// Grid over the bounding box of `X`.
    pub fn over(x: &HPolytope, points_per_axis: usize) -> Result<Self> {
        let (lo, hi) = bounding_box(x)?;
        Ok(GridSpec { lo, hi, points_per_axis })
    }

    fn axis(&self, j: usize) -> Vec<f64> {
        let k = self.points_per_axis;
        if k == 1 {
            return vec![0.5 * (self.lo[j] + self.hi[j])];
        }
        (0..k).map(|i| self.lo[j] + (self.hi[j] - self.lo[j]) * i as f64 / (k - 1) as f64).collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub axes: Vec<Vec<f64>>,
    /// Row-major over the axes, last axis fastest.
    pub feasible: Vec<bool>,
}

impl OccupancyGrid {
    pub fn point(&self, flat: usize) -> DVector<f64> {
        let mut idx = flat;
        let mut x = DVector::zeros(self.axes.len());
        for j in (0..self.axes.len()).rev() {
            let k = self.axes[j].len();
            x[j] = self.axes[j][idx % k];
            idx /= k;
        }
        x
    }

    pub fn count(&self) -> usize {
        self.feasible.iter().filter(|&&b| b).count()
    }

    pub fn to_csv(&self) -> String {
        let n = self.axes.len();
        let mut head: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        head.push("feasible".into());
        let mut out = head.join(",");
        out.push('\n');
        for (i, &f) in self.feasible.iter().enumerate() {
            let row: Vec<String> =
                self.point(i).iter().map(|v| v.to_string()).chain(std::iter::once(u8::from(f).to_string())).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

pub fn feasible_region_grid(ctrl: &MpcController, grid: &GridSpec) -> Result<OccupancyGrid> {
    feasible_region_grid_with(ctrl, grid, Exec::default())
}

/// Feasibility of the planning problem at every grid point.
pub fn feasible_region_grid_with(ctrl: &MpcController, grid: &GridSpec, exec: Exec) -> Result<OccupancyGrid> {
    let n = ctrl.system().state_dim();
    if grid.lo.len() != n || grid.hi.len() != n || grid.points_per_axis == 0 {
        return Err(Error::DimensionMismatch("grid does not match the state dimension".into()));
    }
    let axes: Vec<Vec<f64>> = (0..n).map(|j| grid.axis(j)).collect();
    let total = grid.points_per_axis.pow(n as u32);
    let mut occ = OccupancyGrid { axes, feasible: Vec::new() };
    occ.feasible = exec.try_map_indexed(total, |i| ctrl.is_feasible(&occ.point(i)))?;
    Ok(occ)
}

/// Least-squares fit of `u = −L x` from `n + 1` probe states of norm
/// `probe_radius`. Every probe must leave all constraints inactive.
pub fn local_gain(ctrl: &MpcController, probe_radius: f64) -> Result<DMatrix<f64>> {
    let n = ctrl.system().state_dim();
    let m = ctrl.system().input_dim();
    let mut probes = DMatrix::zeros(n, n + 1);
    for j in 0..n {
        probes[(j, j)] = probe_radius;
    }
    probes.column_mut(n).fill(-probe_radius / (n as f64).sqrt());
    let mut inputs = DMatrix::zeros(m, n + 1);
    for k in 0..=n {
        let step = ctrl.step(&probes.column(k).into_owned())?;
        if !step.active.is_empty() {
            return Err(Error::ConstraintsActive(k));
        }
        inputs.set_column(k, &step.u);
    }
    // −L X = U  ⇔  Xᵀ Lᵀ = −Uᵀ, solved in the least-squares sense.
    let xt = probes.transpose();
    let svd = xt.clone().svd(true, true);
    let lt = svd
        .solve(&(-inputs.transpose()), 1e-14)
        .map_err(|e| Error::numerical("local_gain", e))?;
    let resid = (&xt * &lt + inputs.transpose()).amax();
    if resid > 1e-8 * (1.0 + inputs.amax()) {
        return Err(Error::numerical("local_gain", format!("fit residual {resid:e}")));
    }
    Ok(lt.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lqr::finite_horizon_gain;

    fn ex1() -> LinearSystem {
        let c = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
        LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[1.1, 2.0, 0.0, 0.95]),
            DMatrix::from_column_slice(2, 1, &[0.0, 0.0787]),
            c.transpose() * &c,
            DMatrix::identity(1, 1),
            HPolytope::from_box(&[8.0, 8.0]).unwrap(),
            HPolytope::from_box(&[1.0]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn origin_is_at_rest() {
        let sys = ex1();
        let p = sys.dare().unwrap().p_inf;
        let ctrl = build_controller(&sys, 3, &sys.x, &p).unwrap();
        let s = rhc_step(&ctrl, &DVector::zeros(2)).unwrap();
        assert!(s.u.amax() < 1e-12 && s.objective.abs() < 1e-12);
        let tr = simulate(&ctrl, &DVector::zeros(2), 5);
        assert!(tr.states.iter().all(|x| x.amax() < 1e-12));
    }

    #[test]
    fn local_gain_is_riccati_gain() {
        let sys = ex1();
        let d = sys.dare().unwrap();
        let qt = DMatrix::from_row_slice(2, 2, &[38.6, 343.1, 343.1, 4178.5]);
        for t in [1, 2, 5] {
            let ctrl = build_controller(&sys, t, &sys.x, &d.p_inf).unwrap();
            assert!((local_gain(&ctrl, 1e-3).unwrap() - &d.l_inf).amax() < 1e-7);
            let ctrl = build_controller(&sys, t, &sys.x, &qt).unwrap();
            let want = finite_horizon_gain(&sys.a, &sys.b, &sys.q, &sys.r, &qt, t).unwrap();
            assert!((local_gain(&ctrl, 1e-3).unwrap() - want).amax() < 1e-7);
        }
    }

    #[test]
    fn zero_steps_and_csv() {
        let sys = ex1();
        let ctrl = build_controller(&sys, 1, &sys.x, &sys.dare().unwrap().p_inf).unwrap();
        let tr = simulate(&ctrl, &DVector::from_column_slice(&[1.0, 0.0]), 0);
        assert_eq!(tr.states.len(), 1);
        assert!(tr.inputs.is_empty() && tr.feasible_throughout);
        assert_eq!(tr.to_csv().lines().count(), 2);
    }

    #[test]
    fn outside_x_is_infeasible() {
        let sys = ex1();
        let ctrl = build_controller(&sys, 2, &sys.x, &sys.dare().unwrap().p_inf).unwrap();
        let x = DVector::from_column_slice(&[9.0, 0.0]);
        assert!(matches!(rhc_step(&ctrl, &x), Err(Error::InfeasibleState)));
        assert!(!ctrl.is_feasible(&x).unwrap());
    }

    #[test]
    fn grid_matches_qp_verdicts() {
        let sys = ex1();
        let ctrl = build_controller(&sys, 2, &sys.x, &sys.dare().unwrap().p_inf).unwrap();
        let grid = GridSpec::over(&sys.x, 9).unwrap();
        let seq = feasible_region_grid_with(&ctrl, &grid, Exec::Sequential).unwrap();
        let par = feasible_region_grid_with(&ctrl, &grid, Exec::Parallel).unwrap();
        assert_eq!(seq.feasible, par.feasible);
        for i in 0..seq.feasible.len() {
            assert_eq!(seq.feasible[i], rhc_step(&ctrl, &seq.point(i)).is_ok(), "point {}", seq.point(i));
        }
    }
}
