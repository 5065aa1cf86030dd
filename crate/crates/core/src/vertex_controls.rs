//! Admissible controls at the vertices of a λ-contractive set and the
//! continuous piecewise-linear feedback that interpolates them.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{self, serde_mat, serde_vec_list};
use crate::lqr::LinearSystem;
use crate::polytope::{SimplicialFan, VPolytope};
use crate::solvers::{solve_lp, LpOutcome, LpProblem, VarBound};

/// Weight of the `‖u_i‖₁` tie-break in the min-sum-λ objective.
const TIE_BREAK: f64 = 1e-6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LpObjective {
    Feasibility,
    #[default]
    MinSumLambda,
    MinDeviationFromLinear,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VertexControlSolution {
    pub lambda: f64,
    #[serde(with = "serde_vec_list")]
    pub controls: Vec<DVector<f64>>,
    pub lambdas: Vec<f64>,
    /// Row `i` holds the weights `p_ij` with `A v_i + B u_i = Σ_j p_ij v_j`.
    #[serde(with = "serde_mat")]
    pub interpolation: DMatrix<f64>,
    pub objective_used: LpObjective,
}

pub fn recover_vertex_controls(
    c: &VPolytope,
    sys: &LinearSystem,
    lambda: f64,
    objective: LpObjective,
    l_ref: Option<&DMatrix<f64>>,
) -> Result<VertexControlSolution> {
    recover_vertex_controls_with(c, sys, lambda, objective, l_ref, Exec::default())
}

/// Solves the vertex-control LP
///
/// ```text
/// A v_i + B u_i = Σ_j p_ij v_j,   Σ_j p_ij <= λ_i <= λ,   u_i ∈ U,   p_ij >= 0
/// ```
///
/// The constraints and every supported objective separate over `i`, so each
/// vertex is solved as its own LP. Infeasibility at any vertex means `C` is
/// not λ-contractive.
pub fn recover_vertex_controls_with(
    c: &VPolytope,
    sys: &LinearSystem,
    lambda: f64,
    objective: LpObjective,
    l_ref: Option<&DMatrix<f64>>,
    exec: Exec,
) -> Result<VertexControlSolution> {
    let n = sys.state_dim();
    let m = sys.input_dim();
    if c.dim() != n {
        return Err(Error::DimensionMismatch("vertex set and system differ in dimension".into()));
    }
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidInput(format!("λ = {lambda} not in (0, 1]")));
    }
    let owned_ref;
    let l_ref = match (objective, l_ref) {
        (LpObjective::MinDeviationFromLinear, None) => {
            owned_ref = sys.dare()?.l_inf;
            Some(&owned_ref)
        }
        (_, r) => r,
    };
    if let Some(l) = l_ref {
        if l.shape() != (m, n) {
            return Err(Error::DimensionMismatch("reference gain has wrong shape".into()));
        }
    }
    let s = c.len();
    let mut vmat = DMatrix::zeros(n, s);
    for (j, v) in c.vertices().iter().enumerate() {
        vmat.set_column(j, v);
    }

    let per_vertex = exec.try_map_indexed(s, |i| {
        let target = l_ref.map(|l| -(l * &c.vertices()[i]));
        vertex_lp(sys, &vmat, &c.vertices()[i], lambda, objective, target.as_ref())
            .and_then(|r| r.ok_or(Error::NotContractive { lambda, vertex: i }))
    })?;

    let mut controls = Vec::with_capacity(s);
    let mut lambdas = Vec::with_capacity(s);
    let mut interpolation = DMatrix::zeros(s, s);
    for (i, (u, lam, p)) in per_vertex.into_iter().enumerate() {
        let resid = (&sys.a * &c.vertices()[i] + &sys.b * &u - &vmat * &p).amax();
        let scale = 1.0 + linalg::max_abs(&vmat);
        if resid > 1e-7 * scale {
            return Err(Error::numerical("vertex LP", format!("interpolation residual {resid:e} at vertex {i}")));
        }
        interpolation.row_mut(i).copy_from(&p.transpose());
        controls.push(u);
        lambdas.push(lam);
    }
    Ok(VertexControlSolution { lambda, controls, lambdas, interpolation, objective_used: objective })
}

/// Variables `[u (m, free) | λ_i | p (s) | t (m, only with an ℓ1 term)]`.
fn vertex_lp(
    sys: &LinearSystem,
    vmat: &DMatrix<f64>,
    v: &DVector<f64>,
    lambda: f64,
    objective: LpObjective,
    target: Option<&DVector<f64>>,
) -> Result<Option<(DVector<f64>, f64, DVector<f64>)>> {
    let (n, s) = vmat.shape();
    let m = sys.input_dim();
    let with_t = !matches!(objective, LpObjective::Feasibility);
    let nt = if with_t { m } else { 0 };
    let nv = m + 1 + s + nt;
    let (iu, il, ip, it) = (0, m, m + 1, m + 1 + s);

    let mut c = DVector::zeros(nv);
    let center = match objective {
        LpObjective::Feasibility => None,
        LpObjective::MinSumLambda => {
            c[il] = 1.0;
            c.rows_mut(it, m).fill(TIE_BREAK);
            Some(DVector::zeros(m))
        }
        LpObjective::MinDeviationFromLinear => {
            c.rows_mut(it, m).fill(1.0);
            Some(target.cloned().unwrap_or_else(|| DVector::zeros(m)))
        }
    };

    let mut a_eq = DMatrix::zeros(n, nv);
    a_eq.view_mut((0, iu), (n, m)).copy_from(&sys.b);
    a_eq.view_mut((0, ip), (n, s)).copy_from(&(-vmat));
    let b_eq = -(&sys.a * v);

    let nu = sys.u.num_rows();
    let rows = nu + 2 + 2 * nt;
    let mut a_in = DMatrix::zeros(rows, nv);
    let mut b_in = DVector::zeros(rows);
    a_in.view_mut((0, iu), (nu, m)).copy_from(sys.u.f());
    b_in.rows_mut(0, nu).copy_from(sys.u.g());
    // Σ p_ij − λ_i <= 0 and λ_i <= λ.
    a_in.view_mut((nu, ip), (1, s)).fill(1.0);
    a_in[(nu, il)] = -1.0;
    a_in[(nu + 1, il)] = 1.0;
    b_in[nu + 1] = lambda;
    if let Some(center) = &center {
        // ±(u − center) <= t
        for k in 0..m {
            let r = nu + 2 + 2 * k;
            a_in[(r, iu + k)] = 1.0;
            a_in[(r, it + k)] = -1.0;
            b_in[r] = center[k];
            a_in[(r + 1, iu + k)] = -1.0;
            a_in[(r + 1, it + k)] = -1.0;
            b_in[r + 1] = -center[k];
        }
    }

    let mut bounds = vec![VarBound::NonNegative; nv];
    bounds[iu..iu + m].fill(VarBound::Free);
    let lp = LpProblem { c, a_ineq: a_in, b_ineq: b_in, a_eq, b_eq, bounds };
    match solve_lp(&lp)? {
        LpOutcome::Optimal(sol) => {
            let u = sol.x.rows(iu, m).into_owned();
            let p = sol.x.rows(ip, s).map(|v| v.max(0.0));
            let lam = sol.x[il].max(p.sum()).clamp(0.0, lambda);
            Ok(Some((u, lam, p)))
        }
        LpOutcome::Infeasible => Ok(None),
        LpOutcome::Unbounded => Err(Error::numerical("vertex LP", "unbounded")),
    }
}

/// One linear piece `u = −L_k x = U_k V_k⁻¹ x` on simplex `k`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PwlPiece {
    pub vertex_indices: Vec<usize>,
    #[serde(rename = "V", with = "serde_mat")]
    pub v: DMatrix<f64>,
    #[serde(rename = "U", with = "serde_mat")]
    pub u: DMatrix<f64>,
    #[serde(rename = "L", with = "serde_mat")]
    pub l: DMatrix<f64>,
}

/// Continuous piecewise-linear state feedback over a simplicial fan.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RawFeedback", into = "RawFeedback")]
pub struct PwlFeedback {
    fan: SimplicialFan,
    controls: Vec<DVector<f64>>,
    pieces: Vec<PwlPiece>,
    factors: Vec<LU<f64, Dyn, Dyn>>,
}

#[derive(Serialize, Deserialize)]
struct RawFeedback {
    fan: SimplicialFan,
    #[serde(with = "serde_vec_list")]
    controls: Vec<DVector<f64>>,
    pieces: Vec<PwlPiece>,
}

impl TryFrom<RawFeedback> for PwlFeedback {
    type Error = Error;
    fn try_from(r: RawFeedback) -> Result<Self> {
        build_from_controls(&r.fan, &r.controls)
    }
}

impl From<PwlFeedback> for RawFeedback {
    fn from(f: PwlFeedback) -> Self {
        RawFeedback { fan: f.fan, controls: f.controls, pieces: f.pieces }
    }
}

impl PwlFeedback {
    pub fn fan(&self) -> &SimplicialFan {
        &self.fan
    }

    pub fn pieces(&self) -> &[PwlPiece] {
        &self.pieces
    }

    /// Control assigned to each vertex of the parent polytope.
    pub fn vertex_controls(&self) -> &[DVector<f64>] {
        &self.controls
    }

    pub fn state_dim(&self) -> usize {
        self.fan.dim()
    }

    pub fn input_dim(&self) -> usize {
        self.controls.first().map_or(0, |u| u.len())
    }

    /// Barycentric coordinates `V_k⁻¹ x` on simplex `k`.
    pub fn barycentric(&self, k: usize, x: &DVector<f64>) -> DVector<f64> {
        self.factors[k].solve(x).expect("factor checked at construction")
    }

    /// Smallest simplex index containing `x`.
    pub fn locate(&self, x: &DVector<f64>) -> Result<usize> {
        (0..self.pieces.len())
            .find(|&k| in_simplex(&self.barycentric(k, x)))
            .ok_or(Error::OutsideFan)
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::DimensionMismatch("state has wrong length".into()));
        }
        let k = self.locate(x)?;
        Ok(-(&self.pieces[k].l * x))
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            pieces: &'a [PwlPiece],
        }
        serde_json::to_string_pretty(&Export { pieces: &self.pieces }).expect("feedback serializes")
    }

    /// One line per vertex: coordinates followed by the control.
    pub fn controls_csv(&self) -> String {
        let n = self.state_dim();
        let m = self.input_dim();
        let mut out = String::new();
        let head: Vec<String> =
            (0..n).map(|i| format!("x{i}")).chain((0..m).map(|j| format!("u{j}"))).collect();
        out.push_str(&head.join(","));
        out.push('\n');
        for (v, u) in self.fan.parent.vertices().iter().zip(&self.controls) {
            let row: Vec<String> = v.iter().chain(u.iter()).map(|x| format!("{x}")).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

fn in_simplex(p: &DVector<f64>) -> bool {
    p.iter().all(|&v| v >= -1e-9) && p.sum() <= 1.0 + 1e-9
}

/// Smallest simplex index whose cone piece contains `x`.
pub fn locate_simplex(fan: &SimplicialFan, x: &DVector<f64>) -> Result<usize> {
    for (k, s) in fan.simplices.iter().enumerate() {
        if let Some(p) = s.v.clone().lu().solve(x) {
            if in_simplex(&p) {
                return Ok(k);
            }
        }
    }
    Err(Error::OutsideFan)
}

/// Assembles `U_k` from the vertex controls and solves `L_k V_k = −U_k`.
pub fn build_pwl_feedback(fan: &SimplicialFan, sol: &VertexControlSolution) -> Result<PwlFeedback> {
    if sol.controls.len() != fan.parent.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} controls for {} vertices",
            sol.controls.len(),
            fan.parent.len()
        )));
    }
    PwlFeedback::from_vertex_controls(fan, &sol.controls)
}

impl PwlFeedback {
    /// Feedback from explicit per-vertex controls (indexed like `fan.parent`).
    pub fn from_vertex_controls(fan: &SimplicialFan, controls: &[DVector<f64>]) -> Result<Self> {
        build_from_controls(fan, controls)
    }
}

fn build_from_controls(fan: &SimplicialFan, controls: &[DVector<f64>]) -> Result<PwlFeedback> {
    let n = fan.dim();
    let m = controls.first().map_or(0, |u| u.len());
    if controls.len() != fan.parent.len() || controls.iter().any(|u| u.len() != m) {
        return Err(Error::DimensionMismatch("vertex controls do not match the fan".into()));
    }
    let mut pieces = Vec::with_capacity(fan.len());
    let mut factors = Vec::with_capacity(fan.len());
    for (k, s) in fan.simplices.iter().enumerate() {
        let sv = s.v.clone().svd(false, false).singular_values;
        if s.v.shape() != (n, n) || sv.min() <= 1e-10 * sv.max() {
            return Err(Error::SingularVertexMatrix(k));
        }
        let mut u = DMatrix::zeros(m, n);
        for (col, &i) in s.index_set.iter().enumerate() {
            u.set_column(col, &controls[i]);
        }
        // L V = −U  ⇔  Vᵀ Lᵀ = −Uᵀ
        let l = s
            .v
            .transpose()
            .lu()
            .solve(&(-u.transpose()))
            .ok_or(Error::SingularVertexMatrix(k))?
            .transpose();
        factors.push(s.v.clone().lu());
        pieces.push(PwlPiece { vertex_indices: s.index_set.clone(), v: s.v.clone(), u, l });
    }
    Ok(PwlFeedback { fan: fan.clone(), controls: controls.to_vec(), pieces, factors })
}

/// Evaluates the feedback at `x`.
pub fn eval_pwl_feedback(fb: &PwlFeedback, x: &DVector<f64>) -> Result<DVector<f64>> {
    fb.eval(x)
}
