//! Maximal λ-contractive sets by predecessor iteration, and invariant sets of
//! linear feedback laws.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;
use crate::lqr::LinearSystem;
use crate::polytope::{
    normalize_hrep_with, predecessor_with, scale, subset_report, HPolytope, DEFAULT_ROW_CAP, EPS_REDUNDANT,
    EPS_SET,
};

pub const DEFAULT_MAX_ITER: usize = 100;

/// Iterates `Ω_0 ⊇ Ω_1 ⊇ … ⊇ Ω_K` of a set recursion.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SetIterationLog {
    pub lambda: f64,
    pub iterates: Vec<HPolytope>,
    pub converged: bool,
    pub iterations: usize,
}

impl SetIterationLog {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("log serializes")
    }
}

pub fn max_contractive_set(sys: &LinearSystem, lambda: f64, max_iter: usize) -> Result<(HPolytope, SetIterationLog)> {
    max_contractive_set_with(sys, lambda, max_iter, Exec::default())
}

/// Fixed point of `Ω_k = Pre(λ Ω_{k-1}) ∩ X` from `Ω_0 = X`. With `λ = 1`
/// this is the maximal control invariant set.
pub fn max_contractive_set_with(
    sys: &LinearSystem,
    lambda: f64,
    max_iter: usize,
    exec: Exec,
) -> Result<(HPolytope, SetIterationLog)> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(Error::InvalidInput(format!("λ = {lambda} not in (0, 1]")));
    }
    if !sys.x.is_cset() || !sys.u.is_cset() {
        return Err(Error::NotCset);
    }
    let x = normalize_hrep_with(&sys.x, EPS_REDUNDANT, exec)?;
    let mut log = SetIterationLog { lambda, iterates: vec![x.clone()], converged: false, iterations: 0 };
    let mut omega = x.clone();
    for k in 1..=max_iter {
        let pre = predecessor_with(&scale(&omega, lambda)?, &sys.a, &sys.b, &sys.u, DEFAULT_ROW_CAP, exec)?;
        let next = match normalize_hrep_with(&pre.stack(&x)?, EPS_REDUNDANT, exec) {
            Ok(p) => p,
            Err(Error::EmptyPolytope) => return Err(Error::EmptyResult),
            Err(e) => return Err(e),
        };
        log::debug!("contractive set iteration {k}: {} rows", next.num_rows());
        // Ω_k ⊆ Ω_{k-1} holds by construction; equality needs the other side.
        let done = subset_report(&omega, &next, exec)?.holds(EPS_SET) && subset_report(&next, &omega, exec)?.holds(EPS_SET);
        log.iterates.push(next.clone());
        log.iterations = k;
        omega = next;
        if done {
            log.converged = true;
            return Ok((omega, log));
        }
    }
    Err(Error::NotConverged { max_iter, last: Some(Box::new(omega)) })
}

pub fn lqr_invariant_set(sys: &LinearSystem, l: &DMatrix<f64>, max_iter: usize) -> Result<HPolytope> {
    lqr_invariant_set_with(sys, l, max_iter, Exec::default())
}

/// Largest invariant set of `x+ = (A − BL) x` inside `X ∩ {x : −Lx ∈ U}`.
pub fn lqr_invariant_set_with(sys: &LinearSystem, l: &DMatrix<f64>, max_iter: usize, exec: Exec) -> Result<HPolytope> {
    if l.shape() != (sys.input_dim(), sys.state_dim()) {
        return Err(Error::DimensionMismatch("gain has wrong shape".into()));
    }
    let acl = sys.closed_loop(l);
    let rho = linalg::spectral_radius(&acl);
    if rho >= 1.0 {
        return Err(Error::UnstableClosedLoop(rho));
    }
    let input_rows = sys.u.preimage(&(-l))?;
    let mut omega = normalize_hrep_with(&sys.x.stack(&input_rows)?, EPS_REDUNDANT, exec)?;
    for k in 1..=max_iter {
        let next = normalize_hrep_with(&omega.stack(&omega.preimage(&acl)?)?, EPS_REDUNDANT, exec)?;
        log::debug!("feedback invariant set iteration {k}: {} rows", next.num_rows());
        let done = subset_report(&omega, &next, exec)?.holds(EPS_SET);
        omega = next;
        if done {
            return Ok(omega);
        }
    }
    Err(Error::NotConverged { max_iter, last: Some(Box::new(omega)) })
}
