//! Quadratic terminal costs for a piecewise-linear feedback: one LMI per
//! simplex, solved as an SDP and then certified by independent sampling.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{self, serde_mat, serde_mat_vec};
use crate::lqr::LinearSystem;
use crate::polytope::{hull, HPolytope};
use crate::solvers::{solve_sdp, Congruence, LmiBlock, SdpObjective, SdpOutcome, SdpProblem};
use crate::vertex_controls::PwlFeedback;

/// Every normalized block is required to be `⪯ −LMI_MARGIN · I`, which keeps
/// the unnormalized blocks below the certification threshold after rounding.
const LMI_MARGIN: f64 = 1e-8;
pub const DEFAULT_SAMPLES_PER_SIMPLEX: usize = 200;
pub const LMI_TOL: f64 = 1e-7;
pub const DECREASE_TOL: f64 = 1e-6;
pub const INVARIANCE_TOL: f64 = 1e-7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertReport {
    pub max_lmi_eigenvalue: f64,
    /// Samples per simplex.
    pub n_samples: usize,
    pub seed: u64,
    /// `max (v̂(Ax+Bu) − v̂(x) + xᵀQx + uᵀRu)` over all samples.
    pub max_decrease_violation: f64,
    /// `max −margin_C(Ax+Bu)` over all samples (`<= 0` means inside).
    pub max_terminal_set_violation: f64,
    pub terminal_set_invariance_ok: bool,
}

impl CertReport {
    pub fn passed(&self) -> bool {
        self.max_lmi_eigenvalue <= LMI_TOL
            && self.max_decrease_violation <= DECREASE_TOL
            && self.terminal_set_invariance_ok
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TerminalCost {
    #[serde(rename = "P", with = "serde_mat")]
    pub p: DMatrix<f64>,
    #[serde(rename = "objective")]
    pub objective_used: SdpObjective,
    pub objective_value: f64,
    #[serde(rename = "W", with = "serde_mat_vec")]
    pub w: Vec<DMatrix<f64>>,
    #[serde(rename = "cert_report")]
    pub certification: CertReport,
}

/// Everything needed to replay the certification offline.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateBundle {
    pub system: LinearSystem,
    pub feedback: PwlFeedback,
    pub terminal_cost: TerminalCost,
}

impl CertificateBundle {
    /// Re-runs [`certify`] with the stored settings.
    pub fn replay(&self) -> Result<CertReport> {
        let c = &self.terminal_cost.certification;
        certify(&self.terminal_cost.p, &self.feedback, &self.system, c.n_samples, c.seed)
    }
}

#[derive(Clone, Debug)]
pub struct TerminalCostOptions {
    pub objective: SdpObjective,
    /// Reference for the distance objective; the Riccati solution if `None`.
    pub reference: Option<DMatrix<f64>>,
    pub n_samples: usize,
    pub seed: u64,
    pub exec: Exec,
}

impl Default for TerminalCostOptions {
    fn default() -> Self {
        TerminalCostOptions {
            objective: SdpObjective::Trace,
            reference: None,
            n_samples: DEFAULT_SAMPLES_PER_SIMPLEX,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

/// One block per simplex:
/// `(AV_k+BU_k)ᵀP(AV_k+BU_k) − V_kᵀPV_k + V_kᵀQV_k + U_kᵀRU_k + W_k ⪯ 0`.
pub fn assemble_lmi(fb: &PwlFeedback, sys: &LinearSystem) -> Result<SdpProblem> {
    let n = sys.state_dim();
    if fb.state_dim() != n || fb.input_dim() != sys.input_dim() {
        return Err(Error::DimensionMismatch("feedback and system differ in dimension".into()));
    }
    let blocks = fb
        .pieces()
        .iter()
        .map(|pc| {
            let next = &sys.a * &pc.v + &sys.b * &pc.u;
            let constant = pc.v.transpose() * &sys.q * &pc.v + pc.u.transpose() * &sys.r * &pc.u;
            LmiBlock {
                constant: linalg::symmetrize(&constant),
                congruences: vec![Congruence { sign: 1.0, g: next }, Congruence { sign: -1.0, g: pc.v.clone() }],
            }
        })
        .collect();
    Ok(SdpProblem::new(SdpObjective::Trace, n, blocks))
}

pub fn compute_terminal_cost(fb: &PwlFeedback, sys: &LinearSystem, objective: SdpObjective) -> Result<TerminalCost> {
    compute_terminal_cost_with(fb, sys, &TerminalCostOptions { objective, ..Default::default() })
}

pub fn compute_terminal_cost_with(fb: &PwlFeedback, sys: &LinearSystem, opts: &TerminalCostOptions) -> Result<TerminalCost> {
    let raw = assemble_lmi(fb, sys)?;
    // Each block is divided by the squared size of its vertices so that all
    // blocks are of comparable magnitude inside the solver.
    let scales: Vec<f64> = fb.pieces().iter().map(|pc| linalg::max_abs(&pc.v).powi(2).max(1e-300)).collect();
    let mut sdp = raw.clone();
    for (b, &s) in sdp.lmi_blocks.iter_mut().zip(&scales) {
        b.constant /= s;
        for c in &mut b.congruences {
            c.g /= s.sqrt();
        }
    }
    sdp.objective = opts.objective;
    sdp.lmi_margin = LMI_MARGIN;
    match opts.objective {
        SdpObjective::Trace => {}
        SdpObjective::DistanceToReference => {
            sdp.reference = Some(match &opts.reference {
                Some(r) => r.clone(),
                None => sys.dare()?.p_inf,
            });
        }
        SdpObjective::VertexWeighted => {
            sdp.vertex_weights = Some(fb.fan().parent.vertices().to_vec());
        }
    }
    let sol = match solve_sdp(&sdp)? {
        SdpOutcome::Optimal(s) => s,
        SdpOutcome::Infeasible { .. } => return Err(Error::InfeasibleTerminalCost),
    };
    let w: Vec<DMatrix<f64>> = sol.w.iter().zip(&scales).map(|(w, &s)| w * s).collect();
    let p = linalg::symmetrize(&sol.p);
    let mut report = certify_with(&p, fb, sys, opts.n_samples, opts.seed, opts.exec)?;
    // The report uses the multipliers found by the solver.
    report.max_lmi_eigenvalue = max_block_eigenvalue(&raw, &p, &w);
    if !report.passed() {
        log::warn!(
            "terminal cost did not certify: lmi {:e}, decrease {:e}, set {:e}",
            report.max_lmi_eigenvalue,
            report.max_decrease_violation,
            report.max_terminal_set_violation
        );
    }
    Ok(TerminalCost {
        objective_value: sdp.objective_value(&p),
        p,
        objective_used: opts.objective,
        w,
        certification: report,
    })
}

fn max_block_eigenvalue(raw: &SdpProblem, p: &DMatrix<f64>, w: &[DMatrix<f64>]) -> f64 {
    raw.lmi_blocks
        .iter()
        .zip(w)
        .map(|(b, wk)| linalg::max_eigenvalue(&b.evaluate(p, Some(wk))))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Best multiplier for a fixed `P`: the off-diagonal entries of `−M_k` that
/// are positive, i.e. the nonnegative `W_k` that cancels them.
fn greedy_multiplier(block: &DMatrix<f64>) -> DMatrix<f64> {
    let d = block.nrows();
    let mut w = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            if i != j {
                w[(i, j)] = (-block[(i, j)]).max(0.0);
            }
        }
    }
    w
}

pub fn certify(p: &DMatrix<f64>, fb: &PwlFeedback, sys: &LinearSystem, n_samples: usize, seed: u64) -> Result<CertReport> {
    certify_with(p, fb, sys, n_samples, seed, Exec::default())
}

/// Checks `P` independently of any solver output. The LMI eigenvalue uses,
/// per block, a nonnegative multiplier that cancels the negative off-diagonal
/// entries of the block (a valid but not always optimal choice). Sampling
/// draws `n_samples` barycentric-uniform points in every simplex.
pub fn certify_with(
    p: &DMatrix<f64>,
    fb: &PwlFeedback,
    sys: &LinearSystem,
    n_samples: usize,
    seed: u64,
    exec: Exec,
) -> Result<CertReport> {
    let n = sys.state_dim();
    if p.shape() != (n, n) {
        return Err(Error::DimensionMismatch("P has wrong shape".into()));
    }
    let p = linalg::symmetrize(p);
    let raw = assemble_lmi(fb, sys)?;
    let w: Vec<DMatrix<f64>> = raw
        .lmi_blocks
        .iter()
        .map(|b| greedy_multiplier(&b.evaluate(&p, None)))
        .collect();
    let max_lmi_eigenvalue = max_block_eigenvalue(&raw, &p, &w);

    let terminal: HPolytope = hull(&fb.fan().parent)?;
    let scale = 1.0 + terminal.g().amax();
    let per_simplex = exec.try_map_indexed(fb.pieces().len(), |k| -> Result<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(k as u64);
        let v = &fb.pieces()[k].v;
        let mut worst_dec = f64::NEG_INFINITY;
        let mut worst_set = f64::NEG_INFINITY;
        for _ in 0..n_samples {
            let x = v * barycentric_sample(&mut rng, n);
            let u = fb.eval(&x)?;
            let next = &sys.a * &x + &sys.b * &u;
            let dec = next.dot(&(&p * &next)) - x.dot(&(&p * &x)) + x.dot(&(&sys.q * &x)) + u.dot(&(&sys.r * &u));
            worst_dec = worst_dec.max(dec);
            worst_set = worst_set.max(-terminal.margin(&next));
        }
        Ok((worst_dec, worst_set))
    })?;
    let max_decrease_violation = per_simplex.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
    let max_terminal_set_violation = per_simplex.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    Ok(CertReport {
        max_lmi_eigenvalue,
        n_samples,
        seed,
        max_decrease_violation,
        max_terminal_set_violation,
        terminal_set_invariance_ok: max_terminal_set_violation <= INVARIANCE_TOL * scale,
    })
}

/// Uniform point of the standard simplex `{p >= 0, Σp <= 1}` via normalized
/// exponentials (the origin takes the last weight).
fn barycentric_sample(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    let e: Vec<f64> = (0..=n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let total: f64 = e.iter().sum();
    DVector::from_iterator(n, e[..n].iter().map(|v| v / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polytope::{boundary_triangulation, vertices};
    use crate::vertex_controls::{build_pwl_feedback, recover_vertex_controls, LpObjective};

    fn rotation() -> LinearSystem {
        LinearSystem::new(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
            DMatrix::from_column_slice(2, 1, &[0.0, 1.0]),
            DMatrix::identity(2, 2),
            DMatrix::identity(1, 1),
            HPolytope::from_box(&[5.0, 5.0]).unwrap(),
            HPolytope::from_box(&[1.0]).unwrap(),
        )
        .unwrap()
    }

    fn feedback(sys: &LinearSystem) -> PwlFeedback {
        let v = vertices(&sys.x).unwrap();
        let fan = boundary_triangulation(&v).unwrap();
        let sol = recover_vertex_controls(&v, sys, 1.0, LpObjective::MinDeviationFromLinear, None).unwrap();
        build_pwl_feedback(&fan, &sol).unwrap()
    }

    #[test]
    fn rotation_example_certifies() {
        let sys = rotation();
        let fb = feedback(&sys);
        let tc = compute_terminal_cost(&fb, &sys, SdpObjective::Trace).unwrap();
        assert!(tc.certification.passed(), "{:?}", tc.certification);
        assert!(linalg::min_eigenvalue(&tc.p) > 0.0);
    }

    #[test]
    fn published_rotation_cost_certifies_for_its_law() {
        // Q_T = [[9.65, 0.5], [0.5, 10.67]] is the cost-to-go of u = (0.1, −0.1) x.
        let sys = rotation();
        let v = vertices(&sys.x).unwrap();
        let fan = boundary_triangulation(&v).unwrap();
        let l = DMatrix::from_row_slice(1, 2, &[-0.1, 0.1]);
        let controls: Vec<DVector<f64>> = v.vertices().iter().map(|x| -(&l * x)).collect();
        let fb = PwlFeedback::from_vertex_controls(&fan, &controls).unwrap();
        let exact = sys.feedback_cost(&l).unwrap();
        let rep = certify(&exact, &fb, &sys, 200, 1).unwrap();
        assert!(rep.passed(), "{rep:?}");
        let tc = compute_terminal_cost(&fb, &sys, SdpObjective::Trace).unwrap();
        assert!(tc.certification.passed());
        assert!(tc.p.trace() <= exact.trace() + 1e-5);
    }

    #[test]
    fn zero_cost_fails() {
        let sys = rotation();
        let fb = feedback(&sys);
        let rep = certify(&DMatrix::zeros(2, 2), &fb, &sys, 50, 3).unwrap();
        assert!(!rep.passed());
        assert!(rep.max_decrease_violation > 0.0);
    }

    #[test]
    fn identity_vertex_block() {
        let sys = rotation();
        let fb = feedback(&sys);
        let sdp = assemble_lmi(&fb, &sys).unwrap();
        assert_eq!(sdp.lmi_blocks.len(), 4);
        // Premultiplied block equals V_kᵀ (A_kᵀPA_k − P + Q_k) V_k.
        let p = DMatrix::from_row_slice(2, 2, &[3.0, 0.4, 0.4, 2.0]);
        for (b, pc) in sdp.lmi_blocks.iter().zip(fb.pieces()) {
            let ak = &sys.a - &sys.b * &pc.l;
            let qk = &sys.q + pc.l.transpose() * &sys.r * &pc.l;
            let direct = pc.v.transpose() * (ak.transpose() * &p * &ak - &p + qk) * &pc.v;
            assert!((b.evaluate(&p, None) - direct).amax() < 1e-9);
        }
    }

    #[test]
    fn samples_stay_in_simplex() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..1000 {
            let p = barycentric_sample(&mut rng, 3);
            assert!(p.iter().all(|&v| v >= 0.0) && p.sum() <= 1.0);
        }
    }
}
