//! Small dense SDPs of the form
//!
//! ```text
//! minimize    obj(P)
//! subject to  Σ_s sign_s G_sᵀ P G_s + C_k + W_k ⪯ -δ I     for every block k
//!             W_k = W_kᵀ elementwise >= 0                  (blocks with a multiplier)
//!             P ⪰ ε I
//! ```
//!
//! with `obj` one of trace, Frobenius distance to a reference, or a
//! vertex-weighted trace. The solver is a primal-dual interior point method
//! (HKM search direction, Mehrotra predictor-corrector) on the standard
//! inequality form `Z = C - Σ yᵢ Aᵢ ⪰ 0`. Each multiplier `W_k` only touches
//! its own block, so the Schur complement has an arrow structure and is solved
//! by eliminating the `W_k` groups block by block.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, serde_mat, serde_mat_vec, serde_vec_list, sym_basis, sym_index_pairs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SdpObjective {
    #[default]
    Trace,
    DistanceToReference,
    VertexWeighted,
}

/// One term `sign · Gᵀ P G` of an LMI block.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Congruence {
    pub sign: f64,
    #[serde(with = "serde_mat")]
    pub g: DMatrix<f64>,
}

/// `Σ sign_s G_sᵀ P G_s + constant (+ W) ⪯ 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LmiBlock {
    #[serde(with = "serde_mat")]
    pub constant: DMatrix<f64>,
    pub congruences: Vec<Congruence>,
}

impl LmiBlock {
    pub fn dim(&self) -> usize {
        self.constant.nrows()
    }

    /// Evaluates the block at `(P, W)` (pass a zero `W` for blocks without multiplier).
    pub fn evaluate(&self, p: &DMatrix<f64>, w: Option<&DMatrix<f64>>) -> DMatrix<f64> {
        let mut m = self.constant.clone();
        for c in &self.congruences {
            m += c.g.transpose() * p * &c.g * c.sign;
        }
        if let Some(w) = w {
            m += w;
        }
        linalg::symmetrize(&m)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpProblem {
    pub objective: SdpObjective,
    pub psd_var_dim: usize,
    pub lmi_blocks: Vec<LmiBlock>,
    /// Indices of the blocks that carry an elementwise-nonnegative multiplier `W_k`.
    pub nonneg_vars: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_mat")]
    pub reference: Option<DMatrix<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_vec_list")]
    pub vertex_weights: Option<Vec<DVector<f64>>>,
    /// `P ⪰ min_eig · I`.
    pub min_eig: f64,
    /// Every block is required to be `⪯ -lmi_margin · I`.
    pub lmi_margin: f64,
}

mod opt_mat {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        match m {
            Some(m) => s.serialize_some(&crate::linalg::to_rows(m)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        use serde::de::Error as _;
        Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|rows| crate::linalg::from_rows(&rows).map_err(D::Error::custom))
            .transpose()
    }
}

mod opt_vec_list {
    use nalgebra::DVector;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Vec<DVector<f64>>>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(v) => s.serialize_some(&v.iter().map(|x| x.as_slice().to_vec()).collect::<Vec<_>>()),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<Option<Vec<DVector<f64>>>, D::Error> {
        Ok(Option::<Vec<Vec<f64>>>::deserialize(d)?
            .map(|v| v.into_iter().map(DVector::from_vec).collect()))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SdpSolution {
    #[serde(with = "serde_mat")]
    pub p: DMatrix<f64>,
    /// One multiplier per block (zero for blocks without one).
    #[serde(with = "serde_mat_vec")]
    pub w: Vec<DMatrix<f64>>,
    pub objective: f64,
    pub duality_gap: f64,
    /// Largest eigenvalue over all blocks evaluated at `(P, W_k)`.
    pub max_block_eigenvalue: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum SdpOutcome {
    Optimal(SdpSolution),
    /// Primal-side ray `X ⪰ 0` with `A(X) ≈ 0`, `⟨C, X⟩ < 0`, normalized to `⟨C, X⟩ = -1`.
    Infeasible {
        #[serde(with = "serde_vec_list")]
        certificate_norms: Vec<DVector<f64>>,
    },
}

#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub max_iter: usize,
    pub gap_tol: f64,
    pub feas_tol: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        SdpOptions {
            max_iter: 120,
            gap_tol: 1e-9,
            feas_tol: 1e-10,
        }
    }
}

impl SdpProblem {
    /// Block set with the default margins (`P ⪰ 1e-6 I`, no LMI margin).
    pub fn new(objective: SdpObjective, psd_var_dim: usize, lmi_blocks: Vec<LmiBlock>) -> Self {
        let nonneg_vars = (0..lmi_blocks.len()).collect();
        SdpProblem {
            objective,
            psd_var_dim,
            lmi_blocks,
            nonneg_vars,
            reference: None,
            vertex_weights: None,
            min_eig: 1e-6,
            lmi_margin: 0.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.psd_var_dim;
        if n == 0 {
            return Err(Error::InvalidInput("SDP variable dimension is zero".into()));
        }
        for (k, b) in self.lmi_blocks.iter().enumerate() {
            let d = b.dim();
            if b.constant.ncols() != d {
                return Err(Error::DimensionMismatch(format!("block {k} constant is not square")));
            }
            for c in &b.congruences {
                if c.g.nrows() != n || c.g.ncols() != d {
                    return Err(Error::DimensionMismatch(format!(
                        "block {k} congruence is {}x{}, expected {n}x{d}",
                        c.g.nrows(),
                        c.g.ncols()
                    )));
                }
            }
        }
        if self.nonneg_vars.iter().any(|&k| k >= self.lmi_blocks.len()) {
            return Err(Error::InvalidInput("multiplier index out of range".into()));
        }
        match self.objective {
            SdpObjective::DistanceToReference => match &self.reference {
                Some(r) if r.shape() == (n, n) => {}
                _ => return Err(Error::InvalidInput("distance objective needs an n x n reference".into())),
            },
            SdpObjective::VertexWeighted => match &self.vertex_weights {
                Some(v) if v.iter().all(|x| x.len() == n) => {}
                _ => return Err(Error::InvalidInput("vertex objective needs n-vectors".into())),
            },
            SdpObjective::Trace => {}
        }
        Ok(())
    }

    /// Objective value at `P`.
    pub fn objective_value(&self, p: &DMatrix<f64>) -> f64 {
        match self.objective {
            SdpObjective::Trace => p.trace(),
            SdpObjective::DistanceToReference => {
                (p - self.reference.as_ref().expect("validated")).norm()
            }
            SdpObjective::VertexWeighted => self
                .vertex_weights
                .as_ref()
                .expect("validated")
                .iter()
                .map(|v| v.dot(&(p * v)))
                .sum(),
        }
    }
}

/// Cone block of the standard form `Z = C - Σ yᵢ Aᵢ ⪰ 0`.
struct ConeBlock {
    c: DMatrix<f64>,
    terms: Vec<(usize, DMatrix<f64>)>,
    group: Option<usize>,
}

struct Conic {
    nvars: usize,
    n_global: usize,
    groups: Vec<std::ops::Range<usize>>,
    blocks: Vec<ConeBlock>,
    /// Maximize `bᵀy`.
    b: DVector<f64>,
}

enum Slot {
    Global(usize),
    Local(usize, usize),
}

impl Conic {
    fn slot(&self, var: usize) -> Slot {
        if var < self.n_global {
            return Slot::Global(var);
        }
        let g = self
            .groups
            .iter()
            .position(|r| r.contains(&var))
            .expect("variable belongs to a group");
        Slot::Local(g, var - self.groups[g].start)
    }

    fn a_op(&self, x: &[DMatrix<f64>]) -> DVector<f64> {
        let mut out = DVector::zeros(self.nvars);
        for (blk, xb) in self.blocks.iter().zip(x) {
            for (i, a) in &blk.terms {
                out[*i] += a.dot(xb);
            }
        }
        out
    }

    fn at_op(&self, k: usize, y: &DVector<f64>) -> DMatrix<f64> {
        let blk = &self.blocks[k];
        let d = blk.c.nrows();
        let mut m = DMatrix::zeros(d, d);
        for (i, a) in &blk.terms {
            if y[*i] != 0.0 {
                m += a * y[*i];
            }
        }
        m
    }
}

/// Builds the conic form. Variable layout: `svec(P)` coordinates, then the
/// Frobenius epigraph variable (if any), then the `W_k` coordinates per block.
fn build_conic(p: &SdpProblem) -> (Conic, Vec<Option<std::ops::Range<usize>>>) {
    let n = p.psd_var_dim;
    let pairs = sym_index_pairs(n);
    let np = pairs.len();
    let has_t = p.objective == SdpObjective::DistanceToReference;
    let n_global = np + usize::from(has_t);
    let basis: Vec<DMatrix<f64>> = pairs.iter().map(|&ij| sym_basis(n, ij)).collect();

    let mut nvars = n_global;
    let mut groups = Vec::new();
    let mut w_ranges = vec![None; p.lmi_blocks.len()];
    let mut blocks = Vec::new();

    for (k, lmi) in p.lmi_blocks.iter().enumerate() {
        let d = lmi.dim();
        let mut terms = Vec::new();
        for (idx, e) in basis.iter().enumerate() {
            let mut a = DMatrix::zeros(d, d);
            for c in &lmi.congruences {
                a += c.g.transpose() * e * &c.g * c.sign;
            }
            terms.push((idx, linalg::symmetrize(&a)));
        }
        let c = -&lmi.constant - DMatrix::identity(d, d) * p.lmi_margin;
        let mut group = None;
        if p.nonneg_vars.contains(&k) {
            let wpairs = sym_index_pairs(d);
            let start = nvars;
            let g = groups.len();
            for (off, &ij) in wpairs.iter().enumerate() {
                terms.push((start + off, sym_basis(d, ij)));
                // w_ij >= 0 as its own 1x1 cone.
                blocks.push(ConeBlock {
                    c: DMatrix::zeros(1, 1),
                    terms: vec![(start + off, DMatrix::from_element(1, 1, -1.0))],
                    group: Some(g),
                });
            }
            nvars += wpairs.len();
            groups.push(start..nvars);
            w_ranges[k] = Some(start..nvars);
            group = Some(g);
        }
        blocks.push(ConeBlock {
            c: linalg::symmetrize(&c),
            terms,
            group,
        });
    }

    // P - ε I ⪰ 0
    blocks.push(ConeBlock {
        c: DMatrix::identity(n, n) * (-p.min_eig),
        terms: basis.iter().enumerate().map(|(i, e)| (i, -e)).collect(),
        group: None,
    });

    let mut cost = DVector::zeros(nvars);
    match p.objective {
        SdpObjective::Trace => {
            for (k, &(i, j)) in pairs.iter().enumerate() {
                if i == j {
                    cost[k] = 1.0;
                }
            }
        }
        SdpObjective::VertexWeighted => {
            for v in p.vertex_weights.as_ref().expect("validated") {
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    cost[k] += if i == j { v[i] * v[i] } else { 2.0 * v[i] * v[j] };
                }
            }
        }
        SdpObjective::DistanceToReference => {
            let r = p.reference.as_ref().expect("validated");
            let t = np;
            cost[t] = 1.0;
            // [[t, dᵀ], [d, t I]] ⪰ 0 with d = svec(P - R).
            let dim = 1 + np;
            let mut c = DMatrix::zeros(dim, dim);
            let mut terms = vec![(t, -DMatrix::identity(dim, dim))];
            for (k, &(i, j)) in pairs.iter().enumerate() {
                let wgt = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                c[(0, 1 + k)] = -wgt * r[(i, j)];
                c[(1 + k, 0)] = -wgt * r[(i, j)];
                let mut a = DMatrix::zeros(dim, dim);
                a[(0, 1 + k)] = -wgt;
                a[(1 + k, 0)] = -wgt;
                terms.push((k, a));
            }
            blocks.push(ConeBlock { c, terms, group: None });
        }
    }

    (
        Conic {
            nvars,
            n_global,
            groups,
            blocks,
            b: -cost,
        },
        w_ranges,
    )
}

pub fn solve_sdp(p: &SdpProblem) -> Result<SdpOutcome> {
    solve_sdp_with(p, &SdpOptions::default())
}

pub fn solve_sdp_with(p: &SdpProblem, opts: &SdpOptions) -> Result<SdpOutcome> {
    p.validate()?;
    let (conic, w_ranges) = build_conic(p);
    match interior_point(&conic, opts)? {
        IpmResult::Optimal { y, gap, iterations } => {
            let n = p.psd_var_dim;
            let np = n * (n + 1) / 2;
            let pm = linalg::sym_from_coords(n, &y.as_slice()[..np]);
            let w: Vec<DMatrix<f64>> = p
                .lmi_blocks
                .iter()
                .zip(&w_ranges)
                .map(|(b, r)| match r {
                    Some(r) => {
                        let mut w = linalg::sym_from_coords(b.dim(), &y.as_slice()[r.clone()]);
                        w.iter_mut().for_each(|v| *v = v.max(0.0));
                        w
                    }
                    None => DMatrix::zeros(b.dim(), b.dim()),
                })
                .collect();
            let max_block_eigenvalue = p
                .lmi_blocks
                .iter()
                .zip(&w)
                .map(|(b, wk)| linalg::max_eigenvalue(&b.evaluate(&pm, Some(wk))))
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(SdpOutcome::Optimal(SdpSolution {
                objective: p.objective_value(&pm),
                p: pm,
                w,
                duality_gap: gap,
                max_block_eigenvalue,
                iterations,
            }))
        }
        IpmResult::Infeasible { x } => Ok(SdpOutcome::Infeasible {
            certificate_norms: x
                .iter()
                .map(|m| DVector::from_iterator(m.nrows(), m.symmetric_eigenvalues().iter().copied()))
                .collect(),
        }),
    }
}

enum IpmResult {
    Optimal {
        y: DVector<f64>,
        gap: f64,
        iterations: usize,
    },
    Infeasible {
        x: Vec<DMatrix<f64>>,
    },
}

struct Schur {
    gg: DMatrix<f64>,
    gl: Vec<DMatrix<f64>>,
    ll: Vec<DMatrix<f64>>,
}

struct SchurFactor {
    ll: Vec<Cholesky<f64, Dyn>>,
    /// `M_ll⁻¹ M_lg` per group.
    ll_inv_lg: Vec<DMatrix<f64>>,
    reduced: Cholesky<f64, Dyn>,
}

fn inner(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.dot(y)).sum()
}

/// Largest `α <= 1/τ`-scaled step keeping `X + α ΔX ⪰ 0`.
fn max_step(x: &DMatrix<f64>, dx: &DMatrix<f64>) -> f64 {
    if x.nrows() == 1 {
        let d = dx[(0, 0)];
        return if d < 0.0 { -x[(0, 0)] / d } else { f64::INFINITY };
    }
    let Some(chol) = Cholesky::new(x.clone()) else {
        return 0.0;
    };
    let l = chol.l();
    let Some(linv) = l.clone().try_inverse() else {
        return 0.0;
    };
    let m = linalg::symmetrize(&(&linv * dx * linv.transpose()));
    let lmin = m.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    if lmin < 0.0 {
        -1.0 / lmin
    } else {
        f64::INFINITY
    }
}

fn interior_point(conic: &Conic, opts: &SdpOptions) -> Result<IpmResult> {
    let nb = conic.blocks.len();
    let total_dim: usize = conic.blocks.iter().map(|b| b.c.nrows()).sum();
    let norm_b = conic.b.norm();
    let norm_c = conic.blocks.iter().map(|b| b.c.norm_squared()).sum::<f64>().sqrt();

    // Starting point in the style of SDPT3.
    let mut a_norm_max: f64 = 0.0;
    let mut a_norms = vec![0.0f64; conic.nvars];
    for blk in &conic.blocks {
        for (i, a) in &blk.terms {
            a_norms[*i] += a.norm_squared();
        }
    }
    for v in a_norms.iter_mut() {
        *v = v.sqrt();
        a_norm_max = a_norm_max.max(*v);
    }
    let mut xi: f64 = 10.0;
    for i in 0..conic.nvars {
        xi = xi.max((1.0 + conic.b[i].abs()) / (1.0 + a_norms[i]) * (total_dim as f64).sqrt());
    }
    let eta = 10f64.max(norm_c).max(a_norm_max).max((total_dim as f64).sqrt());

    let mut x: Vec<DMatrix<f64>> = conic
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.c.nrows(), b.c.nrows()) * xi)
        .collect();
    let mut z: Vec<DMatrix<f64>> = conic
        .blocks
        .iter()
        .map(|b| DMatrix::identity(b.c.nrows(), b.c.nrows()) * eta)
        .collect();
    let mut y = DVector::zeros(conic.nvars);

    let mut stall = 0usize;
    for iter in 0..opts.max_iter {
        let rp = &conic.b - conic.a_op(&x);
        let rd: Vec<DMatrix<f64>> = (0..nb).map(|k| &conic.blocks[k].c - &z[k] - conic.at_op(k, &y)).collect();
        let pobj: f64 = conic.blocks.iter().zip(&x).map(|(b, xb)| b.c.dot(xb)).sum();
        let dobj = conic.b.dot(&y);
        let xz = inner(&x, &z);
        let mu = xz / total_dim as f64;
        let pinf = rp.norm() / (1.0 + norm_b);
        let dinf = rd.iter().map(|m| m.norm_squared()).sum::<f64>().sqrt() / (1.0 + norm_c);
        let rel_gap = (pobj - dobj).abs().max(xz) / (1.0 + pobj.abs() + dobj.abs());

        log::trace!(
            "sdp iter {iter}: pobj {pobj:.6e} dobj {dobj:.6e} gap {rel_gap:.2e} pinf {pinf:.2e} dinf {dinf:.2e}"
        );

        if rel_gap < opts.gap_tol && pinf < opts.feas_tol && dinf < opts.feas_tol {
            return Ok(IpmResult::Optimal {
                y,
                gap: pobj - dobj,
                iterations: iter,
            });
        }
        // Unbounded primal ray certifies infeasibility of the inequality form.
        if pobj < 0.0 {
            let ax = conic.a_op(&x);
            if ax.norm() / -pobj < 1e-8 * (1.0 + a_norm_max) && dinf > 1e-12 {
                let s = -pobj;
                return Ok(IpmResult::Infeasible {
                    x: x.iter().map(|m| m / s).collect(),
                });
            }
        }

        let zinv: Vec<DMatrix<f64>> = z
            .iter()
            .map(|zb| {
                Cholesky::new(zb.clone())
                    .map(|c| c.inverse())
                    .ok_or_else(|| Error::numerical("sdp", "dual slack lost definiteness"))
            })
            .collect::<Result<_>>()?;

        let schur = assemble_schur(conic, &x, &zinv);
        let factor = factor_schur(conic, schur)?;

        // X R_d Z⁻¹ contribution shared by predictor and corrector.
        let x_rd_zinv: Vec<DMatrix<f64>> = (0..nb).map(|k| &x[k] * &rd[k] * &zinv[k]).collect();

        let direction = |t: &[DMatrix<f64>]| -> (DVector<f64>, Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
            let lhs: Vec<DMatrix<f64>> = (0..nb).map(|k| &t[k] - &x_rd_zinv[k]).collect();
            let h = &rp - conic.a_op(&lhs);
            let dy = solve_schur(conic, &factor, &h);
            let dz: Vec<DMatrix<f64>> = (0..nb).map(|k| &rd[k] - conic.at_op(k, &dy)).collect();
            let dx: Vec<DMatrix<f64>> = (0..nb)
                .map(|k| &t[k] - linalg::symmetrize(&(&x[k] * &dz[k] * &zinv[k])))
                .collect();
            (dy, dx, dz)
        };

        // Predictor.
        let t_pred: Vec<DMatrix<f64>> = x.iter().map(|m| -m).collect();
        let (_, dx_p, dz_p) = direction(&t_pred);
        let ap = steplen(&x, &dx_p).min(1.0);
        let ad = steplen(&z, &dz_p).min(1.0);
        let xz_next: f64 = (0..nb)
            .map(|k| (&x[k] + &dx_p[k] * ap).dot(&(&z[k] + &dz_p[k] * ad)))
            .sum();
        let ratio = (xz_next / xz).clamp(0.0, 1.0);
        let expo = if ap.min(ad) > 0.5 { 3.0 } else { 2.0 };
        let sigma = ratio.powf(expo).clamp(0.0, 1.0);

        // Corrector.
        let t_corr: Vec<DMatrix<f64>> = (0..nb)
            .map(|k| {
                &zinv[k] * (sigma * mu) - &x[k]
                    - linalg::symmetrize(&(&dx_p[k] * &dz_p[k] * &zinv[k]))
            })
            .collect();
        let (dy, dx, dz) = direction(&t_corr);
        let tau = 0.9 + 0.09 * ap.min(ad);
        let ap = (tau * steplen(&x, &dx)).min(1.0);
        let ad = (tau * steplen(&z, &dz)).min(1.0);
        if ap.min(ad) < 1e-10 {
            stall += 1;
            if stall > 5 {
                break;
            }
        } else {
            stall = 0;
        }
        for k in 0..nb {
            x[k] += &dx[k] * ap;
            x[k] = linalg::symmetrize(&x[k]);
            z[k] += &dz[k] * ad;
            z[k] = linalg::symmetrize(&z[k]);
        }
        y += dy * ad;
    }

    // Final attempt at an infeasibility verdict before giving up.
    let pobj: f64 = conic.blocks.iter().zip(&x).map(|(b, xb)| b.c.dot(xb)).sum();
    if pobj < 0.0 {
        let ax = conic.a_op(&x);
        if ax.norm() / -pobj < 1e-6 * (1.0 + a_norm_max) {
            let s = -pobj;
            return Ok(IpmResult::Infeasible {
                x: x.iter().map(|m| m / s).collect(),
            });
        }
    }
    Err(Error::numerical("sdp", "interior point method did not converge"))
}

fn steplen(x: &[DMatrix<f64>], dx: &[DMatrix<f64>]) -> f64 {
    x.iter().zip(dx).map(|(a, b)| max_step(a, b)).fold(f64::INFINITY, f64::min)
}

fn assemble_schur(conic: &Conic, x: &[DMatrix<f64>], zinv: &[DMatrix<f64>]) -> Schur {
    let ng = conic.n_global;
    let mut s = Schur {
        gg: DMatrix::zeros(ng, ng),
        gl: conic.groups.iter().map(|r| DMatrix::zeros(ng, r.len())).collect(),
        ll: conic.groups.iter().map(|r| DMatrix::zeros(r.len(), r.len())).collect(),
    };
    for (k, blk) in conic.blocks.iter().enumerate() {
        // G_j = X A_j Z⁻¹, M_ij += ⟨A_i, G_j⟩
        let gs: Vec<DMatrix<f64>> = blk.terms.iter().map(|(_, a)| &x[k] * a * &zinv[k]).collect();
        for (ti, (i, ai)) in blk.terms.iter().enumerate() {
            for (tj, (j, _)) in blk.terms.iter().enumerate() {
                let v = ai.dot(&gs[tj]);
                let _ = ti;
                match (conic.slot(*i), conic.slot(*j)) {
                    (Slot::Global(a), Slot::Global(b)) => s.gg[(a, b)] += v,
                    (Slot::Global(a), Slot::Local(g, b)) => s.gl[g][(a, b)] += v,
                    (Slot::Local(..), Slot::Global(_)) => {}
                    (Slot::Local(g, a), Slot::Local(h, b)) => {
                        debug_assert_eq!(g, h, "blocks couple at most one multiplier group");
                        debug_assert_eq!(Some(g), blk.group);
                        s.ll[g][(a, b)] += v;
                    }
                }
            }
        }
    }
    s
}

fn factor_schur(conic: &Conic, s: Schur) -> Result<SchurFactor> {
    let mut reduced = linalg::symmetrize(&s.gg);
    let mut ll = Vec::with_capacity(conic.groups.len());
    let mut ll_inv_lg = Vec::with_capacity(conic.groups.len());
    for (g, m) in s.ll.into_iter().enumerate() {
        let chol = Cholesky::new(linalg::symmetrize(&m))
            .ok_or_else(|| Error::numerical("sdp", "Schur block of a multiplier is not definite"))?;
        let lg = s.gl[g].transpose();
        let sol = chol.solve(&lg);
        reduced -= &s.gl[g] * &sol;
        ll.push(chol);
        ll_inv_lg.push(sol);
    }
    let reduced = regularized_cholesky(linalg::symmetrize(&reduced))?;
    Ok(SchurFactor {
        ll,
        ll_inv_lg,
        reduced,
    })
}

fn regularized_cholesky(m: DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    if let Some(c) = Cholesky::new(m.clone()) {
        return Ok(c);
    }
    let scale = m.diagonal().amax().max(1e-300);
    let n = m.nrows();
    let mut eps = 1e-14 * scale;
    for _ in 0..8 {
        if let Some(c) = Cholesky::new(&m + DMatrix::identity(n, n) * eps) {
            return Ok(c);
        }
        eps *= 100.0;
    }
    Err(Error::numerical("sdp", "reduced Schur complement is not definite"))
}

fn solve_schur(conic: &Conic, f: &SchurFactor, h: &DVector<f64>) -> DVector<f64> {
    let ng = conic.n_global;
    let mut hg = DVector::from_iterator(ng, h.iter().take(ng).copied());
    let mut local_sol = Vec::with_capacity(conic.groups.len());
    for (g, r) in conic.groups.iter().enumerate() {
        let hl = DVector::from_iterator(r.len(), h.as_slice()[r.clone()].iter().copied());
        let s = f.ll[g].solve(&hl);
        // M_gl M_ll⁻¹ h_l = (M_ll⁻¹ M_lg)ᵀ h_l
        hg -= f.ll_inv_lg[g].transpose() * &hl;
        local_sol.push(s);
    }
    let dg = f.reduced.solve(&hg);
    let mut out = DVector::zeros(conic.nvars);
    out.rows_mut(0, ng).copy_from(&dg);
    for (g, r) in conic.groups.iter().enumerate() {
        let dl = &local_sol[g] - &f.ll_inv_lg[g] * &dg;
        out.rows_mut(r.start, r.len()).copy_from(&dl);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lyapunov_block(a: &DMatrix<f64>, q: &DMatrix<f64>) -> LmiBlock {
        let n = a.nrows();
        LmiBlock {
            constant: q.clone(),
            congruences: vec![
                Congruence { sign: 1.0, g: a.clone() },
                Congruence { sign: -1.0, g: DMatrix::identity(n, n) },
            ],
        }
    }

    #[test]
    fn zero_dynamics_gives_q() {
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let mut prob = SdpProblem::new(SdpObjective::Trace, 2, vec![lyapunov_block(&DMatrix::zeros(2, 2), &q)]);
        prob.nonneg_vars.clear();
        let SdpOutcome::Optimal(s) = solve_sdp(&prob).unwrap() else {
            panic!("expected optimal")
        };
        assert!((&s.p - &q).amax() < 1e-6, "{}", s.p);
        assert!(s.max_block_eigenvalue <= 1e-7);
    }

    #[test]
    fn unstable_lyapunov_is_infeasible() {
        let a = DMatrix::from_row_slice(2, 2, &[1.2, 0.0, 0.0, 0.5]);
        let mut prob = SdpProblem::new(SdpObjective::Trace, 2, vec![lyapunov_block(&a, &DMatrix::identity(2, 2))]);
        prob.nonneg_vars.clear();
        assert!(matches!(solve_sdp(&prob).unwrap(), SdpOutcome::Infeasible { .. }));
    }

    #[test]
    fn distance_objective_recovers_feasible_reference() {
        let a = DMatrix::from_row_slice(2, 2, &[0.5, 0.1, 0.0, 0.3]);
        let q = DMatrix::identity(2, 2);
        let mut prob = SdpProblem::new(SdpObjective::DistanceToReference, 2, vec![lyapunov_block(&a, &q)]);
        // A feasible reference: a large multiple of identity.
        prob.reference = Some(DMatrix::identity(2, 2) * 10.0);
        let SdpOutcome::Optimal(s) = solve_sdp(&prob).unwrap() else {
            panic!("expected optimal")
        };
        assert!(s.objective < 1e-5, "objective {}", s.objective);
    }
}
