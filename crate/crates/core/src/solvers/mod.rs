//! Small dense convex-optimization kernels: LP (simplex), QP (dual active
//! set) and SDP (primal-dual interior point).

pub mod lp;
pub mod qp;
pub mod sdp;
pub(crate) mod simplex;

pub use lp::{solve_lp, LpCertificate, LpOutcome, LpProblem, LpSolution, VarBound};
pub use qp::{solve_qp, solve_qp_with, QpOptions, QpOutcome, QpProblem, QpSolution};
pub use sdp::{
    solve_sdp, solve_sdp_with, Congruence, LmiBlock, SdpObjective, SdpOptions, SdpOutcome,
    SdpProblem, SdpSolution,
};
