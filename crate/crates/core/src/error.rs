use thiserror::Error;

use crate::polytope::HPolytope;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug, Clone)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("polytope is empty")]
    EmptyPolytope,
    #[error("polytope is unbounded")]
    UnboundedPolytope,
    #[error("polytope has empty interior")]
    DegeneratePolytope,
    #[error("set is not a C-set (some offset g_i <= 0)")]
    NotCset,
    #[error("origin is not in the interior of the polytope")]
    OriginNotInterior,
    #[error("Fourier-Motzkin elimination exceeded {cap} rows")]
    EliminationBlowup { cap: usize },

    #[error("set iteration did not converge within {max_iter} iterations")]
    NotConverged {
        max_iter: usize,
        last: Option<Box<HPolytope>>,
    },
    #[error("set iteration collapsed to an empty set")]
    EmptyResult,
    #[error("closed loop matrix is not Schur stable (spectral radius {0:.6})")]
    UnstableClosedLoop(f64),
    #[error("matrix is not Schur stable (spectral radius {0:.6})")]
    UnstableMatrix(f64),
    #[error("Riccati iterate lost positive semidefiniteness (min eigenvalue {0:e})")]
    IndefiniteIterate(f64),

    #[error("set is not {lambda}-contractive: vertex control LP infeasible at vertex {vertex}")]
    NotContractive { lambda: f64, vertex: usize },
    #[error("vertex matrix of simplex {0} is singular")]
    SingularVertexMatrix(usize),
    #[error("point lies outside every simplex of the fan")]
    OutsideFan,

    #[error("no quadratic terminal cost certifies this feedback; retry with a smaller lambda")]
    InfeasibleTerminalCost,
    #[error("planning problem is infeasible at this state")]
    InfeasibleState,
    #[error("constraints active at probe state {0}")]
    ConstraintsActive(usize),

    #[error("numerical failure in {solver}: {detail}")]
    NumericalFailure { solver: &'static str, detail: String },
    #[error("{solver} hit the iteration limit ({iterations})")]
    MaxIterations {
        solver: &'static str,
        iterations: usize,
    },
}

impl Error {
    pub(crate) fn numerical(solver: &'static str, detail: impl Into<String>) -> Self {
        Error::NumericalFailure {
            solver,
            detail: detail.into(),
        }
    }
}
