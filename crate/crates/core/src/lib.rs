//! Maximal control-invariant terminal sets for linear MPC, with piecewise-linear
//! vertex-control feedback and SDP-certified quadratic terminal costs.
//!
//! The pipeline is:
//!
//! 1. [`invariance::max_contractive_set`] computes the maximal λ-contractive set
//!    of a constrained linear system by predecessor iteration.
//! 2. [`polytope::vertices`] and [`polytope::boundary_triangulation`] split the
//!    set into simplices that all share the origin as a vertex.
//! 3. [`vertex_controls::recover_vertex_controls`] finds admissible controls at
//!    every vertex, and [`vertex_controls::build_pwl_feedback`] interpolates them
//!    into a continuous piecewise-linear feedback.
//! 4. [`terminal_cost::compute_terminal_cost`] solves a small SDP for a quadratic
//!    upper bound on the cost-to-go of that feedback and certifies it.
//!
//! The resulting `(set, P)` pair is a valid terminal set / terminal cost for
//! the receding-horizon controller in [`mpc`].

pub mod error;
pub mod exec;
pub mod invariance;
pub mod linalg;
pub mod lqr;
pub mod mpc;
pub mod pipeline;
pub mod polytope;
pub mod solvers;
pub mod terminal_cost;
pub mod vertex_controls;

pub use error::{Error, Result};
pub use exec::Exec;
pub use lqr::LinearSystem;
pub use polytope::{HPolytope, Simplex, SimplicialFan, VPolytope};
