//! The four construction steps chained: invariant set, triangulation, vertex
//! controls, terminal cost.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::Exec;
use crate::invariance::{max_contractive_set_with, SetIterationLog, DEFAULT_MAX_ITER};
use crate::lqr::LinearSystem;
use crate::polytope::{boundary_triangulation, vertices_with, HPolytope, SimplicialFan, VPolytope};
use crate::solvers::SdpObjective;
use crate::terminal_cost::{compute_terminal_cost_with, TerminalCost, TerminalCostOptions, DEFAULT_SAMPLES_PER_SIMPLEX};
use crate::vertex_controls::{
    build_pwl_feedback, recover_vertex_controls_with, LpObjective, PwlFeedback, VertexControlSolution,
};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub lambda: f64,
    pub max_iter: usize,
    pub lp_objective: LpObjective,
    pub sdp_objective: SdpObjective,
    /// Samples per simplex during certification.
    pub samples: usize,
    pub seed: u64,
    #[serde(skip)]
    pub exec: Exec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            lambda: 1.0,
            max_iter: DEFAULT_MAX_ITER,
            lp_objective: LpObjective::default(),
            sdp_objective: SdpObjective::default(),
            samples: DEFAULT_SAMPLES_PER_SIMPLEX,
            seed: 0,
            exec: Exec::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PipelineResult {
    pub set: HPolytope,
    pub log: SetIterationLog,
    pub vertices: VPolytope,
    pub fan: SimplicialFan,
    pub controls: VertexControlSolution,
    pub feedback: PwlFeedback,
    pub terminal_cost: TerminalCost,
}

pub fn run_pipeline(sys: &LinearSystem, cfg: &PipelineConfig) -> Result<PipelineResult> {
    let exec = cfg.exec;
    let (set, log) = max_contractive_set_with(sys, cfg.lambda, cfg.max_iter, exec)?;
    log::info!("invariant set: {} facets after {} iterations", set.num_rows(), log.iterations);
    let vertices = vertices_with(&set, exec)?;
    let fan = boundary_triangulation(&vertices)?;
    log::info!("{} vertices, {} simplices", vertices.len(), fan.len());
    let controls = recover_vertex_controls_with(&vertices, sys, cfg.lambda, cfg.lp_objective, None, exec)?;
    let feedback = build_pwl_feedback(&fan, &controls)?;
    let opts = TerminalCostOptions {
        objective: cfg.sdp_objective,
        reference: None,
        n_samples: cfg.samples,
        seed: cfg.seed,
        exec,
    };
    let terminal_cost = compute_terminal_cost_with(&feedback, sys, &opts)?;
    Ok(PipelineResult { set, log, vertices, fan, controls, feedback, terminal_cost })
}
