use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use maxinv::invariance::lqr_invariant_set_with;
use maxinv::mpc::{feasible_region_grid_with, simulate as rollout, GridSpec, MpcController};
use maxinv::pipeline::{run_pipeline, PipelineConfig, PipelineResult};
use maxinv::polytope::vertices;
use maxinv::terminal_cost::{CertificateBundle, TerminalCost};
use maxinv::{Exec, HPolytope, LinearSystem};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::problem::ProblemFile;
use crate::{CliError, CommonArgs, TerminalChoice};

const DEFAULT_REGION_HORIZONS: [usize; 6] = [2, 6, 10, 14, 18, 22];

fn load(args: &CommonArgs) -> Result<(ProblemFile, LinearSystem, PipelineConfig), CliError> {
    let mut problem = ProblemFile::load(&args.problem)?;
    if let Some(l) = args.lambda {
        problem.pipeline.lambda = l;
    }
    if let Some(o) = args.objective {
        problem.pipeline.sdp_objective = o.into();
    }
    if let Some(s) = args.seed {
        problem.pipeline.seed = s;
    }
    problem.check_pipeline()?;
    let sys = problem.system()?;
    let cfg = PipelineConfig { exec: Exec::default(), ..problem.pipeline.clone() };
    Ok((problem, sys, cfg))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("artifacts serialize");
    text.push('\n');
    write(dir, name, &text)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

fn format_matrix(m: &DMatrix<f64>, indent: &str, decimals: usize) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| format!("{v:>12.decimals$}")).collect();
        let _ = writeln!(s, "{indent}[{} ]", row.join(""));
    }
    s
}

fn report(res: &PipelineResult, cfg: &PipelineConfig) -> String {
    let mut s = String::new();
    let cert = &res.terminal_cost.certification;
    let _ = writeln!(s, "maximal contractive set (lambda = {})", cfg.lambda);
    let state = if res.log.converged { "converged" } else { "not converged" };
    let _ = writeln!(s, "  iterations: {} ({state})", res.log.iterations);
    let _ = writeln!(s, "  facets:     {}", res.set.num_rows());
    let _ = writeln!(s, "  vertices:   {}", res.vertices.len());
    let _ = writeln!(s, "  simplices:  {}", res.fan.len());
    let objective = serde_json::to_string(&res.controls.objective_used).expect("enum serializes");
    let _ = writeln!(s, "vertex controls (objective {})", objective.trim_matches('"'));
    let sdp = serde_json::to_string(&res.terminal_cost.objective_used).expect("enum serializes");
    let _ = writeln!(s, "terminal cost (objective {}, value {:.6})", sdp.trim_matches('"'), res.terminal_cost.objective_value);
    s.push_str(&format_matrix(&res.terminal_cost.p, "  ", 4));
    let _ = writeln!(s, "certification ({} samples per simplex, seed {})", cert.n_samples, cert.seed);
    let _ = writeln!(s, "  max LMI eigenvalue:        {:.3e}", cert.max_lmi_eigenvalue);
    let _ = writeln!(s, "  max decrease violation:    {:.3e}", cert.max_decrease_violation);
    let _ = writeln!(s, "  max terminal set violation: {:.3e}", cert.max_terminal_set_violation);
    let _ = writeln!(s, "  terminal set invariant:    {}", cert.terminal_set_invariance_ok);
    let _ = writeln!(s, "  result: {}", if cert.passed() { "CERTIFIED" } else { "NOT CERTIFIED" });
    s
}

pub fn pipeline(args: &CommonArgs) -> Result<(), CliError> {
    let (_, sys, cfg) = load(args)?;
    let res = run_pipeline(&sys, &cfg)?;
    let out = &args.out;
    write_json(out, "set.json", &res.set)?;
    write(out, "iterations.json", &res.log.to_json())?;
    write(out, "vertices.csv", &res.vertices.to_csv())?;
    write_json(out, "fan.json", &res.fan)?;
    write_json(out, "controls.json", &res.controls)?;
    write(out, "controls.csv", &res.feedback.controls_csv())?;
    write(out, "feedback.json", &res.feedback.to_json())?;
    write_json(out, "terminal_cost.json", &res.terminal_cost)?;
    let bundle = CertificateBundle {
        system: sys.clone(),
        feedback: res.feedback.clone(),
        terminal_cost: res.terminal_cost.clone(),
    };
    write_json(out, "certificate.json", &bundle)?;
    let text = report(&res, &cfg);
    write(out, "report.txt", &text)?;
    print!("{text}");
    if res.terminal_cost.certification.passed() {
        Ok(())
    } else {
        Err(CliError::Core(maxinv::Error::InfeasibleTerminalCost))
    }
}

fn pipeline_artifacts(out: &Path) -> Result<(HPolytope, TerminalCost), CliError> {
    let set: HPolytope = read_json(&out.join("set.json"))?;
    let cost: TerminalCost = read_json(&out.join("terminal_cost.json"))?;
    Ok((set, cost))
}

pub fn simulate(args: &CommonArgs) -> Result<(), CliError> {
    let (problem, sys, _) = load(args)?;
    let (set, cost) = pipeline_artifacts(&args.out)?;
    let horizon = args.horizon.first().copied().unwrap_or(problem.mpc.horizon);
    let ctrl = MpcController::new(&sys, horizon, &set, &cost.p)?;
    let mut lost = Vec::new();
    for (k, x0) in problem.initial_states(sys.state_dim())?.iter().enumerate() {
        let traj = rollout(&ctrl, x0, problem.mpc.steps);
        write(&args.out, &format!("trajectory_{k}.csv"), &traj.to_csv())?;
        write(&args.out, &format!("trajectory_{k}.json"), &traj.to_json())?;
        let rest = traj.time_to_rest(maxinv::mpc::REST_TOL);
        println!(
            "x0[{k}]: {} steps, feasible throughout: {}, at rest from step: {}",
            traj.inputs.len(),
            traj.feasible_throughout,
            rest.map_or("-".to_string(), |t| t.to_string())
        );
        if !traj.feasible_throughout {
            lost.push(k);
        }
    }
    if lost.is_empty() {
        Ok(())
    } else {
        Err(CliError::Infeasible(format!("planning problem infeasible along trajectories {lost:?}")))
    }
}

#[derive(Serialize)]
struct RegionSummary {
    #[serde(rename = "T")]
    horizon: usize,
    feasible_points: usize,
    total_points: usize,
}

pub fn region(args: &CommonArgs, terminal: TerminalChoice) -> Result<(), CliError> {
    let (_, sys, cfg) = load(args)?;
    let (set, weight, tag) = match terminal {
        TerminalChoice::Lqr => {
            let dare = sys.dare()?;
            let set = lqr_invariant_set_with(&sys, &dare.l_inf, cfg.max_iter, cfg.exec)?;
            (set, dare.p_inf, "lqr")
        }
        TerminalChoice::Maximal => {
            let (set, cost) = pipeline_artifacts(&args.out)?;
            (set, cost.p, "maximal")
        }
    };
    let horizons = if args.horizon.is_empty() { DEFAULT_REGION_HORIZONS.to_vec() } else { args.horizon.clone() };
    if args.grid == 0 {
        return Err(CliError::Validation("--grid must be positive".into()));
    }
    let grid = GridSpec::over(&sys.x, args.grid)?;
    let mut summary = Vec::new();
    for t in horizons {
        let ctrl = MpcController::new(&sys, t, &set, &weight)?;
        let occ = feasible_region_grid_with(&ctrl, &grid, cfg.exec)?;
        write(&args.out, &format!("region_{tag}_T{t}.csv"), &occ.to_csv())?;
        println!("T = {t:>2}: {} of {} grid points feasible", occ.count(), occ.feasible.len());
        summary.push(RegionSummary { horizon: t, feasible_points: occ.count(), total_points: occ.feasible.len() });
    }
    write_json(&args.out, &format!("region_{tag}.json"), &summary)
}

pub fn dare(args: &CommonArgs) -> Result<(), CliError> {
    let (_, sys, _) = load(args)?;
    let sol = sys.dare()?;
    println!("P_inf =");
    print!("{}", format_matrix(&sol.p_inf, "  ", 4));
    println!("L_inf =");
    print!("{}", format_matrix(&sol.l_inf, "  ", 4));
    println!("residual {:.2e} after {} iterations", sol.residual, sol.iterations);
    write_json(&args.out, "dare.json", &sol)
}

pub fn lqr_set(args: &CommonArgs) -> Result<(), CliError> {
    let (_, sys, cfg) = load(args)?;
    let dare = sys.dare()?;
    let set = lqr_invariant_set_with(&sys, &dare.l_inf, cfg.max_iter, cfg.exec)?;
    let v = vertices(&set)?;
    write_json(&args.out, "lqr_set.json", &set)?;
    write(&args.out, "lqr_set_vertices.csv", &v.to_csv())?;
    println!("LQR invariant set: {} facets, {} vertices", set.num_rows(), v.len());
    Ok(())
}
