//! Problem-file schema and its conversion into a validated system.

use maxinv::pipeline::PipelineConfig;
use maxinv::{HPolytope, LinearSystem};
use nalgebra::{DMatrix, DVector};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub system: SystemSpec,
    pub cost: CostSpec,
    pub constraints: ConstraintSpec,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub mpc: MpcSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSpec {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSpec {
    #[serde(rename = "Q")]
    pub q: Vec<Vec<f64>>,
    #[serde(rename = "R")]
    pub r: Vec<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstraintSpec {
    #[serde(rename = "X")]
    pub x: SetSpec,
    #[serde(rename = "U")]
    pub u: SetSpec,
}

/// Either explicit `{F, g}` rows or the half-widths of a centered box.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum SetSpec {
    Box(Vec<f64>),
    HRep {
        #[serde(rename = "F")]
        f: Vec<Vec<f64>>,
        g: Vec<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MpcSpec {
    #[serde(rename = "T", default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub x0: Vec<Vec<f64>>,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_horizon() -> usize {
    1
}

fn default_steps() -> usize {
    100
}

impl Default for MpcSpec {
    fn default() -> Self {
        MpcSpec { horizon: default_horizon(), x0: Vec::new(), steps: default_steps() }
    }
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || cols == 0 {
        return Err(CliError::Validation(format!("{name} is empty")));
    }
    if rows.iter().any(|r| r.len() != cols) {
        return Err(CliError::Validation(format!("{name} is not rectangular")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(CliError::Validation(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.iter().flatten().copied()))
}

impl SetSpec {
    fn to_polytope(&self, name: &str) -> Result<HPolytope, CliError> {
        match self {
            SetSpec::Box(w) => HPolytope::from_box(w).map_err(|e| CliError::Validation(format!("{name}: {e}"))),
            SetSpec::HRep { f, g } => {
                let f = matrix(&format!("{name}.F"), f)?;
                if f.nrows() != g.len() {
                    return Err(CliError::Validation(format!("{name}: F has {} rows but g has {}", f.nrows(), g.len())));
                }
                HPolytope::new(f, DVector::from_column_slice(g)).map_err(|e| CliError::Validation(format!("{name}: {e}")))
            }
        }
    }
}

impl ProblemFile {
    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let p: ProblemFile = serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        p.check_pipeline()?;
        Ok(p)
    }

    pub fn check_pipeline(&self) -> Result<(), CliError> {
        let l = self.pipeline.lambda;
        if !(l > 0.0 && l <= 1.0) {
            return Err(CliError::Validation(format!("lambda = {l} is outside (0, 1]")));
        }
        Ok(())
    }

    pub fn system(&self) -> Result<LinearSystem, CliError> {
        let sys = LinearSystem::new(
            matrix("A", &self.system.a)?,
            matrix("B", &self.system.b)?,
            matrix("Q", &self.cost.q)?,
            matrix("R", &self.cost.r)?,
            self.constraints.x.to_polytope("X")?,
            self.constraints.u.to_polytope("U")?,
        )
        .map_err(|e| CliError::Validation(e.to_string()))?;
        Ok(sys)
    }

    pub fn initial_states(&self, n: usize) -> Result<Vec<DVector<f64>>, CliError> {
        self.mpc
            .x0
            .iter()
            .map(|x| {
                if x.len() == n {
                    Ok(DVector::from_column_slice(x))
                } else {
                    Err(CliError::Validation(format!("initial state {x:?} does not have {n} entries")))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_and_rows_are_both_accepted() {
        let text = r#"{
            "system": {"A": [[1.0]], "B": [[1.0]]},
            "cost": {"Q": [[1.0]], "R": [[1.0]]},
            "constraints": {"X": [2.0], "U": {"F": [[1.0], [-1.0]], "g": [1.0, 1.0]}}
        }"#;
        let p: ProblemFile = serde_json::from_str(text).unwrap();
        let sys = p.system().unwrap();
        assert_eq!(sys.x.num_rows(), 2);
        assert_eq!(sys.u.num_rows(), 2);
        assert_eq!(p.mpc.horizon, 1);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        assert!(matrix("A", &[vec![1.0, 2.0], vec![3.0]]).is_err());
    }

    #[test]
    fn lambda_must_be_positive() {
        let text = r#"{
            "system": {"A": [[1.0]], "B": [[1.0]]},
            "cost": {"Q": [[1.0]], "R": [[1.0]]},
            "constraints": {"X": [2.0], "U": [1.0]},
            "pipeline": {"lambda": 0.0}
        }"#;
        let p: ProblemFile = serde_json::from_str(text).unwrap();
        assert!(matches!(p.check_pipeline(), Err(CliError::Validation(_))));
    }
}
