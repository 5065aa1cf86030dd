//! Systems from the worked examples, shared by the integration tests.
#![allow(dead_code)]

use maxinv::pipeline::PipelineConfig;
use maxinv::vertex_controls::LpObjective;
use maxinv::{HPolytope, LinearSystem};
use nalgebra::{DMatrix, DVector};

/// Unstable second-order system with a single weak input.
pub fn ex1() -> LinearSystem {
    let c = DMatrix::from_row_slice(1, 2, &[-1.0, 1.0]);
    LinearSystem::new(
        DMatrix::from_row_slice(2, 2, &[1.1, 2.0, 0.0, 0.95]),
        DMatrix::from_column_slice(2, 1, &[0.0, 0.0787]),
        c.transpose() * &c,
        DMatrix::identity(1, 1),
        HPolytope::from_box(&[8.0, 8.0]).unwrap(),
        HPolytope::from_box(&[1.0]).unwrap(),
    )
    .unwrap()
}

/// Rotation by 90 degrees; the state box is its own maximal invariant set.
pub fn ex2() -> LinearSystem {
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

/// Third-order example.
pub fn ex3() -> LinearSystem {
    LinearSystem::new(
        DMatrix::from_row_slice(3, 3, &[0.48, 0.45, 0.38, -0.13, 0.52, -0.54, -0.58, 0.32, 0.40]),
        DMatrix::from_column_slice(3, 1, &[0.15, 0.0, 0.14]),
        DMatrix::identity(3, 3) * 10.0,
        DMatrix::identity(1, 1),
        HPolytope::from_box(&[10.0, 10.0, 10.0]).unwrap(),
        HPolytope::from_box(&[1.0]).unwrap(),
    )
    .unwrap()
}

pub fn config() -> PipelineConfig {
    PipelineConfig { lp_objective: LpObjective::MinDeviationFromLinear, ..Default::default() }
}

pub fn mat(rows: usize, cols: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, v)
}

pub fn vec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

/// Uniform samples of `p` by rejection from its bounding box.
pub fn sample_inside(p: &HPolytope, count: usize, seed: u64) -> Vec<DVector<f64>> {
    use rand::{Rng, SeedableRng};
    let (lo, hi) = maxinv::polytope::bounding_box(p).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let x = DVector::from_iterator(lo.len(), (0..lo.len()).map(|j| rng.random_range(lo[j]..=hi[j])));
        if p.margin(&x) >= 0.0 {
            out.push(x);
        }
    }
    out
}
