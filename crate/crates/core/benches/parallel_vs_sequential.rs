use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use maxinv::invariance::max_contractive_set;
use maxinv::mpc::{feasible_region_grid_with, GridSpec, MpcController};
use maxinv::pipeline::{run_pipeline, PipelineConfig};
use maxinv::polytope::{normalize_hrep_with, volume_estimate_with};
use maxinv::terminal_cost::certify_with;
use maxinv::vertex_controls::LpObjective;
use maxinv::{Exec, HPolytope, LinearSystem};
use nalgebra::{DMatrix, DVector};

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn third_order() -> LinearSystem {
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

/// Many redundant random cuts around a cube.
fn cluttered(rows: usize) -> HPolytope {
    let mut f = Vec::with_capacity(rows * 3);
    let mut g = Vec::with_capacity(rows);
    let mut s: u64 = 0x9e37_79b9_7f4a_7c15;
    let mut next = || {
        s ^= s << 13;
        s ^= s >> 7;
        s ^= s << 17;
        (s >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    };
    for _ in 0..rows {
        let d = [next(), next(), next()];
        let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        f.extend(d.iter().map(|v| v / norm));
        g.push(1.0 + 0.5 * next().abs());
    }
    HPolytope::new(DMatrix::from_row_slice(rows, 3, &f), DVector::from_vec(g)).unwrap()
}

fn bench(c: &mut Criterion) {
    let sys = third_order();
    let (set, _) = max_contractive_set(&sys, 1.0, 100).unwrap();
    let cfg = PipelineConfig { lp_objective: LpObjective::MinDeviationFromLinear, ..Default::default() };
    let res = run_pipeline(&sys, &cfg).unwrap();
    let ctrl = MpcController::new(&sys, 5, &res.set, &res.terminal_cost.p).unwrap();
    let grid = GridSpec::over(&sys.x, 8).unwrap();
    let clutter = cluttered(400);

    let mut group = c.benchmark_group("exec");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("volume_estimate", name), &exec, |b, &e| {
            b.iter(|| volume_estimate_with(&set, 200_000, 1, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("normalize_hrep", name), &exec, |b, &e| {
            b.iter(|| normalize_hrep_with(&clutter, 1e-9, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("certify", name), &exec, |b, &e| {
            b.iter(|| certify_with(&res.terminal_cost.p, &res.feedback, &sys, 200, 0, e).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("feasible_region_grid", name), &exec, |b, &e| {
            b.iter(|| feasible_region_grid_with(&ctrl, &grid, e).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench);
criterion_main!(benches);
