use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use maxinv::terminal_cost::CertificateBundle;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxinv")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Fixture with one top-level section replaced.
fn patched(name: &str, section: &str, value: serde_json::Value, dir: &Path) -> PathBuf {
    let mut doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(fixture(name)).unwrap()).unwrap();
    doc[section] = value;
    let path = dir.join(format!("patched_{name}"));
    std::fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
    path
}

#[test]
fn dare_prints_the_riccati_solution() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dare", fixture("ex1.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let s = stdout(&o);
    assert!(s.contains("8.0014") && s.contains("26.0673") && s.contains("145.3010"), "{s}");
    assert!(dir.path().join("dare.json").exists());
}

#[test]
fn rotation_pipeline_writes_reloadable_certified_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["pipeline", fixture("ex2.json").to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["set.json", "fan.json", "controls.json", "terminal_cost.json", "certificate.json", "report.txt"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let text = std::fs::read_to_string(dir.path().join("certificate.json")).unwrap();
    let bundle: CertificateBundle = serde_json::from_str(&text).unwrap();
    let stored = &bundle.terminal_cost.certification;
    let replayed = bundle.replay().unwrap();
    assert!((replayed.max_lmi_eigenvalue - stored.max_lmi_eigenvalue).abs() <= 1e-9);
    assert!((replayed.max_decrease_violation - stored.max_decrease_violation).abs() <= 1e-9);
    // The square's vertex controls follow one linear law; P must be its cost-to-go.
    let l = &bundle.feedback.pieces()[0].l;
    let lyap = bundle.system.feedback_cost(l).unwrap();
    assert!((&bundle.terminal_cost.p - &lyap).amax() < 0.05);
}

#[test]
fn pipeline_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = run(&["pipeline", fixture("ex3.json").to_str().unwrap(), "--out", d.path().to_str().unwrap()]);
        assert_eq!(code(&o), 0);
    }
    for f in ["set.json", "fan.json", "controls.json", "terminal_cost.json", "certificate.json"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        assert_eq!(x, y, "{f} differs between runs");
    }
}

#[test]
fn example_one_report_counts_match() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["pipeline", fixture("ex1.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let report = std::fs::read_to_string(dir.path().join("report.txt")).unwrap();
    let count = |key: &str| -> usize {
        let line = report.lines().find(|l| l.trim_start().starts_with(key)).unwrap();
        line.split(':').nth(1).unwrap().trim().parse().unwrap()
    };
    let v = count("vertices");
    assert!(v.abs_diff(39) <= 1, "{v} vertices");
    assert_eq!(count("simplices"), v);
    assert!(report.contains("CERTIFIED"));

    let sim = run(&["simulate", fixture("ex1.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&sim), 0);
    assert!(stdout(&sim).contains("feasible throughout: true"));
}

#[test]
fn zero_lambda_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = patched("ex2.json", "pipeline", serde_json::json!({"lambda": 0.0}), dir.path());
    let o = run(&["pipeline", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 64);
    let o = run(&["pipeline", fixture("ex2.json").to_str().unwrap(), "--lambda", "1.5"]);
    assert_eq!(code(&o), 64);
}

#[test]
fn bang_bang_controls_have_no_terminal_cost() {
    let dir = tempfile::tempdir().unwrap();
    let p = patched("ex1.json", "pipeline", serde_json::json!({"lp_objective": "min-sum-lambda"}), dir.path());
    let o = run(&["pipeline", p.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("--lambda"));
}

#[test]
fn missing_inputs_exit_66() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["simulate", fixture("ex2.json").to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 66);
    let o = run(&["region", fixture("ex2.json").to_str().unwrap(), "--terminal", "maximal", "--out", out]);
    assert_eq!(code(&o), 66);
    let o = run(&["dare", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(code(&o), 66);
}

#[test]
fn zero_steps_gives_an_empty_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["pipeline", fixture("ex2.json").to_str().unwrap(), "--out", out])), 0);
    let p = patched("ex2.json", "mpc", serde_json::json!({"T": 1, "x0": [[1.0, 1.0]], "steps": 0}), dir.path());
    let o = run(&["simulate", p.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 0);
    let csv = std::fs::read_to_string(dir.path().join("trajectory_0.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn lqr_regions_are_nested_in_the_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run(&["region", fixture("ex1.json").to_str().unwrap(), "--horizon", "2,6,10", "--grid", "15", "--out", out]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let feasible = |t: usize| -> Vec<bool> {
        let csv = std::fs::read_to_string(dir.path().join(format!("region_lqr_T{t}.csv"))).unwrap();
        csv.lines().skip(1).map(|l| l.rsplit(',').next().unwrap() == "1").collect()
    };
    let (a, b, c) = (feasible(2), feasible(6), feasible(10));
    assert_eq!(a.len(), 225);
    for (small, big) in [(&a, &b), (&b, &c)] {
        assert!(small.iter().zip(big.iter()).all(|(s, l)| !s || *l));
    }
    assert!(c.iter().filter(|&&v| v).count() > a.iter().filter(|&&v| v).count());
    assert!(dir.path().join("region_lqr.json").exists());
}

#[test]
fn lqr_set_is_exported() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["lqr-set", fixture("ex3.json").to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let set: maxinv::HPolytope =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("lqr_set.json")).unwrap()).unwrap();
    assert!(set.is_cset());
}
