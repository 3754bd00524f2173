use std::io::BufReader;
use std::path::Path;

use coherency::engine::read_trajectory_csv;
use coherency_bench::output::read_rows;
use coherency_bench::run::{run_scenario_full, sup_err_after};
use coherency_bench::scenario::{parse_scenario, Scenario};
use coherency_bench::sweep::{sweep, sweep_rows, write_sweep_csv, SweepParam};
use coherency_bench::RunReport;

fn scenario(text: &str) -> Scenario {
    Scenario::resolve(parse_scenario(text, Path::new("inline.toml")).unwrap(), Path::new(".")).unwrap()
}

const CONSTANT: &str = r#"
name = "constant"

[network]
source = "random"
N = 6
extra_edges = 4
seed = 5

[responses]
all = { kind = "saturated", D = 1.0 }
per_inertia = true

[disturbance]
type = "stages"
initial = [0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
stages = [{ buses = [
    [{ type = "constant", a = 0.2 }], [{ type = "constant", a = -0.1 }], [{ type = "constant", a = 0.05 }],
    [{ type = "constant", a = -0.15 }], [], [{ type = "constant", a = 0.1 }],
] }]

[integrator]
t_end = 60.0
sample_dt = 0.1

[[certificates]]
kind = "P1"
"#;

#[test]
fn constant_disturbance_settles() {
    let s = scenario(CONSTANT);
    let (report, traj) = run_scenario_full(&s, None).unwrap();
    assert_eq!(report.rate_c_lim, 0.0);
    let tail = sup_err_after(&traj, 0.8 * 60.0);
    assert!(tail < 1e-6, "tail error {tail}");
    assert!(report.certificates[0].holds());
    let stage = report.stage(0).unwrap();
    let fit = stage.decay.as_ref().unwrap();
    assert!(fit.rate > 0.0 && fit.t_start < fit.t_end && fit.samples >= 2);
}

#[test]
fn homogeneous_scenario_has_no_error() {
    let text = r#"
name = "homogeneous"

[network]
source = "random"
N = 7
extra_edges = 5
seed = 9

[responses]
all = { kind = "saturated", D = 0.8, s = 0.3 }
per_inertia = true

[disturbance]
type = "stages"
per_inertia = true
stages = [
    { until = 10.0, all = [{ type = "ramp", a = 0.2, r = 0.3 }] },
    { all = [{ type = "constant", a = 0.25 }, { type = "sinusoid", b = 0.02, Omega = 1.5 }] },
]

[initial]
kind = "zero"

[integrator]
t_end = 30.0
"#;
    let s = scenario(text);
    let (report, _) = run_scenario_full(&s, None).unwrap();
    assert!(report.sup_err < 10.0 * s.file.integrator.rel_tol, "sup err {}", report.sup_err);
}

#[test]
fn failed_assumption_is_recorded() {
    let text = r#"
name = "too-large"

[network]
source = "inline"
buses = [{ id = 1, M = 1.0 }, { id = 2, M = 1.0 }]
lines = [{ from = 1, to = 2, B = 0.5 }]

[responses]
all = { kind = "linear", D = 1.0 }

[disturbance]
type = "stages"
stages = [{ buses = [[{ type = "constant", a = 0.3 }], [{ type = "constant", a = -0.3 }]] }]

[initial]
kind = "zero"

[flow]
model = "sinusoidal"
k = 1.0

[integrator]
t_end = 10.0

[[certificates]]
kind = "T2"
rho = 0.3
"#;
    let s = scenario(text);
    let (report, traj) = run_scenario_full(&s, None).unwrap();
    assert_eq!(traj.len(), report.samples);
    assert!(traj.len() > 100);
    let v = &report.certificates[0];
    assert_eq!(v.error_kind.as_deref(), Some("AssumptionTwoFailed"));
    assert!(!v.holds());
    assert!(!report.assumption2.unwrap().pass);
}

#[test]
fn written_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(CONSTANT);
    let (report, traj) = run_scenario_full(&s, Some(dir.path())).unwrap();
    for f in &report.files {
        assert!(f.exists(), "{} missing", f.display());
    }
    let file = std::fs::File::open(dir.path().join("trajectory.csv")).unwrap();
    let back = read_trajectory_csv(BufReader::new(file)).unwrap();
    assert_eq!(back.times, traj.times);
    assert_eq!(back.omega, traj.omega);
    assert_eq!(back.omega_b, traj.omega_b);
    assert_eq!(back.err, traj.err());
    assert_eq!(back.theta.as_ref(), Some(&traj.theta));

    let rows = read_rows(&dir.path().join("certificates.csv")).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].kind, "P1");
    assert_eq!(rows[0].floor, report.certificates[0].certificate.as_ref().map(|c| c.floor));
    assert_eq!(rows[0].worst_ratio, report.certificates[0].verification.as_ref().map(|v| v.worst_ratio));

    let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let parsed: RunReport = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed.sup_err, report.sup_err);
    assert_eq!(parsed.scenario_hash, s.hash());

    let doc: toml::Table = std::fs::read_to_string(dir.path().join("certificate_P1_stage0.toml")).unwrap().parse().unwrap();
    assert!(doc["constants"]["alpha_star"]["formula"].as_str().is_some());
}

#[test]
fn fixed_step_runs_are_reproducible() {
    let text = CONSTANT.replace("sample_dt = 0.1", "sample_dt = 0.1\nmethod = \"fixed_rk4\"");
    let s = scenario(&text);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (mut ra, ta) = run_scenario_full(&s, Some(a.path())).unwrap();
    let (mut rb, tb) = run_scenario_full(&s, Some(b.path())).unwrap();
    assert_eq!(ta, tb);
    ra.timings = Default::default();
    rb.timings = Default::default();
    ra.files.clear();
    rb.files.clear();
    assert_eq!(ra, rb);
    for name in ["trajectory.csv", "certificates.csv", "certificate_P1_stage0.toml"] {
        assert_eq!(std::fs::read(a.path().join(name)).unwrap(), std::fs::read(b.path().join(name)).unwrap(), "{name}");
    }
}

#[test]
fn sweeps_write_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let s = scenario(CONSTANT);
    let targets = [0.5, 1.0, 4.0];
    let points = sweep(&s, SweepParam::Lambda2, &targets, Some(dir.path()));
    assert_eq!(points.len(), 3);
    for (p, target) in points.iter().zip(targets) {
        let r = p.report.as_ref().unwrap();
        assert!((r.lambda2 - target).abs() < 1e-9 * target);
    }
    let rows = sweep_rows(&s, SweepParam::Lambda2, &points);
    let path = dir.path().join("sweep.csv");
    write_sweep_csv(&path, &rows).unwrap();
    let back = read_rows(&path).unwrap();
    assert_eq!(back, rows);
    assert!(back.iter().all(|r| r.param == "lambda2" && r.holds));
    let c = |i: usize| back[i].rate.unwrap();
    assert!(c(0) < c(1) && c(1) < c(2));
}

#[test]
fn sweep_over_flow_scale() {
    let text = CONSTANT.replace("kind = \"P1\"", "kind = \"T2\"\nrho = 0.3");
    let s = scenario(&text);
    let points = sweep(&s, SweepParam::K, &[1.0, 2.0], None);
    let rows = sweep_rows(&s, SweepParam::K, &points);
    assert_eq!(rows.len(), 2);
    assert!(points.iter().all(|p| p.report.as_ref().unwrap().flow != coherency::FlowModel::Linear));
}
