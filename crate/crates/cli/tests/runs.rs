use std::path::Path;

use nlsdecay_cli::artifacts::{Checkpoint, CHECKPOINT_FILE, SUMMARY_FILE, TRACE_FILE};
use nlsdecay_cli::{fit_and_report, parse_config_str, resume, run_scenario, RunOptions, RunStatus};
use serde_json::Value;

const SMALL: &str = r#"
schema_version = 1
scenario = "decay-2d-quintic"
[grid]
points = 64
half_width_pi = 8
[datum]
sigma = 1.0
amplitude = 0.5
[solver]
dt = 0.01
t_end = 2.0
snapshot_every = 10
[diagnostics]
every = 10
fit_window = [0.5, 2.0]
[checkpoint]
every_steps = 50
"#;

fn small_config(dir: &Path, extra: &str) -> nlsdecay_cli::ExperimentConfig {
    parse_config_str(&format!("{SMALL}{extra}")).unwrap().with_output_dir(dir)
}

fn quiet() -> RunOptions {
    RunOptions::default()
}

fn summary(dir: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(dir.join(SUMMARY_FILE)).unwrap()).unwrap()
}

#[test]
fn small_run_completes_and_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let out = run_scenario(&cfg, &quiet()).unwrap();
    assert!(out.succeeded() && !out.halted);
    assert_eq!(out.manifest.status, RunStatus::Complete);
    assert!(!tmp.path().join(CHECKPOINT_FILE).exists());
    for a in &out.manifest.artifacts {
        assert!(tmp.path().join(a).exists(), "missing artifact {a}");
    }
    let trace = std::fs::read_to_string(tmp.path().join(TRACE_FILE)).unwrap();
    assert_eq!(trace.lines().next().unwrap(), "t,sup,weighted,A,mass,energy,Hs,Lr");
    assert_eq!(trace.lines().count(), 1 + 21);

    let s = summary(tmp.path());
    assert_eq!(s["dt_halvings"], 0);
    assert!(s["mass_drift"].as_f64().unwrap() < 1e-12);

    let again = run_scenario(&cfg, &quiet()).unwrap();
    assert!(again.manifest.already_complete);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run_scenario(&small_config(a.path(), ""), &quiet()).unwrap();
    run_scenario(&small_config(b.path(), ""), &quiet()).unwrap();
    for f in [TRACE_FILE, SUMMARY_FILE] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn halted_run_resumes_bit_identically() {
    let full = tempfile::tempdir().unwrap();
    run_scenario(&small_config(full.path(), ""), &quiet()).unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path(), "");
    let halt = RunOptions {
        halt_after_steps: Some(125),
        ..RunOptions::default()
    };
    let out = run_scenario(&cfg, &halt).unwrap();
    assert!(out.halted);
    assert_eq!(out.manifest.status, RunStatus::Running);
    let ck = Checkpoint::read(tmp.path()).unwrap().unwrap();
    assert_eq!(ck.step, 100);
    assert_eq!(ck.config_hash, cfg.hash());

    let done = resume(tmp.path(), &quiet()).unwrap();
    assert_eq!(done.manifest.status, RunStatus::Complete);
    for f in [TRACE_FILE, SUMMARY_FILE] {
        assert_eq!(std::fs::read(full.path().join(f)).unwrap(), std::fs::read(tmp.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn other_configuration_in_same_directory_conflicts() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&small_config(tmp.path(), ""), &quiet()).unwrap();
    let mut other = small_config(tmp.path(), "");
    other.seed = 9;
    let err = run_scenario(&other, &quiet()).unwrap_err();
    assert!(err.to_string().contains("different configuration"), "{err}");
}

#[test]
fn energy_drift_retry_halves_dt_once() {
    // measure the drift at dt and dt/2 with a tolerance that never trips
    let loose = |dir: &Path, dt: f64| {
        let mut cfg = small_config(dir, "");
        let s = cfg.solver.as_mut().unwrap();
        s.dt = dt;
        s.snapshot_every = (10.0 * 0.01 / dt).round() as u64;
        cfg.diagnostics.as_mut().unwrap().every = s.snapshot_every;
        cfg.checkpoint.as_mut().unwrap().every_steps = (50.0 * 0.01 / dt).round() as u64;
        s.energy_tolerance = 1.0;
        run_scenario(&cfg, &quiet()).unwrap();
        summary(dir)["energy_drift"].as_f64().unwrap()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let coarse = loose(a.path(), 0.01);
    let fine = loose(b.path(), 0.005);
    assert!(fine < coarse / 2.0, "Strang drift should shrink with dt: {coarse} vs {fine}");

    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), "");
    cfg.solver.as_mut().unwrap().energy_tolerance = (coarse * fine).sqrt();
    let out = run_scenario(&cfg, &quiet()).unwrap();
    assert_eq!(out.manifest.status, RunStatus::Complete);
    let s = summary(tmp.path());
    assert_eq!(s["dt_halvings"], 1);
    assert_eq!(s["dt_used"].as_f64().unwrap(), 0.005);
    let fine_trace = std::fs::read(b.path().join(TRACE_FILE)).unwrap();
    assert_eq!(std::fs::read(tmp.path().join(TRACE_FILE)).unwrap(), fine_trace);
}

#[test]
fn persistent_energy_drift_fails_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), "");
    cfg.solver.as_mut().unwrap().energy_tolerance = 1e-300;
    let out = run_scenario(&cfg, &quiet()).unwrap();
    assert_eq!(out.manifest.status, RunStatus::Failed);
    let f = out.manifest.failure.as_ref().unwrap();
    assert!(f.message.contains("energy"), "{}", f.message);
}

#[test]
fn blow_up_is_recorded_as_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config(tmp.path(), "");
    cfg.datum.as_mut().unwrap().amplitude = 1e200;
    cfg.solver.as_mut().unwrap().energy_tolerance = f64::MAX;
    let out = run_scenario(&cfg, &quiet()).unwrap();
    assert_eq!(out.manifest.status, RunStatus::Failed);
    let f = out.manifest.failure.as_ref().unwrap();
    assert!(f.step <= 1, "{f:?}");
    assert!(!out.succeeded());
}

#[test]
fn fit_of_written_trace_matches_summary() {
    let tmp = tempfile::tempdir().unwrap();
    run_scenario(&small_config(tmp.path(), ""), &quiet()).unwrap();
    let s = summary(tmp.path());
    let r = fit_and_report(&tmp.path().join(TRACE_FILE), (0.5, 2.0), None, None).unwrap();
    let slope = s["fit"]["slope"].as_f64().unwrap();
    assert!((r.slope - slope).abs() <= 1e-12, "{} vs {slope}", r.slope);
    assert_eq!(r.samples as u64, s["fit"]["samples"].as_u64().unwrap());
}
