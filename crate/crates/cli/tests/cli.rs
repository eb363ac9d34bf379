use std::process::Command;

use serde_json::Value;

fn nlsdecay(args: &[&str]) -> (bool, Value) {
    let out = Command::new(env!("CARGO_BIN_EXE_nlsdecay")).args(args).output().expect("spawn nlsdecay");
    let json = serde_json::from_slice(&out.stdout)
        .unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)));
    (out.status.success(), json)
}

#[test]
fn invalid_config_exits_nonzero_with_field_names() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("bad.toml");
    std::fs::write(&path, "schema_version = 1\nscenario = \"decay-2d-quintic\"\n[grid]\npoints = 100\n").unwrap();
    let (ok, v) = nlsdecay(&["run", path.to_str().unwrap()]);
    assert!(!ok);
    assert_eq!(v["status"], "error");
    assert_eq!(v["kind"], "config");
    let details: Vec<String> = serde_json::from_value(v["details"].clone()).unwrap();
    assert!(details.iter().any(|m| m.starts_with("grid.points")), "{details:?}");
}

#[test]
fn run_report_and_fit_verbs() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("pc.toml");
    std::fs::write(
        &path,
        "schema_version = 1\nscenario = \"pseudo-conformal\"\n[grid]\npoints = 64\n[pseudo_conformal]\ntimes = [1.0]\ntarget_points = 64\n",
    )
    .unwrap();
    let run_dir = tmp.path().join("runs").join("pc");
    let (ok, v) = nlsdecay(&["run", path.to_str().unwrap(), "--output", run_dir.to_str().unwrap()]);
    assert!(ok, "{v}");
    assert_eq!(v["status"], "complete");
    let (ok, v) = nlsdecay(&["run", path.to_str().unwrap(), "--output", run_dir.to_str().unwrap()]);
    assert!(ok);
    assert_eq!(v["status"], "already-complete");

    let (ok, v) = nlsdecay(&["report", tmp.path().join("runs").to_str().unwrap()]);
    assert!(ok, "{v}");
    assert_eq!(v.as_array().unwrap().len(), 1);

    // exact power law t^{-1}: the fit recovers slope -1
    let csv = tmp.path().join("trace.csv");
    let mut text = String::from("t,sup,weighted,A,mass,energy,Hs,Lr\n");
    for i in 1..=40 {
        let t = i as f64 * 0.25;
        text.push_str(&format!("{t:e},{:e},3,3,1,1,,\n", 3.0 / t));
    }
    std::fs::write(&csv, text).unwrap();
    let (ok, v) = nlsdecay(&["fit", csv.to_str().unwrap(), "--window", "1,10", "--expect", "-1", "--tol", "1e-9"]);
    assert!(ok, "{v}");
    assert!((v["slope"].as_f64().unwrap() + 1.0).abs() < 1e-12);
    let (ok, v) = nlsdecay(&["fit", csv.to_str().unwrap(), "--window", "1,10", "--expect", "-2", "--tol", "0.1"]);
    assert!(!ok);
    assert_eq!(v["pass"], false);
}

#[test]
fn unknown_suite_is_an_error() {
    let (ok, v) = nlsdecay(&["verify", "everything"]);
    assert!(!ok);
    assert_eq!(v["kind"], "verify");
}
