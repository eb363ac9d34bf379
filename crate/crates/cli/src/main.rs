use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use nlsdecay_cli::report::{aggregate, fit_and_report};
use nlsdecay_cli::verify::{suite, Verifier, SUITE_NAMES};
use nlsdecay_cli::{parse_config, resume, run_scenario, RunOptions, RunOutcome, RunStatus};

#[derive(Parser)]
#[command(name = "nlsdecay", version, about = "Decay experiments for defocusing NLS on periodic boxes")]
struct Cli {
    /// Progress messages on stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML configuration.
    Run {
        config: PathBuf,
        /// Write into this directory instead of the configured one.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Stop after this step as if killed (for testing resume).
        #[arg(long, hide = true)]
        halt_after: Option<u64>,
    },
    /// Continue an interrupted run from its last checkpoint.
    Resume { manifest: PathBuf },
    /// Fit the decay exponent of a trace CSV.
    Fit {
        csv: PathBuf,
        /// Fit window as `lo,hi`.
        #[arg(long, value_parser = parse_window)]
        window: (f64, f64),
        /// Expected slope; with --tol the report carries a pass flag.
        #[arg(long, allow_hyphen_values = true)]
        expect: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Run a built-in acceptance suite.
    Verify {
        #[arg(help = format!("Suite name: {SUITE_NAMES}"))]
        suite: String,
        /// Directory for the suite's runs (default: a fresh temporary one).
        #[arg(long)]
        work_dir: Option<PathBuf>,
    },
    /// Aggregate the manifests and summaries of the runs under a directory.
    Report { dir: PathBuf },
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected lo,hi")?;
    let lo: f64 = a.trim().parse().map_err(|e| format!("bad lower bound: {e}"))?;
    let hi: f64 = b.trim().parse().map_err(|e| format!("bad upper bound: {e}"))?;
    if !(lo > 0.0 && hi > lo) {
        return Err(format!("need 0 < lo < hi, got {lo},{hi}"));
    }
    Ok((lo, hi))
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn failure(kind: &str, message: impl ToString, details: serde_json::Value) -> ExitCode {
    print_json(&json!({ "status": "error", "kind": kind, "message": message.to_string(), "details": details }));
    ExitCode::FAILURE
}

fn outcome_exit(out: RunOutcome) -> ExitCode {
    let body = json!({
        "status": if out.halted { "halted" } else if out.manifest.already_complete { "already-complete" } else {
            match out.manifest.status { RunStatus::Complete => "complete", RunStatus::Failed => "failed", RunStatus::Running => "running" }
        },
        "dir": out.dir,
        "scenario": out.manifest.scenario,
        "config_hash": out.manifest.config_hash,
        "validity_window": out.manifest.validity_window,
        "artifacts": out.manifest.artifacts.len(),
        "failure": out.manifest.failure,
        "elapsed_s": out.elapsed.as_secs_f64(),
    });
    print_json(&body);
    if out.succeeded() || out.halted {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            output,
            halt_after,
        } => {
            let cfg = match parse_config(&config) {
                Ok(c) => c,
                Err(e) => return failure("config", &e, json!(e.violations())),
            };
            let cfg = match output {
                Some(dir) => cfg.with_output_dir(dir),
                None => cfg,
            };
            let opts = RunOptions {
                halt_after_steps: halt_after,
                verbose: cli.verbose,
            };
            match run_scenario(&cfg, &opts) {
                Ok(out) => outcome_exit(out),
                Err(e) => failure("run", e, json!(null)),
            }
        }
        Command::Resume { manifest } => {
            let opts = RunOptions {
                halt_after_steps: None,
                verbose: cli.verbose,
            };
            match resume(&manifest, &opts) {
                Ok(out) => outcome_exit(out),
                Err(e) => failure("resume", e, json!(null)),
            }
        }
        Command::Fit {
            csv,
            window,
            expect,
            tol,
        } => match fit_and_report(&csv, window, expect, tol) {
            Ok(r) => {
                print_json(&serde_json::to_value(&r).expect("json"));
                if r.pass == Some(false) {
                    ExitCode::FAILURE
                } else {
                    ExitCode::SUCCESS
                }
            }
            Err(e) => failure("fit", e, json!(null)),
        },
        Command::Verify { suite: name, work_dir } => {
            let Some(ids) = suite(&name) else {
                return failure("verify", format!("unknown suite {name:?}; expected {SUITE_NAMES}"), json!(null));
            };
            let (work, _guard) = match work_dir {
                Some(d) => (d, None),
                None => {
                    let t = std::env::temp_dir().join(format!("nlsdecay-verify-{}", std::process::id()));
                    (t.clone(), Some(TempDir(t)))
                }
            };
            let mut v = Verifier::new(work, cli.verbose);
            let mut results = Vec::new();
            for id in ids {
                let r = v.check(id);
                eprintln!("{}", r.line());
                results.push(r);
            }
            let pass = results.iter().all(|r| r.pass);
            print_json(&json!({ "status": if pass { "pass" } else { "fail" }, "criteria": results }));
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Command::Report { dir } => match aggregate(&dir) {
            Ok(runs) => {
                let v = serde_json::to_value(&runs).expect("json");
                let mut text = serde_json::to_string_pretty(&v).expect("json");
                text.push('\n');
                if let Err(e) = nlsdecay_core::io::write_atomic(&dir.join("report.json"), text.as_bytes()) {
                    return failure("report", e, json!(null));
                }
                print!("{text}");
                ExitCode::SUCCESS
            }
            Err(e) => failure("report", e, json!(null)),
        },
    }
}

/// Removes a scratch directory on drop.
struct TempDir(PathBuf);

impl Drop for TempDir {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}
