//! Acceptance suite: criteria 1-11, one PASS/FAIL line each. Details of
//! every criterion go to `acceptance.json` in the work directory.

use std::process::ExitCode;

use nlsdecay_cli::verify::{Verifier, CRITERIA};

fn main() -> ExitCode {
    let work = std::path::Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance");
    if work.exists() {
        std::fs::remove_dir_all(&work).expect("clear acceptance work directory");
    }
    std::fs::create_dir_all(&work).expect("create acceptance work directory");
    let verbose = std::env::var_os("NLSDECAY_VERBOSE").is_some();
    let mut v = Verifier::new(&work, verbose);
    let mut results = Vec::new();
    for (id, _) in CRITERIA {
        let r = v.check(id);
        println!("{}", r.line());
        if !r.pass {
            println!("      {}", r.detail);
        }
        results.push(r);
    }
    let json = serde_json::to_string_pretty(&results).expect("json");
    std::fs::write(work.join("acceptance.json"), json + "\n").expect("write acceptance.json");
    let failed = results.iter().filter(|r| !r.pass).count();
    println!("acceptance: {} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
