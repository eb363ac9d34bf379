//! Decay fits from trace files and aggregation of run summaries.

use std::path::{Path, PathBuf};

use nlsdecay_core::{fit_decay_exponent, DecayFit, DecayTrace};
use serde::{Deserialize, Serialize};

use crate::artifacts::{RunManifest, MANIFEST_FILE, SUMMARY_FILE};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("malformed trace {path}: {message}")]
    Malformed { path: PathBuf, message: String },
    #[error(transparent)]
    Fit(#[from] nlsdecay_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub trace: PathBuf,
    pub window: [f64; 2],
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub samples: usize,
    pub a_final: f64,
    /// Relative change of `A` over the last 20% of the window.
    pub a_plateau_change: Option<f64>,
    pub expected_slope: Option<f64>,
    pub tolerance: Option<f64>,
    pub pass: Option<bool>,
}

/// Fits `log ‖u‖_∞` against `log t` over `window` for a trace in the CSV
/// schema, and checks the slope against `expect ± tol` when both are given.
pub fn fit_and_report(
    path: &Path,
    window: (f64, f64),
    expect: Option<f64>,
    tol: Option<f64>,
) -> Result<FitReport, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let trace = DecayTrace::from_csv(&text, None).map_err(|message| ReportError::Malformed {
        path: path.to_path_buf(),
        message,
    })?;
    let fit: DecayFit = fit_decay_exponent(&trace, window)?;
    let pass = match (expect, tol) {
        (Some(e), Some(t)) => Some((fit.slope - e).abs() <= t),
        _ => None,
    };
    Ok(FitReport {
        trace: path.to_path_buf(),
        window: [window.0, window.1],
        slope: fit.slope,
        stderr: fit.stderr,
        intercept: fit.intercept,
        samples: fit.samples,
        a_final: trace.a_at(window.1).unwrap_or(f64::NAN),
        a_plateau_change: trace.a_plateau_change(window),
        expected_slope: expect,
        tolerance: tol,
        pass,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDigest {
    pub dir: PathBuf,
    pub manifest: Option<RunManifest>,
    pub summary: Option<serde_json::Value>,
}

/// Collects the manifest and summary of every run directory at or directly
/// below `root`, sorted by path.
pub fn aggregate(root: &Path) -> Result<Vec<RunDigest>, ReportError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ReportError::Io { path, source }
    };
    let mut dirs = vec![root.to_path_buf()];
    for entry in std::fs::read_dir(root).map_err(io(root))? {
        let p = entry.map_err(io(root))?.path();
        if p.is_dir() {
            dirs.push(p);
        }
    }
    dirs.sort();
    let mut out = Vec::new();
    for dir in dirs {
        let mpath = dir.join(MANIFEST_FILE);
        let spath = dir.join(SUMMARY_FILE);
        if !mpath.exists() && !spath.exists() {
            continue;
        }
        let manifest = mpath.exists().then(|| RunManifest::read(&mpath)).transpose().map_err(io(&mpath))?;
        let summary = if spath.exists() {
            let bytes = std::fs::read(&spath).map_err(io(&spath))?;
            Some(serde_json::from_slice(&bytes).map_err(|e| ReportError::Malformed {
                path: spath.clone(),
                message: e.to_string(),
            })?)
        } else {
            None
        };
        out.push(RunDigest { dir, manifest, summary });
    }
    Ok(out)
}
