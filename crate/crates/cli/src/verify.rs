//! Built-in acceptance suites. Each criterion runs the scenarios it needs
//! (reference runs are shared) and returns a pass flag with the measured
//! numbers.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nlsdecay_core::duhamel::{choose_m_bound, middle_integral};
use nlsdecay_core::propagate::{linear_propagate, validity_window};
use nlsdecay_core::transforms::{gaussian_free_evolution, GaussianDatum};
use nlsdecay_core::{make_grid, norms};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::artifacts::{RunStatus, TRACE_FILE, SUMMARY_FILE, CHECKPOINT_FILE};
use crate::config::{parse_config_str, ExperimentConfig, Scenario};
use crate::runner::{
    resume, run_scenario, EvolutionSummary, LemmaSummary, LinearSummary, PseudoConformalSummary, RunError,
    RunOptions, RunOutcome, RunResult,
};

pub const REFERENCE_CONFIGS: [(&str, &str); 8] = [
    ("decay-2d-quintic", include_str!("../../../configs/decay-2d-quintic.toml")),
    ("decay-3d-quintic", include_str!("../../../configs/decay-3d-quintic.toml")),
    ("decay-3d-cubic", include_str!("../../../configs/decay-3d-cubic.toml")),
    ("linear-2d", include_str!("../../../configs/linear-2d.toml")),
    ("linear-3d", include_str!("../../../configs/linear-3d.toml")),
    ("lemma-suite", include_str!("../../../configs/lemma-suite.toml")),
    ("pseudo-conformal", include_str!("../../../configs/pseudo-conformal.toml")),
    ("duhamel-split", include_str!("../../../configs/duhamel-split.toml")),
];

/// One of the shipped configurations, parsed.
pub fn reference_config(name: &str) -> ExperimentConfig {
    let text = REFERENCE_CONFIGS
        .iter()
        .find(|(n, _)| *n == name)
        .unwrap_or_else(|| panic!("no reference configuration {name}"))
        .1;
    parse_config_str(text).unwrap_or_else(|e| panic!("reference configuration {name}: {e}"))
}

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "linear dispersive decay"),
    (2, "propagator oracle equivalence"),
    (3, "conservation"),
    (4, "Duhamel identity"),
    (5, "splitting consistency"),
    (6, "nonlinear decay"),
    (7, "choose_M_bound quadrature"),
    (8, "lemma suites"),
    (9, "Strichartz tail"),
    (10, "pseudo-conformal transform"),
    (11, "determinism and resume"),
];

/// Suite names accepted by `verify`, with their criteria.
pub fn suite(name: &str) -> Option<Vec<u8>> {
    let ids: Vec<u8> = match name {
        "all" => (1..=11).collect(),
        "linear" => vec![1],
        "oracle" => vec![2],
        "conservation" => vec![3],
        "duhamel" => vec![4],
        "splitting" => vec![5],
        "decay" => vec![6],
        "choose-m" => vec![7],
        "lemmas" => vec![8],
        "strichartz" => vec![9],
        "pseudo-conformal" => vec![10],
        "resume" => vec![11],
        "fast" => vec![2, 7, 10],
        other => vec![other.parse::<u8>().ok().filter(|i| (1..=11).contains(i))?],
    };
    Some(ids)
}

pub const SUITE_NAMES: &str =
    "all, fast, linear, oracle, conservation, duhamel, splitting, decay, choose-m, lemmas, strichartz, pseudo-conformal, resume, or a criterion number 1-11";

#[derive(Debug, Clone, Serialize)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub seconds: f64,
    pub detail: Value,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2}: {} ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.seconds
        )
    }
}

/// Runtime limits in seconds.
const LINEAR_2D_LIMIT: f64 = 60.0;
const LINEAR_3D_LIMIT: f64 = 300.0;
const DECAY_2D_LIMIT: f64 = 600.0;
const DECAY_3D_LIMIT: f64 = 1800.0;
const LEMMA_LIMIT: f64 = 300.0;
const PSEUDO_CONFORMAL_LIMIT: f64 = 120.0;

pub const DECAY_REFERENCES: [Scenario; 3] = [Scenario::Decay2dQuintic, Scenario::Decay3dQuintic, Scenario::Decay3dCubic];

struct Reference {
    outcome: RunOutcome,
    summary: EvolutionSummary,
}

pub struct Verifier {
    work_dir: PathBuf,
    verbose: bool,
    references: BTreeMap<&'static str, Reference>,
}

fn read_summary<T: serde::de::DeserializeOwned>(dir: &Path) -> RunResult<T> {
    let bytes = std::fs::read(dir.join(SUMMARY_FILE))?;
    serde_json::from_slice(&bytes).map_err(|e| RunError::Io(std::io::Error::other(e)))
}

/// Wall time of a run, or `None` when it was found already complete.
fn runtime(o: &RunOutcome) -> Option<f64> {
    (!o.manifest.already_complete).then_some(o.elapsed.as_secs_f64())
}

fn within(runtime: Option<f64>, limit: f64) -> bool {
    runtime.is_none_or(|s| s <= limit)
}

impl Verifier {
    pub fn new(work_dir: impl Into<PathBuf>, verbose: bool) -> Self {
        Verifier {
            work_dir: work_dir.into(),
            verbose,
            references: BTreeMap::new(),
        }
    }

    pub fn work_dir(&self) -> &Path {
        &self.work_dir
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            halt_after_steps: None,
            verbose: self.verbose,
        }
    }

    fn run_named(&self, name: &str, subdir: &str) -> RunResult<RunOutcome> {
        let cfg = reference_config(name).with_output_dir(self.work_dir.join(subdir));
        let out = run_scenario(&cfg, &self.options())?;
        if !out.succeeded() {
            return Err(RunError::Conflict(format!(
                "{name} did not complete: {:?}",
                out.manifest.failure
            )));
        }
        Ok(out)
    }

    fn reference(&mut self, s: Scenario) -> RunResult<&Reference> {
        let name = s.name();
        if !self.references.contains_key(name) {
            let outcome = self.run_named(name, name)?;
            let summary = read_summary(&outcome.dir)?;
            self.references.insert(name, Reference { outcome, summary });
        }
        Ok(&self.references[name])
    }

    /// Runs one criterion; errors count as failures with the message as detail.
    pub fn check(&mut self, id: u8) -> CriterionResult {
        let title = CRITERIA
            .iter()
            .find(|c| c.0 == id)
            .map_or("unknown criterion", |c| c.1);
        let clock = Instant::now();
        let result = match id {
            1 => self.linear_dispersive(),
            2 => oracle_equivalence(),
            3 => self.conservation(),
            4 => self.duhamel_identity(),
            5 => self.splitting(),
            6 => self.nonlinear_decay(),
            7 => choose_m_quadrature(),
            8 => self.lemma_suites(),
            9 => self.strichartz(),
            10 => self.pseudo_conformal(),
            11 => self.determinism_and_resume(),
            _ => Err(RunError::Conflict(format!("no criterion {id}"))),
        };
        let (pass, detail) = match result {
            Ok(v) => v,
            Err(e) => (false, json!({ "error": e.to_string() })),
        };
        CriterionResult {
            id,
            title,
            pass,
            seconds: clock.elapsed().as_secs_f64(),
            detail,
        }
    }

    fn linear_dispersive(&mut self) -> RunResult<(bool, Value)> {
        let mut pass = true;
        let mut detail = Vec::new();
        for (name, limit) in [("linear-2d", LINEAR_2D_LIMIT), ("linear-3d", LINEAR_3D_LIMIT)] {
            let out = self.run_named(name, name)?;
            let s: LinearSummary = read_summary(&out.dir)?;
            let t = runtime(&out);
            let ok = s.slope_pass && s.plateau_pass && within(t, limit);
            pass &= ok;
            detail.push(json!({
                "run": name,
                "slope": s.fit.slope,
                "expected": s.expected_slope,
                "max_plateau_deviation": s.max_plateau_deviation,
                "fit_window": s.fit_window,
                "runtime_s": t,
                "limit_s": limit,
                "pass": ok,
            }));
        }
        Ok((pass, Value::Array(detail)))
    }

    fn conservation(&mut self) -> RunResult<(bool, Value)> {
        let mut pass = true;
        let mut detail = Vec::new();
        for s in DECAY_REFERENCES {
            let r = &self.reference(s)?.summary;
            let ok = r.mass_drift <= 1e-10 && r.energy_drift <= 1e-6;
            pass &= ok;
            detail.push(json!({ "run": s.name(), "mass_drift": r.mass_drift, "energy_drift": r.energy_drift, "pass": ok }));
        }
        Ok((pass, Value::Array(detail)))
    }

    fn duhamel_identity(&mut self) -> RunResult<(bool, Value)> {
        let mut pass = true;
        let mut detail = Vec::new();
        for s in DECAY_REFERENCES {
            let r = &self.reference(s)?.summary;
            let d = r.duhamel.as_ref().ok_or_else(|| RunError::Conflict(format!("{s} has no Duhamel analysis")))?;
            let mut seen = Vec::new();
            for c in &d.reconstructions {
                let gain_ok = c.thinning_gain.is_some_and(|g| g >= 3.0);
                let ok = c.pass && c.residual <= 1e-3 && gain_ok;
                pass &= ok;
                seen.push(c.t);
                detail.push(json!({
                    "run": s.name(), "t": c.t,
                    "residual_plus": c.residual_plus, "residual_minus": c.residual_minus,
                    "unique_sign": c.unique_sign, "thinned_residual": c.thinned_residual,
                    "thinning_gain": c.thinning_gain, "pass": ok,
                }));
            }
            let want = [0.5 * r.t_end, r.t_end];
            if !want.iter().all(|w| seen.iter().any(|t| (t - w).abs() < 1e-12)) {
                pass = false;
                detail.push(json!({ "run": s.name(), "error": "reconstruction not checked at t_end/2 and t_end" }));
            }
        }
        Ok((pass, Value::Array(detail)))
    }

    fn splitting(&mut self) -> RunResult<(bool, Value)> {
        let mut pass = true;
        let mut detail = Vec::new();
        for s in DECAY_REFERENCES {
            let r = &self.reference(s)?.summary;
            let d = r.duhamel.as_ref().ok_or_else(|| RunError::Conflict(format!("{s} has no Duhamel analysis")))?;
            let mut at_2m = false;
            for c in &d.splits {
                let is_2m = (c.t - 2.0 * c.m).abs() <= 1e-12 * c.t;
                at_2m |= is_2m;
                let ok = c.within_twice_full && (c.f2_identically_zero == is_2m);
                pass &= ok;
                detail.push(json!({
                    "run": s.name(), "t": c.t, "m": c.m,
                    "split_residual": c.residual, "full_residual": c.full_residual,
                    "f2_sup": c.f2_sup, "f2_identically_zero": c.f2_identically_zero, "pass": ok,
                }));
            }
            if !at_2m {
                pass = false;
                detail.push(json!({ "run": s.name(), "error": "no split at t = 2M" }));
            }
        }
        Ok((pass, Value::Array(detail)))
    }

    fn nonlinear_decay(&mut self) -> RunResult<(bool, Value)> {
        let mut pass = true;
        let mut detail = Vec::new();
        for s in DECAY_REFERENCES {
            let limit = if s == Scenario::Decay2dQuintic { DECAY_2D_LIMIT } else { DECAY_3D_LIMIT };
            let reference = self.reference(s)?;
            let r = &reference.summary;
            let t = runtime(&reference.outcome);
            let ok = r.slope_pass == Some(true)
                && r.a_monotone
                && r.plateau_pass == Some(true)
                && within(t, limit);
            pass &= ok;
            detail.push(json!({
                "run": s.name(),
                "slope": r.fit.map(|f| f.slope),
                "expected": r.expected_slope,
                "tolerance": r.slope_tolerance,
                "fit_window": r.fit_window,
                "a_plateau_change": r.a_plateau_change,
                "a_monotone": r.a_monotone,
                "runtime_s": t,
                "limit_s": limit,
                "pass": ok,
            }));
        }
        Ok((pass, Value::Array(detail)))
    }

    fn strichartz(&mut self) -> RunResult<(bool, Value)> {
        let mut pass = true;
        let mut detail = Vec::new();
        for s in DECAY_REFERENCES {
            let r = &self.reference(s)?.summary;
            let st = r.strichartz.as_ref().ok_or_else(|| RunError::Conflict(format!("{s} has no Strichartz data")))?;
            let ok = st.monotone && st.additivity_error <= 1e-12;
            pass &= ok;
            detail.push(json!({
                "run": s.name(), "q": st.q, "r": st.r, "starts": st.starts.len(),
                "tail_at_0": st.tails.first(), "monotone": st.monotone,
                "additivity_error": st.additivity_error, "pass": ok,
            }));
        }
        Ok((pass, Value::Array(detail)))
    }

    fn lemma_suites(&mut self) -> RunResult<(bool, Value)> {
        let out = self.run_named("lemma-suite", "lemma-suite")?;
        let s: LemmaSummary = read_summary(&out.dir)?;
        let t = runtime(&out);
        // rerun at base resolution in a fresh directory; reports must agree to the bit
        let mut again_cfg = reference_config("lemma-suite").with_output_dir(self.work_dir.join("lemma-suite-rerun"));
        again_cfg.lemma.as_mut().unwrap().refine = false;
        let again = run_scenario(&again_cfg, &self.options())?;
        let rerun: LemmaSummary = read_summary(&again.dir)?;
        let reproducible = rerun.reports == s.reports
            && rerun
                .reports
                .iter()
                .zip(&s.reports)
                .all(|(a, b)| a.max_ratio.to_bits() == b.max_ratio.to_bits());
        let finite = s.reports.iter().all(|r| r.max_ratio.is_finite() && r.max_ratio > 0.0);
        let refined = !s.refinement.is_empty() && s.refinement.iter().all(|r| r.relative_change < 0.01);
        let invariant = s
            .invariance
            .iter()
            .all(|c| c.max_scaling_deviation <= 1e-12 && c.max_translation_deviation <= 1e-12);
        let exponents = s.exponents.iter().all(|e| e.holds);
        let samples_ok = s.reports.iter().all(|r| r.sample_count >= 1000);
        let pass = finite
            && reproducible
            && s.witnesses_reproduce
            && refined
            && invariant
            && exponents
            && samples_ok
            && within(t, LEMMA_LIMIT);
        Ok((
            pass,
            json!({
                "max_ratios": s.reports.iter().map(|r| json!({"kind": r.kind, "max": r.max_ratio, "seed": r.offending_seed})).collect::<Vec<_>>(),
                "refinement": s.refinement,
                "invariance": s.invariance,
                "exponent_identities_hold": exponents,
                "bit_reproducible": reproducible,
                "witnesses_reproduce": s.witnesses_reproduce,
                "composition": s.composition,
                "runtime_s": t,
                "limit_s": LEMMA_LIMIT,
            }),
        ))
    }

    fn pseudo_conformal(&mut self) -> RunResult<(bool, Value)> {
        let out = self.run_named("pseudo-conformal", "pseudo-conformal")?;
        let s: PseudoConformalSummary = read_summary(&out.dir)?;
        let t = runtime(&out);
        let pass = !s.checks.is_empty() && s.checks.iter().all(|c| c.pass) && within(t, PSEUDO_CONFORMAL_LIMIT);
        Ok((
            pass,
            json!({
                "checks": s.checks.iter().map(|c| json!({
                    "t": c.t, "mass_error": c.mass_error, "free_residual": c.free_residual,
                    "sup_bookkeeping_error": c.sup_bookkeeping_error, "pass": c.pass,
                })).collect::<Vec<_>>(),
                "runtime_s": t,
                "limit_s": PSEUDO_CONFORMAL_LIMIT,
            }),
        ))
    }

    fn determinism_and_resume(&mut self) -> RunResult<(bool, Value)> {
        let reference_dir = self.reference(Scenario::Decay2dQuintic)?.outcome.dir.clone();
        let cfg = reference_config("decay-2d-quintic").with_output_dir(self.work_dir.join("resume-2d"));
        let total = (cfg.solver.as_ref().unwrap().t_end / cfg.solver.as_ref().unwrap().dt).round() as u64;
        let ck_every = cfg.checkpoint.as_ref().unwrap().every_steps;
        // between two checkpoints, so the resumed run must redo some steps
        let halt = (total / 2 / ck_every) * ck_every + ck_every / 2;
        let halted = run_scenario(
            &cfg,
            &RunOptions {
                halt_after_steps: Some(halt),
                verbose: self.verbose,
            },
        )?;
        let halted_ok = halted.halted
            && halted.manifest.status == RunStatus::Running
            && halted.dir.join(CHECKPOINT_FILE).exists();
        let resumed = resume(&halted.dir.join(crate::artifacts::MANIFEST_FILE), &self.options())?;
        let same = |name: &str| -> RunResult<bool> {
            Ok(std::fs::read(reference_dir.join(name))? == std::fs::read(resumed.dir.join(name))?)
        };
        let trace_identical = same(TRACE_FILE)?;
        let summary_identical = same(SUMMARY_FILE)?;
        let rerun = run_scenario(&cfg, &self.options())?;
        let flagged = rerun.manifest.already_complete;
        let pass = halted_ok && resumed.succeeded() && trace_identical && summary_identical && flagged;
        Ok((
            pass,
            json!({
                "halted_at_step": halt,
                "checkpoint_every": ck_every,
                "halt_left_checkpoint": halted_ok,
                "trace_identical": trace_identical,
                "summary_identical": summary_identical,
                "rerun_flagged_complete": flagged,
            }),
        ))
    }
}

/// Criterion 2: the grid propagator against the closed-form Gaussian at ten
/// times inside a window computed for a `1e-10` boundary tail.
pub fn oracle_equivalence() -> RunResult<(bool, Value)> {
    let pi = std::f64::consts::PI;
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, n, ell) in [(2usize, 256usize, 16.0 * pi), (3, 128, 8.0 * pi)] {
        let grid = make_grid(d, ell, n)?;
        let datum = GaussianDatum::new(1.0, 1.0)?;
        let u0 = datum.sample(&grid)?;
        let t_wrap = validity_window(&grid, datum.sigma, 1e-10);
        let mut worst: f64 = 0.0;
        for j in 1..=10 {
            let t = t_wrap * j as f64 / 10.0;
            let exact = gaussian_free_evolution(&datum, t, &grid)?;
            let err = norms::sup_norm(&linear_propagate(&u0, t).sub(&exact)?) / norms::sup_norm(&exact);
            worst = worst.max(err);
        }
        let ok = worst <= 1e-8;
        pass &= ok;
        detail.push(json!({ "dimension": d, "points": n, "t_wrap": t_wrap, "max_relative_error": worst, "pass": ok }));
    }
    Ok((pass, Value::Array(detail)))
}

/// `∫_M^{t-M} (t-s)^{-3/2} s^{-3/2} ds = 4(t-2M) / (t² √(M(t-M)))`.
pub fn middle_integral_closed_form(m: f64, t: f64) -> f64 {
    4.0 * (t - 2.0 * m) / (t * t * (m * (t - m)).sqrt())
}

/// Criterion 7: adaptive quadrature against the antiderivative
/// `2(2s-t)/(t²√(s(t-s)))` at 20 random `(M, t)`, plus the integral stored
/// in a `choose_m_bound` result.
pub fn choose_m_quadrature() -> RunResult<(bool, Value)> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut pairs = Vec::new();
    for _ in 0..20 {
        let t = 10f64.powf(rng.random_range(0.0..3.0));
        let m = t * rng.random_range(0.001..0.49);
        let q = middle_integral(m, t, 3);
        let exact = middle_integral_closed_form(m, t);
        let err = ((q - exact) / exact).abs();
        worst = worst.max(err);
        pairs.push(json!({ "m": m, "t": t, "relative_error": err }));
    }
    let choice = choose_m_bound(1.0, 100.0, 3, 5)?;
    let choice_err = ((choice.integral - middle_integral_closed_form(choice.m, 100.0))
        / middle_integral_closed_form(choice.m, 100.0))
    .abs();
    let pass = worst <= 1e-9 && choice_err <= 1e-9 && choice.ratio <= 1.0;
    Ok((
        pass,
        json!({ "max_relative_error": worst, "choose_m": choice, "choose_m_error": choice_err, "pairs": pairs }),
    ))
}
