use std::f64::consts::PI;

use nlsdecay_cli::config::{parse_config_str, ConfigError, Scenario};
use nlsdecay_cli::verify::{reference_config, REFERENCE_CONFIGS};
use nlsdecay_core::LemmaKind;
use proptest::prelude::*;

fn violations(text: &str) -> Vec<String> {
    match parse_config_str(text) {
        Err(e @ ConfigError::Invalid(_)) => e.violations(),
        Err(e) => panic!("expected validation errors, got {e}"),
        Ok(c) => panic!("expected rejection, parsed {c:?}"),
    }
}

#[test]
fn minimal_decay_config_gets_documented_defaults() {
    let c = parse_config_str("schema_version = 1\nscenario = \"decay-2d-quintic\"\n").unwrap();
    assert_eq!(c.scenario, Scenario::Decay2dQuintic);
    assert_eq!((c.grid.dimension, c.grid.points), (2, 256));
    assert!((c.grid.half_width - 32.0 * PI).abs() < 1e-12);
    let eq = c.equation.as_ref().unwrap();
    assert_eq!((eq.exponent, eq.linear), (5, false));
    let d = c.datum.as_ref().unwrap();
    assert_eq!((d.sigma, d.amplitude), (1.0, 0.5));
    let s = c.solver.as_ref().unwrap();
    assert_eq!((s.dt, s.t_end, s.snapshot_every, s.dealiasing), (1e-3, 12.0, 40, false));
    let g = c.diagnostics.as_ref().unwrap();
    assert_eq!((g.sobolev_order, g.strichartz_q, g.strichartz_r), (3.0, 8.0, 8.0));
    assert_eq!((g.expected_slope, g.slope_tolerance), (Some(-1.0), Some(0.15)));
    assert!(c.duhamel.is_none());
    assert!(c.lemma.is_none());
}

#[test]
fn three_dimensional_defaults_follow_the_model() {
    let q = parse_config_str("schema_version = 1\nscenario = \"decay-3d-quintic\"\n").unwrap();
    let c = parse_config_str("schema_version = 1\nscenario = \"decay-3d-cubic\"\n").unwrap();
    assert_eq!((q.grid.points, c.grid.points), (64, 64));
    assert_eq!(q.diagnostics.as_ref().unwrap().sobolev_order, 3.0);
    assert_eq!(c.diagnostics.as_ref().unwrap().sobolev_order, 4.0);
    assert_eq!(q.diagnostics.as_ref().unwrap().strichartz_q, 10.0);
    assert_eq!(c.diagnostics.as_ref().unwrap().strichartz_q, 5.0);
    assert_eq!(c.equation.as_ref().unwrap().exponent, 3);
}

#[test]
fn non_power_of_two_points_name_the_field() {
    let v = violations("schema_version = 1\nscenario = \"decay-2d-quintic\"\n[grid]\npoints = 100\n");
    assert!(v.iter().any(|m| m.starts_with("grid.points")), "{v:?}");
}

#[test]
fn every_violation_is_reported() {
    let v = violations(
        "schema_version = 1\nscenario = \"decay-2d-quintic\"\n[grid]\npoints = 100\nhalf_width = -1.0\n[solver]\ndt = 0.0\n",
    );
    for field in ["grid.points", "grid.half_width", "solver.dt"] {
        assert!(v.iter().any(|m| m.starts_with(field)), "{field} missing from {v:?}");
    }
}

#[test]
fn unknown_scenario_and_fields_are_rejected() {
    let v = violations("schema_version = 1\nscenario = \"decay-4d-septic\"\n");
    assert!(v[0].contains("unknown scenario"));
    assert!(matches!(
        parse_config_str("schema_version = 1\nscenario = \"decay-2d-quintic\"\n[grid]\nsize = 3\n"),
        Err(ConfigError::Syntax { .. })
    ));
    let v = violations("schema_version = 2\nscenario = \"decay-2d-quintic\"\n");
    assert!(v[0].starts_with("schema_version"));
}

#[test]
fn short_l_is_flagged_unless_overridden() {
    let base = "schema_version = 1\nscenario = \"decay-2d-quintic\"\n[duhamel]\nm = 1.0\nl = 50.0\ntimes = [6.0]\n";
    let v = violations(base);
    assert!(v.iter().any(|m| m.starts_with("duhamel.l") && m.contains("100")), "{v:?}");
    let ok = parse_config_str(&format!("{base}allow_short_l = true\n")).unwrap();
    assert!(ok.duhamel.unwrap().allow_short_l);
}

#[test]
fn duhamel_times_must_be_snapshot_times_past_2m() {
    let v = violations(
        "schema_version = 1\nscenario = \"decay-2d-quintic\"\n[duhamel]\nm = 1.0\ntimes = [1.0, 6.01, 13.0]\n",
    );
    assert!(v.iter().any(|m| m.contains("below 2M")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("not a snapshot time")), "{v:?}");
    assert!(v.iter().any(|m| m.contains("outside")), "{v:?}");
}

#[test]
fn model_mismatch_is_rejected() {
    let v = violations("schema_version = 1\nscenario = \"decay-3d-quintic\"\n[grid]\ndimension = 2\n[equation]\nexponent = 3\n");
    assert!(v.iter().any(|m| m.starts_with("grid.dimension")));
    assert!(v.iter().any(|m| m.starts_with("equation.exponent")));
    let v = violations(
        "schema_version = 1\nscenario = \"pseudo-conformal\"\n[equation]\nexponent = 5\n[pseudo_conformal]\ntimes = [1.0]\n",
    );
    assert!(v.iter().any(|m| m.contains("mass-critical")), "{v:?}");
}

/// A valid configuration for each scenario, given as TOML tables keyed by
/// dotted field names so single fields can be dropped.
fn minimal(s: Scenario) -> Vec<(&'static str, &'static str)> {
    let mut v = vec![("schema_version", "1"), ("scenario", "")];
    v.extend(match s {
        Scenario::LinearDispersive => vec![("grid.dimension", "2")],
        Scenario::DuhamelSplit => vec![
            ("grid.dimension", "2"),
            ("equation.exponent", "3"),
            ("duhamel.m", "1.0"),
            ("duhamel.times", "[4.0]"),
        ],
        Scenario::LemmaSuite => vec![("lemma.kinds", "[\"ele\"]")],
        Scenario::PseudoConformal => vec![("pseudo_conformal.times", "[1.0]")],
        _ => vec![],
    });
    v
}

fn render(s: Scenario, fields: &[(&str, &str)]) -> String {
    let mut top = String::new();
    let mut tables: Vec<(String, Vec<String>)> = Vec::new();
    for (key, value) in fields {
        match key.split_once('.') {
            None if *key == "scenario" => top.push_str(&format!("scenario = \"{s}\"\n")),
            None => top.push_str(&format!("{key} = {value}\n")),
            Some((table, field)) => {
                let line = format!("{field} = {value}");
                match tables.iter_mut().find(|(t, _)| t == table) {
                    Some((_, lines)) => lines.push(line),
                    None => tables.push((table.to_string(), vec![line])),
                }
            }
        }
    }
    for (t, lines) in tables {
        top.push_str(&format!("[{t}]\n{}\n", lines.join("\n")));
    }
    top
}

#[test]
fn each_required_field_is_enforced() {
    for s in Scenario::ALL {
        let fields = minimal(s);
        parse_config_str(&render(s, &fields)).unwrap_or_else(|e| panic!("{s}: {e}"));
        for required in s.required_fields() {
            let listed = fields.iter().any(|(k, _)| k == required);
            assert!(listed, "{s}: minimal config lacks required field {required}");
            let kept: Vec<_> = fields.iter().filter(|(k, _)| k != required).copied().collect();
            let text = render(s, &kept);
            let v = match parse_config_str(&text) {
                Err(e) => e.violations(),
                Ok(_) => panic!("{s}: accepted without {required}"),
            };
            assert!(v.iter().any(|m| m.starts_with(required)), "{s}/{required}: {v:?}");
        }
    }
}

#[test]
fn shipped_configs_round_trip() {
    for (name, text) in REFERENCE_CONFIGS {
        let c = parse_config_str(text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = parse_config_str(&c.to_toml()).unwrap();
        assert_eq!(again, c, "{name}");
        assert_eq!(again.to_toml(), c.to_toml());
        assert_eq!(again.hash(), c.hash());
    }
}

#[test]
fn hash_ignores_output_dir_only() {
    let a = reference_config("decay-2d-quintic");
    let b = a.clone().with_output_dir("/elsewhere");
    assert_eq!(a.hash(), b.hash());
    let mut c = a.clone();
    c.seed = 1;
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn lemma_kinds_parse() {
    let c = parse_config_str(
        "schema_version = 1\nscenario = \"lemma-suite\"\n[lemma]\nkinds = [\"ele\", \"ele2\", \"gradient-embedding\"]\nsamples = 5\n",
    )
    .unwrap();
    let l = c.lemma.unwrap();
    assert_eq!(l.kinds, vec![LemmaKind::Ele, LemmaKind::Ele2, LemmaKind::GradientEmbedding]);
    // half the largest resolved wavenumber π n / (2ℓ) = 2
    assert!((l.cutoff - 1.0).abs() < 1e-12);
    let v = violations("schema_version = 1\nscenario = \"lemma-suite\"\n[lemma]\nkinds = [\"sobolev\"]\n");
    assert!(v.iter().any(|m| m.starts_with("lemma.kinds")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn valid_configs_round_trip(
        log_n in 3u32..9,
        half_pi in 1.0f64..64.0,
        sigma in 0.2f64..4.0,
        amp in -2.0f64..2.0,
        steps in 1u64..5000,
        every in 1u64..200,
        seed in any::<u64>(),
    ) {
        let text = format!(
            "schema_version = 1\nscenario = \"decay-2d-quintic\"\nseed = {seed}\n[grid]\npoints = {}\nhalf_width_pi = {half_pi}\n\
             [datum]\nsigma = {sigma}\namplitude = {amp}\n[solver]\ndt = 0.001\nt_end = {}\nsnapshot_every = {every}\n",
            1usize << log_n,
            steps as f64 * 0.001,
        );
        match parse_config_str(&text) {
            Ok(c) => {
                let again = parse_config_str(&c.to_toml()).unwrap();
                prop_assert_eq!(again, c);
            }
            // t_end = steps·dt may not be reproducible in floating point
            Err(e) => prop_assert!(e.violations().iter().all(|m| m.starts_with("solver.t_end")), "{:?}", e),
        }
    }
}
