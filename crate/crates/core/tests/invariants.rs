use std::f64::consts::PI;

use nlsdecay_core::lemmas::{lemma_norms, random_band_limited};
use nlsdecay_core::norms::{l2_norm, mass};
use nlsdecay_core::propagate::{linear_propagate, strang_step};
use nlsdecay_core::spectral::{forward_transform, inverse_transform};
use nlsdecay_core::{make_grid, Complex64, EquationSpec, Field, LemmaKind, RandomFieldSpec};
use proptest::prelude::*;

fn field(d: usize, n: usize, seed: u64) -> Field {
    let grid = make_grid(d, 4.0 * PI, n).unwrap();
    let spec = RandomFieldSpec {
        grid,
        spectral_cutoff: 0.8 * grid.max_wavenumber(),
        spectral_decay: 2.0,
        seed,
    };
    random_band_limited(&spec).unwrap()
}

fn max_diff(a: &Field, b: &Field) -> f64 {
    a.values().iter().zip(b.values()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transform_round_trip_and_parseval(seed in any::<u64>(), d in 1usize..=3) {
        let f = field(d, 16, seed);
        let s = forward_transform(&f);
        prop_assert!(rel(s.l2_norm(), l2_norm(&f)) < 1e-12);
        let back = inverse_transform(&s);
        prop_assert!(max_diff(&back, &f) < 1e-12 * l2_norm(&f));
    }

    #[test]
    fn free_flow_is_a_unitary_group(seed in any::<u64>(), s in -3.0f64..3.0, t in -3.0f64..3.0) {
        let f = field(2, 32, seed);
        let one = linear_propagate(&linear_propagate(&f, s), t);
        let both = linear_propagate(&f, s + t);
        prop_assert!(max_diff(&one, &both) < 1e-12 * l2_norm(&f));
        prop_assert!(rel(mass(&both), mass(&f)) < 1e-12);
    }

    #[test]
    fn strang_step_conserves_mass_and_reverses(seed in any::<u64>(), dt in 1e-4f64..0.05, q in prop::sample::select(vec![3u32, 5])) {
        let f = field(2, 32, seed);
        let eq = EquationSpec::new(2, q).unwrap();
        let g = strang_step(&f, dt, &eq);
        prop_assert!(rel(mass(&g), mass(&f)) < 1e-12);
        // the symmetric splitting is its own inverse under dt → -dt
        let back = strang_step(&g, -dt, &eq);
        prop_assert!(max_diff(&back, &f) < 1e-11 * l2_norm(&f));
    }

    #[test]
    fn lemma_ratios_ignore_translation_and_scale(
        seed in any::<u64>(),
        shift in prop::array::uniform3(-8i64..8),
        re in -3.0f64..3.0,
        im in -3.0f64..3.0,
    ) {
        prop_assume!(re.hypot(im) > 0.1);
        let f = field(3, 16, seed);
        let g = f.roll(&shift).scale(Complex64::new(re, im));
        let (a, b) = (lemma_norms(&f).unwrap(), lemma_norms(&g).unwrap());
        for kind in [
            LemmaKind::Ele,
            LemmaKind::Ele2,
            LemmaKind::GradientEmbedding,
            LemmaKind::GradientInterpolation,
            LemmaKind::SupFromGradient,
        ] {
            let (x, y) = (kind.ratio(&a), kind.ratio(&b));
            prop_assert!(rel(y, x) <= 1e-12, "{:?}: {} vs {}", kind, x, y);
        }
    }
}
