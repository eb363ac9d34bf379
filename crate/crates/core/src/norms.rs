//! Grid norms. Integrals are uniform-grid quadrature (`Σ · h^d`), which is
//! spectrally accurate for smooth fields that decay inside the box; Sobolev
//! norms are computed from the spectrum with weight `(1+|k|²)^s`.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::propagate::EquationSpec;
use crate::spectral::{forward_transform, inverse_transform, upsample};

/// `(Σ |f|^p h^d)^{1/p}`; `p = ∞` gives the largest sample modulus.
pub fn lp_norm(f: &Field, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::invalid(format!("L^p norm needs p ≥ 1, got {p}")));
    }
    if p.is_infinite() {
        return Ok(sup_norm(f));
    }
    let h = f.grid().volume_element();
    let s: f64 = if p == 2.0 {
        f.values().iter().map(|z| z.norm_sqr()).sum()
    } else if p.fract() == 0.0 && p <= 32.0 {
        let k = p as i32;
        f.values().iter().map(|z| z.norm().powi(k)).sum()
    } else {
        f.values().iter().map(|z| z.norm().powf(p)).sum()
    };
    Ok((s * h).powf(1.0 / p))
}

pub fn sup_norm(f: &Field) -> f64 {
    f.values().iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// Sup norm after `factor`-fold spectral upsampling; bounds the gap between
/// grid samples and the true maximum of the trigonometric interpolant.
pub fn sup_norm_refined(f: &Field, factor: usize) -> Result<f64> {
    Ok(sup_norm(&upsample(f, factor)?))
}

pub fn l2_norm(f: &Field) -> f64 {
    (f.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid().volume_element()).sqrt()
}

/// `‖f‖_{H^s}` with multiplier `(1+|k|²)^{s/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> Result<f64> {
    if s.is_nan() || s < 0.0 {
        return Err(Error::invalid(format!("Sobolev order must be nonnegative, got {s}")));
    }
    let spec = forward_transform(f);
    if s == 0.0 {
        return Ok(spec.l2_norm());
    }
    Ok(spec.weighted_norm(|k2| (1.0 + k2).powf(s)))
}

/// `‖∇f‖_{L²}` computed spectrally.
pub fn gradient_l2(f: &Field) -> f64 {
    forward_transform(f).weighted_norm(|k2| k2)
}

/// Spectral gradient, one field per axis.
pub fn gradient(f: &Field) -> Vec<Field> {
    let spec = forward_transform(f);
    let grid = *f.grid();
    let lat = grid.lattice();
    (0..grid.dimension())
        .map(|a| {
            let mut s = spec.clone();
            for (idx, z) in s.values_mut().iter_mut().enumerate() {
                *z *= Complex64::new(0.0, lat.wavevector(idx)[a]);
            }
            inverse_transform(&s)
        })
        .collect()
}

/// `max_x |∇f(x)|` over grid samples.
pub fn gradient_sup(f: &Field) -> f64 {
    let parts = gradient(f);
    (0..f.grid().len())
        .map(|i| parts.iter().map(|p| p.values()[i].norm_sqr()).sum::<f64>().sqrt())
        .fold(0.0, f64::max)
}

/// Mass `∫|u|²`.
pub fn mass(f: &Field) -> f64 {
    let n = l2_norm(f);
    n * n
}

/// Hamiltonian `∫ ½|∇u|² + |u|^{q+1}/(q+1)`; the potential part is dropped
/// for the free equation.
pub fn energy(f: &Field, eq: &EquationSpec) -> f64 {
    let g = gradient_l2(f);
    let kinetic = 0.5 * g * g;
    if eq.linear {
        return kinetic;
    }
    let q1 = eq.exponent as i32 + 1;
    let pot: f64 = f.values().iter().map(|z| z.norm().powi(q1)).sum::<f64>()
        * f.grid().volume_element()
        / q1 as f64;
    kinetic + pot
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_function;
    use crate::grid::{make_grid, GridSpec};
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn gaussian(grid: &GridSpec) -> Field {
        sample_function(grid, |x| {
            Complex64::new((-x.iter().map(|v| v * v).sum::<f64>() / 2.0).exp(), 0.0)
        })
        .unwrap()
    }

    #[test]
    fn constant_field_norms() {
        let g = make_grid(2, 1.5, 16).unwrap();
        let c = Complex64::new(0.6, 0.8);
        let f = Field::constant(g, c * 2.0);
        let v = g.volume();
        for p in [1.0, 2.0, 3.0, 7.5] {
            let expect = 2.0 * v.powf(1.0 / p);
            assert!((lp_norm(&f, p).unwrap() - expect).abs() < 1e-12 * expect);
        }
        assert!((lp_norm(&f, f64::INFINITY).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn plane_wave_has_volume_norms() {
        let g = make_grid(3, PI, 8).unwrap();
        let f = sample_function(&g, |x| Complex64::from_polar(1.0, x[0] - 2.0 * x[2])).unwrap();
        for p in [1.0, 2.0, 10.0] {
            let expect = g.volume().powf(1.0 / p);
            assert!((lp_norm(&f, p).unwrap() - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn gaussian_l2_norm() {
        // ∫ e^{-|x|²} dx = π^{3/2}
        let g = make_grid(3, 10.0, 64).unwrap();
        let n = lp_norm(&gaussian(&g), 2.0).unwrap();
        assert!((n - PI.powf(0.75)).abs() < 1e-8);
    }

    #[test]
    fn rejects_small_p_and_negative_s() {
        let g = make_grid(1, 1.0, 8).unwrap();
        let f = Field::zeros(g);
        assert!(lp_norm(&f, 0.5).is_err());
        assert!(sobolev_norm(&f, -1.0).is_err());
    }

    #[test]
    fn sobolev_zero_is_l2_and_single_mode_weight() {
        let g = make_grid(2, PI, 16).unwrap();
        let f = sample_function(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0] + x[1])).unwrap();
        let l2 = lp_norm(&f, 2.0).unwrap();
        assert!((sobolev_norm(&f, 0.0).unwrap() - l2).abs() < 1e-12 * l2);
        for s in [1.0, 2.5, 4.0] {
            let expect = (1.0 + 10.0f64).powf(s / 2.0) * l2;
            assert!((sobolev_norm(&f, s).unwrap() - expect).abs() < 1e-11 * expect);
        }
    }

    #[test]
    fn sobolev_monotone_in_order() {
        let g = make_grid(2, 4.0, 16).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let f = Field::new(
            g,
            (0..g.len()).map(|_| Complex64::new(rng.random(), rng.random())).collect(),
        )
        .unwrap();
        let mut last = 0.0;
        for s in [0.0, 0.5, 1.0, 2.0, 3.0, 4.0] {
            let v = sobolev_norm(&f, s).unwrap();
            assert!(v >= last);
            last = v;
        }
    }

    #[test]
    fn gradient_sup_examples() {
        let g = make_grid(2, PI, 16).unwrap();
        assert_eq!(gradient_sup(&Field::constant(g, Complex64::new(2.0, 1.0))), 0.0);
        let f = sample_function(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0] - 4.0 * x[1])).unwrap();
        assert!((gradient_sup(&f) - 5.0).abs() < 1e-11);
    }

    #[test]
    fn holder_interpolation_on_random_fields() {
        let g = make_grid(2, 2.0, 8).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..1000 {
            let f = Field::new(
                g,
                (0..g.len())
                    .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                    .collect(),
            )
            .unwrap();
            let p: f64 = rng.random_range(1.0..4.0);
            let q: f64 = rng.random_range(4.0..12.0);
            let theta: f64 = rng.random_range(0.0..1.0);
            let r = 1.0 / (theta / p + (1.0 - theta) / q);
            let lhs = lp_norm(&f, r).unwrap();
            let rhs = lp_norm(&f, p).unwrap().powf(theta) * lp_norm(&f, q).unwrap().powf(1.0 - theta);
            assert!(lhs <= rhs + 1e-9, "{lhs} > {rhs}");
        }
    }

    #[test]
    fn energy_of_plane_wave() {
        let g = make_grid(1, PI, 16).unwrap();
        let f = sample_function(&g, |x| Complex64::from_polar(0.5, 2.0 * x[0])).unwrap();
        let eq = EquationSpec::new(1, 5).unwrap();
        let v = g.volume();
        let expect = 0.5 * 4.0 * 0.25 * v + 0.5f64.powi(6) * v / 6.0;
        assert!((energy(&f, &eq) - expect).abs() < 1e-12);
        assert!((energy(&f, &EquationSpec::free(1)) - 0.5 * v).abs() < 1e-12);
    }
}
