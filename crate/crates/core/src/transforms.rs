//! Closed-form Gaussian solutions of the free equation and the
//! pseudo-conformal transform for mass-critical problems.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::field::{sample_function, Field};
use crate::grid::GridSpec;
use crate::norms;
use crate::propagate::{linear_propagate, TrajectoryHistory};
use crate::spectral::{evaluate_tensor, forward_transform};

/// `A exp(-|x - c|²/(2σ²))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDatum {
    pub sigma: f64,
    pub amplitude: Complex64,
    pub center: [f64; 3],
}

impl GaussianDatum {
    pub fn new(sigma: f64, amplitude: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::invalid(format!("Gaussian width must be positive, got {sigma}")));
        }
        Ok(GaussianDatum {
            sigma,
            amplitude: Complex64::new(amplitude, 0.0),
            center: [0.0; 3],
        })
    }

    pub fn centered_at(mut self, center: [f64; 3]) -> Self {
        self.center = center;
        self
    }

    /// Resolution and box-size problems of this datum on `grid`, as
    /// human-readable messages; empty when `σ ≥ 4h` and `ℓ ≥ 8σ`.
    pub fn warnings(&self, grid: &GridSpec) -> Vec<String> {
        let mut out = Vec::new();
        if self.sigma < 4.0 * grid.spacing() {
            out.push(format!(
                "width {} is below 4 grid spacings ({})",
                self.sigma,
                4.0 * grid.spacing()
            ));
        }
        if grid.half_width() < 8.0 * self.sigma {
            out.push(format!(
                "half width {} is below 8 widths ({})",
                grid.half_width(),
                8.0 * self.sigma
            ));
        }
        out
    }

    /// `‖g‖₁ = |A| (2πσ²)^{d/2}`.
    pub fn l1_norm(&self, d: usize) -> f64 {
        self.amplitude.norm() * (2.0 * std::f64::consts::PI * self.sigma * self.sigma).powf(d as f64 / 2.0)
    }

    /// `‖g‖₂ = |A| (πσ²)^{d/4}`.
    pub fn l2_norm(&self, d: usize) -> f64 {
        self.amplitude.norm() * (std::f64::consts::PI * self.sigma * self.sigma).powf(d as f64 / 4.0)
    }

    /// Samples the datum on `grid`.
    pub fn sample(&self, grid: &GridSpec) -> Result<Field> {
        gaussian_free_evolution(self, 0.0, grid)
    }

    /// Whole-space `‖e^{itΔ}g‖_∞ = |A| (σ²/|σ²+2it|)^{d/2}`.
    pub fn free_sup(&self, t: f64, d: usize) -> f64 {
        let s2 = self.sigma * self.sigma;
        self.amplitude.norm() * (s2 / (s2 * s2 + 4.0 * t * t).sqrt()).powf(d as f64 / 2.0)
    }
}

/// Closed-form solution `A (σ²/(σ²+2it))^{d/2} exp(-|x-c|²/(2(σ²+2it)))` of
/// `i∂_t u + Δu = 0`, sampled on `grid`.
pub fn gaussian_free_evolution(g: &GaussianDatum, t: f64, grid: &GridSpec) -> Result<Field> {
    let d = grid.dimension();
    let s2 = g.sigma * g.sigma;
    let w = Complex64::new(s2, 2.0 * t);
    let prefactor = if t == 0.0 {
        g.amplitude
    } else {
        g.amplitude * (Complex64::new(s2, 0.0) / w).powf(d as f64 / 2.0)
    };
    let inv = 1.0 / (2.0 * w);
    let f = sample_function(grid, |x| {
        let r2: f64 = x.iter().zip(&g.center).map(|(a, c)| (a - c) * (a - c)).sum();
        if t == 0.0 {
            prefactor * (-r2 / (2.0 * s2)).exp()
        } else {
            prefactor * (-r2 * inv).exp()
        }
    })?;
    Ok(f.with_time(t))
}

/// `‖e^{itΔ}u₀‖_∞ t^{d/2} / ‖u₀‖₁`.
pub fn dispersive_ratio(u0: &Field, t: f64, d: usize) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("dispersive ratio needs t > 0, got {t}")));
    }
    if u0.grid().dimension() != d {
        return Err(Error::Dimension(d));
    }
    let l1 = norms::lp_norm(u0, 1.0)?;
    if l1 == 0.0 {
        return Err(Error::invalid("datum has zero L¹ norm"));
    }
    let sup = norms::sup_norm(&linear_propagate(u0, t));
    Ok(sup * t.powf(d as f64 / 2.0) / l1)
}

/// Result of [`pseudo_conformal`].
#[derive(Debug, Clone)]
pub struct PseudoConformal {
    pub field: Field,
    /// `1/t`, the time at which `v` was evaluated.
    pub source_time: f64,
    /// Set when `1/t` fell between snapshots and `v` was interpolated
    /// linearly in time.
    pub interpolated: bool,
    /// `max |v_{i+1} - v_i|` over the bracketing snapshots; an upper bound
    /// for the change that the linear interpolation smooths over. Zero when
    /// an exact snapshot was used.
    pub interpolation_gap: f64,
    /// Largest `|v(1/t, x/t)|` over the evaluated points; `‖u(t)‖_∞` equals
    /// `t^{-d/2}` times this.
    pub evaluated_v_sup: f64,
}

/// `u(t,x) = t^{-d/2} conj(v)(1/t, x/t) e^{i|x|²/(4t)}` on `target`.
pub fn pseudo_conformal(history: &TrajectoryHistory, t: f64, target: &GridSpec) -> Result<PseudoConformal> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::invalid(format!("pseudo-conformal transform needs t > 0, got {t}")));
    }
    let eq = history.equation();
    if !eq.is_mass_critical() {
        return Err(Error::invalid(format!(
            "pseudo-conformal transform needs a mass-critical equation, got d = {}, q = {}",
            eq.dimension, eq.exponent
        )));
    }
    let vgrid = *history.grid();
    let d = vgrid.dimension();
    if target.dimension() != d {
        return Err(Error::Dimension(target.dimension()));
    }
    let s = 1.0 / t;
    let times = history.times();
    let (v, interpolated, gap) = match history.index_of(s) {
        Some(i) => (history.snapshots()[i].clone(), false, 0.0),
        None => {
            let end = history.end_time();
            let i = times
                .windows(2)
                .position(|w| w[0] < s && s < w[1])
                .ok_or(Error::OutsideHistory { time: s, start: times[0], end })?;
            let (a, b) = (&history.snapshots()[i], &history.snapshots()[i + 1]);
            let lambda = (s - times[i]) / (times[i + 1] - times[i]);
            let diff = b.sub(a)?;
            let gap = norms::sup_norm(&diff);
            let v = a.add(&diff.scale(Complex64::new(lambda, 0.0)))?;
            (v, true, gap)
        }
    };
    let ell = vgrid.half_width();
    let axis: Vec<f64> = target.axis().iter().map(|x| x / t).collect();
    if axis.iter().any(|y| *y < -ell || *y >= ell) {
        return Err(Error::invalid(format!(
            "x/t leaves the box of v: target half width {} at t = {t} needs {}",
            target.half_width(),
            target.half_width() / t
        )));
    }
    let points = vec![axis; d];
    let vals = evaluate_tensor(&forward_transform(&v), &points)?;
    let evaluated_v_sup = vals.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let scale = t.powf(-(d as f64) / 2.0);
    let mut out = Vec::with_capacity(vals.len());
    for (idx, z) in vals.into_iter().enumerate() {
        let x = target.position(idx);
        let r2: f64 = x[..d].iter().map(|v| v * v).sum();
        out.push(z.conj() * Complex64::from_polar(scale, r2 / (4.0 * t)));
    }
    Ok(PseudoConformal {
        field: Field::new(*target, out)?.with_time(t),
        source_time: s,
        interpolated,
        interpolation_gap: gap,
        evaluated_v_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::propagate::{evolve, EquationSpec, SolverConfig};

    #[test]
    fn initial_time_matches_sampling() {
        let g = make_grid(3, 12.0, 32).unwrap();
        let datum = GaussianDatum::new(1.5, 0.7).unwrap().centered_at([0.5, -1.0, 0.0]);
        let a = gaussian_free_evolution(&datum, 0.0, &g).unwrap();
        let b = sample_function(&g, |x| {
            let r2 = (x[0] - 0.5).powi(2) + (x[1] + 1.0).powi(2) + x[2].powi(2);
            Complex64::new(0.7 * (-r2 / 4.5).exp(), 0.0)
        })
        .unwrap();
        for (p, q) in a.values().iter().zip(b.values()) {
            assert!((p - q).norm() <= 1e-14);
        }
    }

    #[test]
    fn closed_form_is_unitary() {
        let g = make_grid(2, 40.0, 256).unwrap();
        let datum = GaussianDatum::new(1.0, 1.0).unwrap();
        let m0 = norms::l2_norm(&gaussian_free_evolution(&datum, 0.0, &g).unwrap());
        for t in [0.5, 1.0, 2.0] {
            let m = norms::l2_norm(&gaussian_free_evolution(&datum, t, &g).unwrap());
            assert!((m - m0).abs() <= 1e-10 * m0);
        }
        assert!((m0 - datum.l2_norm(2)).abs() <= 1e-10 * m0);
    }

    #[test]
    fn closed_form_matches_propagator() {
        let g = make_grid(2, 16.0 * std::f64::consts::PI, 256).unwrap();
        let datum = GaussianDatum::new(1.0, 1.0).unwrap();
        let u0 = datum.sample(&g).unwrap();
        let t = 3.0;
        let a = linear_propagate(&u0, t);
        let b = gaussian_free_evolution(&datum, t, &g).unwrap();
        let err = norms::sup_norm(&a.sub(&b).unwrap()) / norms::sup_norm(&b);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn warnings_flag_bad_grids() {
        let g = make_grid(2, 4.0, 16).unwrap();
        assert!(GaussianDatum::new(1.0, 1.0).unwrap().warnings(&g).len() == 2);
        let g = make_grid(2, 40.0, 256).unwrap();
        assert!(GaussianDatum::new(2.0, 1.0).unwrap().warnings(&g).is_empty());
    }

    #[test]
    fn dispersive_ratio_rejects_bad_input() {
        let g = make_grid(2, 8.0, 16).unwrap();
        assert!(dispersive_ratio(&Field::zeros(g), 1.0, 2).is_err());
        let f = Field::constant(g, Complex64::new(1.0, 0.0));
        assert!(dispersive_ratio(&f, 0.0, 2).is_err());
        assert!(dispersive_ratio(&f, 1.0, 3).is_err());
    }

    fn free_history(t_end: f64) -> TrajectoryHistory {
        let g = make_grid(2, 10.0 * std::f64::consts::PI, 128).unwrap();
        let u0 = GaussianDatum::new(1.0, 1.0).unwrap().sample(&g).unwrap();
        let eq = EquationSpec::new(2, 3).unwrap().without_nonlinearity();
        evolve(&u0, &eq, &SolverConfig::new(1e-2, t_end, 10), &mut []).unwrap()
    }

    #[test]
    fn unit_time_is_the_direct_formula() {
        let h = free_history(1.0);
        let target = make_grid(2, 8.0, 32).unwrap();
        let pc = pseudo_conformal(&h, 1.0, &target).unwrap();
        assert!(!pc.interpolated);
        let v = &h.snapshots()[h.len() - 1];
        let vals = evaluate_tensor(&forward_transform(v), &vec![target.axis(); 2]).unwrap();
        for (idx, (u, w)) in pc.field.values().iter().zip(&vals).enumerate() {
            let x = target.position(idx);
            let expect = w.conj() * Complex64::from_polar(1.0, (x[0] * x[0] + x[1] * x[1]) / 4.0);
            assert!((u - expect).norm() < 1e-14);
        }
    }

    #[test]
    fn sup_bookkeeping_and_errors() {
        let h = free_history(1.0);
        let target = make_grid(2, 8.0, 32).unwrap();
        let t = 1.0 / 0.55;
        let pc = pseudo_conformal(&h, t, &target).unwrap();
        assert!(pc.interpolated && pc.interpolation_gap > 0.0);
        let sup = norms::sup_norm(&pc.field);
        assert!((sup - pc.evaluated_v_sup / t).abs() <= 1e-14 * sup);
        assert!(pseudo_conformal(&h, 0.0, &target).is_err());
        assert!(pseudo_conformal(&h, 0.5, &target).is_err());
        let wide = make_grid(2, 40.0, 32).unwrap();
        assert!(pseudo_conformal(&h, 1.0, &wide).is_err());
    }

    #[test]
    fn headline_models_are_refused() {
        let g = make_grid(3, 10.0, 16).unwrap();
        let u0 = GaussianDatum::new(1.5, 0.1).unwrap().sample(&g).unwrap();
        let h = TrajectoryHistory::new(EquationSpec::quintic_3d(), u0).unwrap();
        assert!(pseudo_conformal(&h, 1.0, &g).is_err());
    }
}
