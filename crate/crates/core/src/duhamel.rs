//! Duhamel reconstruction of a stored solution and the three-way split of
//! the nonlinear integral.
//!
//! For `i∂_t u + Δu = N(u)` with our propagator conventions,
//!
//! ```text
//! u(t) = e^{itΔ} u₀ + σ·i ∫₀ᵗ e^{i(t-s)Δ} N(u(s)) ds,   σ = DUHAMEL_SIGN
//! ```
//!
//! The sign is not assumed: [`sign_test`] evaluates both choices against a
//! stored run and exactly one of them reconstructs the solution.

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::norms;
use crate::propagate::{dealias_mask, linear_propagate, EquationSpec, TrajectoryHistory};
use crate::quadrature;
use crate::spectral::{forward_transform, inverse_transform, Transform, Workspace};

/// Sign of the Duhamel integral for `e^{-i|k|²t}` propagation, fixed by the
/// residual test on reference runs.
pub const DUHAMEL_SIGN: f64 = -1.0;

/// `|f|^{q-1} f` pointwise.
pub fn nonlinear_term(f: &Field, eq: &EquationSpec) -> Field {
    if eq.linear {
        return Field::zeros(*f.grid());
    }
    let p = eq.power();
    let mut out = f.clone();
    for z in out.values_mut() {
        let m2 = z.norm_sqr();
        let mut amp = m2.powi(p / 2);
        if p % 2 != 0 {
            amp *= m2.sqrt();
        }
        *z *= amp;
    }
    out
}

/// [`nonlinear_term`] optionally projected onto the `2/3` band.
pub fn nonlinear_term_with(f: &Field, eq: &EquationSpec, dealias: bool) -> Field {
    let n = nonlinear_term(f, eq);
    if !dealias {
        return n;
    }
    let mask = dealias_mask(f.grid());
    let mut s = forward_transform(&n);
    for (z, keep) in s.values_mut().iter_mut().zip(mask) {
        if !keep {
            *z = Complex64::new(0.0, 0.0);
        }
    }
    let mut out = inverse_transform(&s);
    out.set_time(f.time());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DuhamelParams {
    /// Width `M` of the near-endpoint pieces.
    pub m: f64,
    /// Perturbative onset time `L`.
    pub l: f64,
    /// Measured Strichartz tail at `L/2`.
    pub delta: f64,
    pub sign: f64,
}

impl DuhamelParams {
    pub fn new(m: f64, l: f64) -> Self {
        DuhamelParams {
            m,
            l,
            delta: 0.0,
            sign: DUHAMEL_SIGN,
        }
    }

    /// Checks positivity, the sign, and `L ≥ 100 M` unless `allow_short_l`.
    pub fn validate(&self, allow_short_l: bool) -> Result<()> {
        if !(self.m.is_finite() && self.m > 0.0) {
            return Err(Error::invalid(format!("M must be positive, got {}", self.m)));
        }
        if !(self.l.is_finite() && self.l > 0.0) {
            return Err(Error::invalid(format!("L must be positive, got {}", self.l)));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::invalid("delta must be nonnegative"));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::invalid("sign must be +1 or -1"));
        }
        if !allow_short_l && self.l < 100.0 * self.m {
            return Err(Error::invalid(format!(
                "L = {} is below 100·M = {}",
                self.l,
                100.0 * self.m
            )));
        }
        Ok(())
    }
}

/// Result of one quadrature of the Duhamel integrand.
#[derive(Debug, Clone)]
pub struct DuhamelIntegral {
    pub field: Field,
    /// Richardson-style estimate `‖I_h - I_{2h}‖₂ / (2^p - 1)` from the same
    /// run at doubled node spacing (`p = 4` for Simpson, `2` for the
    /// trapezoid), when the node count allows it.
    pub error_estimate: Option<f64>,
    pub nodes: usize,
}

/// Composite weights on `m` equal intervals of width `h`: Simpson when `m`
/// is even, Simpson plus a closing 3/8 panel when `m ≥ 3` is odd, trapezoid
/// for a single interval.
pub fn composite_weights(m: usize, h: f64) -> Vec<f64> {
    let mut w = vec![0.0; m + 1];
    match m {
        0 => {}
        1 => {
            w[0] = 0.5 * h;
            w[1] = 0.5 * h;
        }
        _ => {
            let simpson_end = if m.is_multiple_of(2) { m } else { m - 3 };
            let mut i = 0;
            while i < simpson_end {
                w[i] += h / 3.0;
                w[i + 1] += 4.0 * h / 3.0;
                w[i + 2] += h / 3.0;
                i += 2;
            }
            if simpson_end < m {
                let c = 3.0 * h / 8.0;
                w[simpson_end] += c;
                w[simpson_end + 1] += 3.0 * c;
                w[simpson_end + 2] += 3.0 * c;
                w[simpson_end + 3] += c;
            }
        }
    }
    w
}

fn locate(history: &TrajectoryHistory, t: f64) -> Result<usize> {
    history.index_of(t).ok_or(Error::OutsideHistory {
        time: t,
        start: 0.0,
        end: history.end_time(),
    })
}

/// `sign · i ∫_{t0}^{t1} e^{i(t-s)Δ} N(u(s)) ds` by composite quadrature over
/// the stored snapshots. Range endpoints must be snapshot times and the
/// snapshots inside the range must be uniformly spaced.
pub fn duhamel_integral(
    history: &TrajectoryHistory,
    t: f64,
    range: (f64, f64),
    sign: f64,
) -> Result<DuhamelIntegral> {
    duhamel_integral_with(history, t, range, sign, false)
}

pub fn duhamel_integral_with(
    history: &TrajectoryHistory,
    t: f64,
    range: (f64, f64),
    sign: f64,
    dealias: bool,
) -> Result<DuhamelIntegral> {
    let (t0, t1) = range;
    let end = history.end_time();
    if !(0.0 <= t0 && t0 <= t1 && t1 <= t + 1e-12 * t.abs().max(1.0)) {
        return Err(Error::invalid(format!("range [{t0}, {t1}] is not inside [0, {t}]")));
    }
    if t > end * (1.0 + 1e-12) {
        return Err(Error::OutsideHistory { time: t, start: 0.0, end });
    }
    let grid = *history.grid();
    let i0 = locate(history, t0)?;
    let i1 = locate(history, t1)?;
    if i0 == i1 {
        return Ok(DuhamelIntegral {
            field: Field::zeros(grid).with_time(t),
            error_estimate: Some(0.0),
            nodes: 1,
        });
    }
    let m = i1 - i0;
    let times = history.times();
    let h = (times[i1] - times[i0]) / m as f64;
    for i in i0..i1 {
        let step = times[i + 1] - times[i];
        if (step - h).abs() > 1e-9 * h {
            return Err(Error::InsufficientSnapshots(format!(
                "snapshots in [{t0}, {t1}] are not uniformly spaced"
            )));
        }
    }
    let fine = composite_weights(m, h);
    let (coarse, order) = if m % 2 == 0 {
        let cw = composite_weights(m / 2, 2.0 * h);
        let mut w = vec![0.0; m + 1];
        for (j, c) in cw.into_iter().enumerate() {
            w[2 * j] = c;
        }
        (Some(w), if m >= 4 { 4 } else { 2 })
    } else {
        (None, 0)
    };

    let transform = Transform::new(&grid);
    let lattice = grid.lattice();
    let k2 = lattice.k_squared();
    let eq = *history.equation();
    let nodes: Vec<usize> = (i0..=i1).collect();
    let batch = rayon::current_num_threads().max(1);
    let mut acc_fine = vec![Complex64::new(0.0, 0.0); grid.len()];
    let mut acc_coarse = coarse.as_ref().map(|_| vec![Complex64::new(0.0, 0.0); grid.len()]);

    for chunk in nodes.chunks(batch) {
        let spectra: Vec<Vec<Complex64>> = chunk
            .par_iter()
            .map(|&i| {
                let n = nonlinear_term_with(&history.snapshots()[i], &eq, dealias);
                let mut v = n.into_values();
                transform.forward_raw(&mut v, &mut Workspace::default());
                let lag = t - times[i];
                for (z, &kk) in v.iter_mut().zip(k2) {
                    *z *= Complex64::from_polar(1.0, -kk * lag);
                }
                v
            })
            .collect();
        // fixed summation order keeps the result independent of thread count
        for (&i, v) in chunk.iter().zip(&spectra) {
            let wf = fine[i - i0];
            for (a, z) in acc_fine.iter_mut().zip(v) {
                *a += z * wf;
            }
            if let (Some(acc), Some(cw)) = (acc_coarse.as_mut(), coarse.as_ref()) {
                let wc = cw[i - i0];
                if wc != 0.0 {
                    for (a, z) in acc.iter_mut().zip(v) {
                        *a += z * wc;
                    }
                }
            }
        }
    }

    let finish = |mut v: Vec<Complex64>| {
        let factor = Complex64::new(0.0, sign) / grid.len() as f64;
        let mut work = Workspace::default();
        v.iter_mut().for_each(|z| *z *= factor);
        transform.inverse_raw(&mut v, &mut work);
        Field::from_parts(grid, v, Some(t))
    };
    let field = finish(acc_fine);
    let error_estimate = acc_coarse.map(|c| {
        let cf = finish(c);
        let diff = norms::l2_norm(&field.sub(&cf).expect("same grid"));
        diff / ((1u32 << order) - 1) as f64
    });
    Ok(DuhamelIntegral {
        field,
        error_estimate,
        nodes: m + 1,
    })
}

fn snapshot_at(history: &TrajectoryHistory, t: f64) -> Result<&Field> {
    Ok(&history.snapshots()[locate(history, t)?])
}

/// Relative L² residual of the full-range reconstruction at time `t`.
pub fn duhamel_residual(history: &TrajectoryHistory, t: f64, sign: f64) -> Result<f64> {
    let u = snapshot_at(history, t)?;
    let lin = linear_propagate(history.initial_datum(), t);
    let int = duhamel_integral(history, t, (0.0, t), sign)?;
    let recon = lin.add(&int.field)?;
    Ok(norms::l2_norm(&recon.sub(u)?) / norms::l2_norm(u))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SignTest {
    pub t: f64,
    pub residual_plus: f64,
    pub residual_minus: f64,
}

impl SignTest {
    /// The sign whose residual is below `tol`, if exactly one is.
    pub fn unique_sign(&self, tol: f64) -> Option<f64> {
        match (self.residual_plus <= tol, self.residual_minus <= tol) {
            (true, false) => Some(1.0),
            (false, true) => Some(-1.0),
            _ => None,
        }
    }
}

/// Reconstruction residuals at `t` for both sign conventions. The nonlinear
/// integral is computed once; the two reconstructions differ only in its sign.
pub fn sign_test(history: &TrajectoryHistory, t: f64) -> Result<SignTest> {
    let u = snapshot_at(history, t)?;
    let lin = linear_propagate(history.initial_datum(), t);
    let plus = duhamel_integral(history, t, (0.0, t), 1.0)?.field;
    let norm_u = norms::l2_norm(u);
    let r_plus = norms::l2_norm(&lin.add(&plus)?.sub(u)?) / norm_u;
    let r_minus = norms::l2_norm(&lin.sub(&plus)?.sub(u)?) / norm_u;
    Ok(SignTest {
        t,
        residual_plus: r_plus,
        residual_minus: r_minus,
    })
}

/// `e^{itΔ}u₀` plus the nonlinear integral split over `[0, M]`,
/// `[M, t-M]` and `[t-M, t]`.
#[derive(Debug, Clone)]
pub struct DuhamelSplit {
    pub t: f64,
    pub u_linear: Field,
    pub f1: Field,
    pub f2: Field,
    pub f3: Field,
    pub quadrature_error_estimate: f64,
    /// `‖u_linear + F₁ + F₂ + F₃ - u(t)‖₂ / ‖u(t)‖₂`.
    pub residual: f64,
}

impl DuhamelSplit {
    pub fn reconstruction(&self) -> Field {
        self.u_linear
            .add(&self.f1)
            .and_then(|s| s.add(&self.f2))
            .and_then(|s| s.add(&self.f3))
            .expect("pieces share a grid")
    }
}

#[allow(non_snake_case)]
pub fn split_F(history: &TrajectoryHistory, t: f64, params: &DuhamelParams) -> Result<DuhamelSplit> {
    let m = params.m;
    if !(m > 0.0) {
        return Err(Error::invalid("M must be positive"));
    }
    if t < 2.0 * m * (1.0 - 1e-12) {
        return Err(Error::invalid(format!("split needs t ≥ 2M, got t = {t}, M = {m}")));
    }
    let u = snapshot_at(history, t)?;
    let lo = m;
    let hi = (t - m).max(lo);
    let p1 = duhamel_integral(history, t, (0.0, lo), params.sign)?;
    let p2 = duhamel_integral(history, t, (lo, hi), params.sign)?;
    let p3 = duhamel_integral(history, t, (hi, t), params.sign)?;
    let err = [&p1, &p2, &p3]
        .iter()
        .map(|p| p.error_estimate.unwrap_or(f64::NAN))
        .sum::<f64>();
    let mut split = DuhamelSplit {
        t,
        u_linear: linear_propagate(history.initial_datum(), t),
        f1: p1.field,
        f2: p2.field,
        f3: p3.field,
        quadrature_error_estimate: err,
        residual: 0.0,
    };
    split.residual = norms::l2_norm(&split.reconstruction().sub(u)?) / norms::l2_norm(u);
    Ok(split)
}

/// Time-weighted sup norms of the split pieces, reported beside the run's
/// measured `A` and `M₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PieceReport {
    pub t: f64,
    pub weight: f64,
    pub u_linear: f64,
    pub f1: f64,
    pub f2: f64,
    pub f3: f64,
    pub a_measured: Option<f64>,
    pub m1_measured: Option<f64>,
}

pub fn weighted_piece_report(
    split: &DuhamelSplit,
    d: usize,
    a_measured: Option<f64>,
    m1_measured: Option<f64>,
) -> PieceReport {
    let weight = split.t.powf(d as f64 / 2.0);
    let w = |f: &Field| weight * norms::sup_norm(f);
    PieceReport {
        t: split.t,
        weight,
        u_linear: w(&split.u_linear),
        f1: w(&split.f1),
        f2: w(&split.f2),
        f3: w(&split.f3),
        a_measured,
        m1_measured,
    }
}

/// `∫_M^{t-M} (t-s)^{-d/2} s^{-d/2} ds` by adaptive quadrature.
pub fn middle_integral(m: f64, t: f64, d: usize) -> f64 {
    if t - m <= m {
        return 0.0;
    }
    let e = d as f64 / 2.0;
    quadrature::integrate(|s| ((t - s) * s).powf(-e), m, t - m, 0.0, 1e-13)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MChoice {
    pub m: f64,
    pub integral: f64,
    /// `M₁^{q-1} · integral / (t^{-d/2}/10)`; at most 1 when admissible.
    pub ratio: f64,
}

/// Number of search points for [`choose_m_bound`]: `M = (t/2)·j/J`,
/// `j = 1..J-1`.
pub const M_SEARCH_POINTS: usize = 512;

/// Smallest `M` on the search grid with
/// `M₁^{q-1} ∫_M^{t-M}(t-s)^{-d/2}s^{-d/2} ds ≤ t^{-d/2}/10`, taking the
/// unknown constant as 1.
pub fn choose_m_bound(m1: f64, t: f64, d: usize, q: u32) -> Result<MChoice> {
    if !(m1 > 0.0 && t > 0.0) {
        return Err(Error::invalid("M₁ and t must be positive"));
    }
    let target = 0.1 * t.powf(-(d as f64) / 2.0);
    let scale = m1.powi(q as i32 - 1);
    let mut best = f64::INFINITY;
    for j in 1..M_SEARCH_POINTS {
        let m = 0.5 * t * j as f64 / M_SEARCH_POINTS as f64;
        let integral = middle_integral(m, t, d);
        let ratio = scale * integral / target;
        if ratio <= 1.0 {
            return Ok(MChoice { m, integral, ratio });
        }
        best = best.min(ratio);
    }
    Err(Error::Unreachable { best_ratio: best })
}
