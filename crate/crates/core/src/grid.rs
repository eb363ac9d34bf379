//! Periodic computational boxes and their frequency lattices.
//!
//! A grid covers `[-ℓ, ℓ)^d` with `n` points per axis. Sample `j` on an axis
//! sits at `x_j = -ℓ + j·h` with `h = 2ℓ/n`. Multi-dimensional samples are
//! stored row-major: the last axis varies fastest, so the flat index of
//! `(j_0, .., j_{d-1})` is `Σ j_a · n^{d-1-a}`.
//!
//! Spectral arrays use the same layout in FFT order: index `m` on an axis
//! carries the wavenumber `(π/ℓ)·m` for `m < n/2` and `(π/ℓ)·(m - n)`
//! otherwise, so the signed index ranges over `[-n/2, n/2)`.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct GridSpec {
    dimension: usize,
    half_width: f64,
    points: usize,
    spacing: f64,
    volume_element: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridParams {
    dimension: usize,
    half_width: f64,
    points: usize,
}

impl TryFrom<GridParams> for GridSpec {
    type Error = Error;
    fn try_from(p: GridParams) -> Result<Self> {
        GridSpec::new(p.dimension, p.half_width, p.points)
    }
}

impl From<GridSpec> for GridParams {
    fn from(g: GridSpec) -> Self {
        GridParams {
            dimension: g.dimension,
            half_width: g.half_width,
            points: g.points,
        }
    }
}

/// Build a grid; see [`GridSpec::new`].
pub fn make_grid(dimension: usize, half_width: f64, points: usize) -> Result<GridSpec> {
    GridSpec::new(dimension, half_width, points)
}

impl GridSpec {
    pub fn new(dimension: usize, half_width: f64, points: usize) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(Error::Dimension(dimension));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::HalfWidth(half_width));
        }
        if points < 8 || !points.is_power_of_two() {
            return Err(Error::Points(points));
        }
        let spacing = 2.0 * half_width / points as f64;
        Ok(GridSpec {
            dimension,
            half_width,
            points,
            spacing,
            volume_element: spacing.powi(dimension as i32),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn volume_element(&self) -> f64 {
        self.volume_element
    }

    /// Total number of samples, `n^d`.
    pub fn len(&self) -> usize {
        self.points.pow(self.dimension as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Box volume `(2ℓ)^d`.
    pub fn volume(&self) -> f64 {
        (2.0 * self.half_width).powi(self.dimension as i32)
    }

    /// Lattice spacing in frequency, `π/ℓ`.
    pub fn frequency_step(&self) -> f64 {
        PI / self.half_width
    }

    /// Largest wavenumber magnitude on one axis, `(π/ℓ)(n/2)`.
    pub fn max_wavenumber(&self) -> f64 {
        self.frequency_step() * (self.points / 2) as f64
    }

    pub fn coordinate(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing
    }

    /// Axis coordinates `x_0 .. x_{n-1}`.
    pub fn axis(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.coordinate(j)).collect()
    }

    /// Splits a flat index into per-axis indices (unused trailing axes are 0).
    pub fn unflatten(&self, mut idx: usize) -> [usize; 3] {
        let mut out = [0; 3];
        for a in (0..self.dimension).rev() {
            out[a] = idx % self.points;
            idx /= self.points;
        }
        out
    }

    pub fn flatten(&self, multi: &[usize]) -> usize {
        multi[..self.dimension]
            .iter()
            .fold(0, |acc, &j| acc * self.points + j)
    }

    /// Physical position of a flat index.
    pub fn position(&self, idx: usize) -> [f64; 3] {
        let m = self.unflatten(idx);
        let mut x = [0.0; 3];
        for a in 0..self.dimension {
            x[a] = self.coordinate(m[a]);
        }
        x
    }

    /// Signed lattice index for an FFT-ordered index.
    pub fn signed_index(&self, m: usize) -> i64 {
        if m < self.points / 2 {
            m as i64
        } else {
            m as i64 - self.points as i64
        }
    }

    pub fn lattice(&self) -> FrequencyLattice {
        FrequencyLattice::new(self)
    }
}

/// Dual lattice of a grid: per-axis wavenumbers and the `|k|²` table in the
/// flat spectral layout.
#[derive(Debug, Clone)]
pub struct FrequencyLattice {
    grid: GridSpec,
    axis: Vec<f64>,
    k_squared: Vec<f64>,
}

impl FrequencyLattice {
    fn new(grid: &GridSpec) -> Self {
        let axis: Vec<f64> = (0..grid.points())
            .map(|m| grid.frequency_step() * grid.signed_index(m) as f64)
            .collect();
        let axis_sq: Vec<f64> = axis.iter().map(|k| k * k).collect();
        let n = grid.points();
        let k_squared = match grid.dimension() {
            1 => axis_sq.clone(),
            2 => {
                let mut v = Vec::with_capacity(n * n);
                for a in &axis_sq {
                    for b in &axis_sq {
                        v.push(a + b);
                    }
                }
                v
            }
            _ => {
                let mut v = Vec::with_capacity(n * n * n);
                for a in &axis_sq {
                    for b in &axis_sq {
                        for c in &axis_sq {
                            v.push(a + b + c);
                        }
                    }
                }
                v
            }
        };
        FrequencyLattice {
            grid: *grid,
            axis,
            k_squared,
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Wavenumbers of one axis in FFT order.
    pub fn axis(&self) -> &[f64] {
        &self.axis
    }

    pub fn k_squared(&self) -> &[f64] {
        &self.k_squared
    }

    /// Wavevector of a flat spectral index.
    pub fn wavevector(&self, idx: usize) -> [f64; 3] {
        let m = self.grid.unflatten(idx);
        let mut k = [0.0; 3];
        for a in 0..self.grid.dimension() {
            k[a] = self.axis[m[a]];
        }
        k
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_pi_box() {
        let g = make_grid(1, PI, 8).unwrap();
        assert!((g.spacing() - PI / 4.0).abs() < 1e-15);
        let mut ks: Vec<f64> = g.lattice().axis().to_vec();
        ks.sort_by(f64::total_cmp);
        let expect: Vec<f64> = (-4..4).map(|j| j as f64).collect();
        for (k, e) in ks.iter().zip(&expect) {
            assert!((k - e).abs() < 1e-14);
        }
    }

    #[test]
    fn reference_three_dimensional_grid() {
        let g = make_grid(3, 16.0 * PI, 64).unwrap();
        assert!((g.spacing() - PI / 2.0).abs() < 1e-14);
        assert!((g.max_wavenumber() - 2.0).abs() < 1e-14);
        let lat = g.lattice();
        let kmax = lat.axis().iter().fold(0.0f64, |m, k| m.max(k.abs()));
        assert!((kmax - 2.0).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(make_grid(2, 1.0, 7), Err(Error::Points(7))));
        assert!(matches!(make_grid(2, 1.0, 4), Err(Error::Points(4))));
        assert!(matches!(make_grid(4, 1.0, 8), Err(Error::Dimension(4))));
        assert!(matches!(make_grid(0, 1.0, 8), Err(Error::Dimension(0))));
        assert!(make_grid(2, 0.0, 8).is_err());
        assert!(make_grid(2, -1.0, 8).is_err());
        assert!(make_grid(2, f64::NAN, 8).is_err());
    }

    #[test]
    fn derived_fields_are_reproducible() {
        let g = make_grid(3, 7.3, 32).unwrap();
        let again = GridSpec::new(g.dimension(), g.half_width(), g.points()).unwrap();
        assert_eq!(g.spacing().to_bits(), again.spacing().to_bits());
        assert_eq!(g.volume_element().to_bits(), again.volume_element().to_bits());
        assert_eq!(
            g.volume_element().to_bits(),
            (2.0 * 7.3 / 32.0f64).powi(3).to_bits()
        );
    }

    #[test]
    fn k_squared_symmetric_under_negation() {
        let g = make_grid(2, 3.0, 16).unwrap();
        let lat = g.lattice();
        let n = g.points();
        for i in 1..n {
            for j in 1..n {
                let a = lat.k_squared()[g.flatten(&[i, j])];
                let b = lat.k_squared()[g.flatten(&[n - i, n - j])];
                if i != n / 2 && j != n / 2 {
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn flatten_unflatten_bijection() {
        let g = make_grid(3, 1.0, 8).unwrap();
        for idx in 0..g.len() {
            assert_eq!(g.flatten(&g.unflatten(idx)), idx);
        }
    }

    #[test]
    fn serde_revalidates() {
        let g = make_grid(2, 2.5, 16).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: GridSpec = serde_json::from_str(&s).unwrap();
        assert_eq!(g, back);
        let bad = r#"{"dimension":2,"half_width":1.0,"points":100}"#;
        assert!(serde_json::from_str::<GridSpec>(bad).is_err());
    }
}
