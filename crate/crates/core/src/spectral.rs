//! Discrete Fourier transforms over a grid, spectral multipliers and
//! trigonometric interpolation.
//!
//! Multi-dimensional transforms run one axis at a time on top of `rustfft`.
//! Every line transform is independent and the work is done in a fixed order,
//! so results are bit-reproducible.

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};
use crate::field::{Field, Spectrum};
use crate::grid::GridSpec;

fn planner() -> &'static Mutex<FftPlanner<f64>> {
    static PLANNER: OnceLock<Mutex<FftPlanner<f64>>> = OnceLock::new();
    PLANNER.get_or_init(|| Mutex::new(FftPlanner::new()))
}

const COLUMN_BATCH: usize = 16;

/// Unnormalized n-dimensional DFT engine for one grid shape.
#[derive(Clone)]
pub struct Transform {
    points: usize,
    dimension: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Transform {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Transform")
            .field("points", &self.points)
            .field("dimension", &self.dimension)
            .finish()
    }
}

impl Transform {
    pub fn new(grid: &GridSpec) -> Self {
        let mut p = planner().lock().expect("fft planner poisoned");
        Transform {
            points: grid.points(),
            dimension: grid.dimension(),
            forward: p.plan_fft_forward(grid.points()),
            inverse: p.plan_fft_inverse(grid.points()),
        }
    }

    /// In-place `Σ_x f(x) e^{-2πi m·j/n}` over all axes.
    pub fn forward_raw(&self, data: &mut [Complex64], work: &mut Workspace) {
        self.run(&*self.forward, data, work);
    }

    /// In-place `Σ_m F(m) e^{+2πi m·j/n}` over all axes, without the `1/n^d`.
    pub fn inverse_raw(&self, data: &mut [Complex64], work: &mut Workspace) {
        self.run(&*self.inverse, data, work);
    }

    fn run(&self, fft: &dyn Fft<f64>, data: &mut [Complex64], work: &mut Workspace) {
        let n = self.points;
        let scratch_len = fft.get_inplace_scratch_len();
        if work.scratch.len() < scratch_len {
            work.scratch.resize(scratch_len, Complex64::default());
        }
        for axis in 0..self.dimension {
            let stride = n.pow((self.dimension - 1 - axis) as u32);
            if stride == 1 {
                fft.process_with_scratch(data, &mut work.scratch[..scratch_len]);
                continue;
            }
            // gather a few columns at a time so reads and writes stay in cache
            let batch = COLUMN_BATCH.min(stride);
            work.lines.resize(batch * n, Complex64::default());
            for chunk in data.chunks_mut(n * stride) {
                for j0 in (0..stride).step_by(batch) {
                    let lines = &mut work.lines[..batch * n];
                    for i in 0..n {
                        let row = &chunk[i * stride + j0..i * stride + j0 + batch];
                        for (b, z) in row.iter().enumerate() {
                            lines[b * n + i] = *z;
                        }
                    }
                    fft.process_with_scratch(lines, &mut work.scratch[..scratch_len]);
                    for i in 0..n {
                        let row = &mut chunk[i * stride + j0..i * stride + j0 + batch];
                        for (b, z) in row.iter_mut().enumerate() {
                            *z = lines[b * n + i];
                        }
                    }
                }
            }
        }
    }
}

/// Reusable buffers for [`Transform`].
#[derive(Debug, Default, Clone)]
pub struct Workspace {
    scratch: Vec<Complex64>,
    lines: Vec<Complex64>,
}

/// Multiplies `values` by `scale · (-1)^{Σ m_a}`; this moves the DFT origin
/// from the first sample to `x = -ℓ`.
fn checkerboard(grid: &GridSpec, values: &mut [Complex64], scale: f64) {
    let n = grid.points();
    match grid.dimension() {
        1 => {
            for (m, z) in values.iter_mut().enumerate() {
                *z *= if m % 2 == 0 { scale } else { -scale };
            }
        }
        2 => {
            for (a, row) in values.chunks_mut(n).enumerate() {
                for (b, z) in row.iter_mut().enumerate() {
                    *z *= if (a + b) % 2 == 0 { scale } else { -scale };
                }
            }
        }
        _ => {
            for (a, slab) in values.chunks_mut(n * n).enumerate() {
                for (b, row) in slab.chunks_mut(n).enumerate() {
                    for (c, z) in row.iter_mut().enumerate() {
                        *z *= if (a + b + c) % 2 == 0 { scale } else { -scale };
                    }
                }
            }
        }
    }
}

pub fn forward_transform(f: &Field) -> Spectrum {
    let grid = *f.grid();
    let mut values = f.values().to_vec();
    Transform::new(&grid).forward_raw(&mut values, &mut Workspace::default());
    checkerboard(&grid, &mut values, grid.volume_element());
    Spectrum::from_parts(grid, values, f.time())
}

pub fn inverse_transform(s: &Spectrum) -> Field {
    let grid = *s.grid();
    let mut values = s.values().to_vec();
    checkerboard(&grid, &mut values, 1.0 / grid.volume());
    Transform::new(&grid).inverse_raw(&mut values, &mut Workspace::default());
    Field::from_parts(grid, values, s.time())
}

/// Pointwise product with `m(k)`, where `k` is the `d`-component wavevector.
pub fn apply_multiplier(s: &Spectrum, m: impl Fn(&[f64]) -> Complex64) -> Result<Spectrum> {
    let grid = *s.grid();
    let lat = grid.lattice();
    let d = grid.dimension();
    let mut values = Vec::with_capacity(grid.len());
    for (idx, z) in s.values().iter().enumerate() {
        let k = lat.wavevector(idx);
        let w = m(&k[..d]);
        if !(w.re.is_finite() && w.im.is_finite()) {
            return Err(Error::invalid(format!("multiplier not finite at k = {:?}", &k[..d])));
        }
        values.push(z * w);
    }
    Ok(Spectrum::from_parts(grid, values, s.time()))
}

/// Pointwise product with a multiplier depending only on `|k|²`.
pub fn apply_radial_multiplier(s: &Spectrum, m: impl Fn(f64) -> Complex64) -> Spectrum {
    let grid = *s.grid();
    let lat = grid.lattice();
    let values = s
        .values()
        .iter()
        .zip(lat.k_squared())
        .map(|(z, &k2)| z * m(k2))
        .collect();
    Spectrum::from_parts(grid, values, s.time())
}

/// Re-expresses a spectrum on a grid with `factor` times as many points per
/// axis over the same box, by zero padding.
pub fn zero_pad(s: &Spectrum, factor: usize) -> Result<Spectrum> {
    if factor == 0 || !factor.is_power_of_two() {
        return Err(Error::invalid(format!("padding factor {factor} is not a power of two")));
    }
    let g = *s.grid();
    let fine = GridSpec::new(g.dimension(), g.half_width(), g.points() * factor)?;
    let big = fine.points() as i64;
    let mut out = vec![Complex64::new(0.0, 0.0); fine.len()];
    for (idx, z) in s.values().iter().enumerate() {
        let m = g.unflatten(idx);
        let mut t = [0usize; 3];
        for a in 0..g.dimension() {
            t[a] = g.signed_index(m[a]).rem_euclid(big) as usize;
        }
        out[fine.flatten(&t)] = *z;
    }
    Ok(Spectrum::from_parts(fine, out, s.time()))
}

/// Trigonometric interpolant of `f` sampled on a `factor`-times finer grid.
pub fn upsample(f: &Field, factor: usize) -> Result<Field> {
    if factor == 1 {
        return Ok(f.clone());
    }
    Ok(inverse_transform(&zero_pad(&forward_transform(f), factor)?))
}

/// Evaluates the trigonometric polynomial `(2ℓ)^{-d} Σ_k F(k) e^{ik·y}` on the
/// tensor-product point set `points[0] × .. × points[d-1]`, returned in
/// row-major order over those point lists.
pub fn evaluate_tensor(s: &Spectrum, points: &[Vec<f64>]) -> Result<Vec<Complex64>> {
    let g = *s.grid();
    let d = g.dimension();
    if points.len() != d {
        return Err(Error::invalid("one point list per axis is required"));
    }
    let lat = g.lattice();
    let ks = lat.axis();
    let n = g.points();
    let mut data: Vec<Complex64> = s.values().to_vec();
    let mut shape: Vec<usize> = vec![n; d];
    for (axis, ys) in points.iter().enumerate() {
        let p = ys.len();
        let mut matrix = Vec::with_capacity(p * n);
        for &y in ys {
            for &k in ks {
                matrix.push(Complex64::from_polar(1.0, k * y));
            }
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let mut next = vec![Complex64::new(0.0, 0.0); outer * p * inner];
        for o in 0..outer {
            for (r, row) in matrix.chunks(n).enumerate() {
                let dst = &mut next[(o * p + r) * inner..(o * p + r + 1) * inner];
                for (m, w) in row.iter().enumerate() {
                    let src = &data[(o * n + m) * inner..(o * n + m + 1) * inner];
                    for (a, b) in dst.iter_mut().zip(src) {
                        *a += w * b;
                    }
                }
            }
        }
        data = next;
        shape[axis] = p;
    }
    let scale = 1.0 / g.volume();
    data.iter_mut().for_each(|z| *z *= scale);
    Ok(data)
}
