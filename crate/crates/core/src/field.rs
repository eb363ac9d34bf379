//! Complex sample fields and their Fourier coefficients.

use rustfft::num_complex::Complex64;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::GridSpec;

/// Samples of a complex function on a [`GridSpec`], in the grid's row-major
/// order.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    grid: GridSpec,
    values: Vec<Complex64>,
    time: Option<f64>,
}

/// Fourier coefficients of a [`Field`] in FFT order.
///
/// `F(k) = h^d Σ_x f(x) e^{-ik·x}` approximates the continuous transform
/// `∫ f e^{-ik·x} dx`; the inverse is `f(x) = (2ℓ)^{-d} Σ_k F(k) e^{ik·x}`, so
/// `Σ |f|² h^d = (2ℓ)^{-d} Σ |F|²`.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    grid: GridSpec,
    values: Vec<Complex64>,
    time: Option<f64>,
}

fn check_len(grid: &GridSpec, len: usize) -> Result<()> {
    if len != grid.len() {
        return Err(Error::invalid(format!(
            "expected {} values for the grid, got {len}",
            grid.len()
        )));
    }
    Ok(())
}

fn first_non_finite(values: &[Complex64]) -> Option<usize> {
    values
        .iter()
        .position(|z| !(z.re.is_finite() && z.im.is_finite()))
}

impl Field {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if let Some(i) = first_non_finite(&values) {
            return Err(Error::NonFiniteSample {
                coordinate: grid.position(i)[..grid.dimension()].to_vec(),
                value: values[i].to_string(),
            });
        }
        Ok(Field {
            grid,
            values,
            time: None,
        })
    }

    /// Wraps values already known to be finite.
    pub(crate) fn from_parts(grid: GridSpec, values: Vec<Complex64>, time: Option<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Field { grid, values, time }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Field::from_parts(grid, vec![Complex64::new(0.0, 0.0); grid.len()], None)
    }

    pub fn constant(grid: GridSpec, c: Complex64) -> Self {
        Field::from_parts(grid, vec![c; grid.len()], None)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    pub fn with_time(mut self, t: f64) -> Self {
        self.time = Some(t);
        self
    }

    pub fn set_time(&mut self, t: Option<f64>) {
        self.time = t;
    }

    pub fn is_finite(&self) -> bool {
        first_non_finite(&self.values).is_none()
    }

    pub fn scale(&self, s: Complex64) -> Field {
        let values = self.values.iter().map(|z| z * s).collect();
        Field::from_parts(self.grid, values, self.time)
    }

    pub fn add(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Field) -> Result<Field> {
        self.zip_with(other, |a, b| a - b)
    }

    fn zip_with(&self, other: &Field, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Field> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Field::from_parts(self.grid, values, self.time))
    }

    /// Pointwise complex conjugate.
    pub fn conj(&self) -> Field {
        let values = self.values.iter().map(|z| z.conj()).collect();
        Field::from_parts(self.grid, values, self.time)
    }

    /// Cyclic shift by whole lattice steps along each axis.
    pub fn roll(&self, shift: &[i64]) -> Field {
        let g = self.grid;
        let n = g.points() as i64;
        let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
        for (idx, z) in self.values.iter().enumerate() {
            let m = g.unflatten(idx);
            let mut target = [0usize; 3];
            for a in 0..g.dimension() {
                let s = shift.get(a).copied().unwrap_or(0);
                target[a] = (m[a] as i64 + s).rem_euclid(n) as usize;
            }
            out[g.flatten(&target)] = *z;
        }
        Field::from_parts(g, out, self.time)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_container(path.as_ref(), Kind::Physical, &self.grid, self.time, &self.values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Field> {
        let (kind, grid, time, values) = read_container(path.as_ref())?;
        if kind != Kind::Physical {
            return Err(Error::Format {
                path: path.as_ref().to_path_buf(),
                reason: "container holds a spectrum, not a field".into(),
            });
        }
        Ok(Field::from_parts(grid, values, time))
    }
}

impl Spectrum {
    pub fn new(grid: GridSpec, values: Vec<Complex64>) -> Result<Self> {
        check_len(&grid, values.len())?;
        if first_non_finite(&values).is_some() {
            return Err(Error::invalid("non-finite spectral coefficient"));
        }
        Ok(Spectrum {
            grid,
            values,
            time: None,
        })
    }

    pub(crate) fn from_parts(grid: GridSpec, values: Vec<Complex64>, time: Option<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Spectrum { grid, values, time }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Spectrum::from_parts(grid, vec![Complex64::new(0.0, 0.0); grid.len()], None)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }

    pub fn time(&self) -> Option<f64> {
        self.time
    }

    /// `((2ℓ)^{-d} Σ |F|²)^{1/2}`, equal to the grid L² norm of the field.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.values.iter().map(|z| z.norm_sqr()).sum();
        (s / self.grid.volume()).sqrt()
    }

    /// Weighted spectral norm `((2ℓ)^{-d} Σ w(k) |F|²)^{1/2}` given `w` on the
    /// `|k|²` table.
    pub fn weighted_norm(&self, weight: impl Fn(f64) -> f64) -> f64 {
        let lat = self.grid.lattice();
        let s: f64 = self
            .values
            .iter()
            .zip(lat.k_squared())
            .map(|(z, &k2)| weight(k2) * z.norm_sqr())
            .sum();
        (s / self.grid.volume()).sqrt()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_container(path.as_ref(), Kind::Spectral, &self.grid, self.time, &self.values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Spectrum> {
        let (kind, grid, time, values) = read_container(path.as_ref())?;
        if kind != Kind::Spectral {
            return Err(Error::Format {
                path: path.as_ref().to_path_buf(),
                reason: "container holds a field, not a spectrum".into(),
            });
        }
        Ok(Spectrum::from_parts(grid, values, time))
    }
}

/// Samples a closure at every grid point. The closure receives the
/// `d` coordinates of the point.
pub fn sample_function(grid: &GridSpec, f: impl Fn(&[f64]) -> Complex64) -> Result<Field> {
    let d = grid.dimension();
    let mut values = Vec::with_capacity(grid.len());
    for idx in 0..grid.len() {
        let x = grid.position(idx);
        let z = f(&x[..d]);
        if !(z.re.is_finite() && z.im.is_finite()) {
            return Err(Error::NonFiniteSample {
                coordinate: x[..d].to_vec(),
                value: z.to_string(),
            });
        }
        values.push(z);
    }
    Ok(Field::from_parts(*grid, values, None))
}

// Snapshot container, little endian:
//   magic "NLSFIELD", u32 version, u8 kind (0 field, 1 spectrum), u8 d,
//   u8 has_time, u8 reserved, u64 n, f64 half_width, f64 time,
//   then n^d pairs (re, im) of f64 in the grid's row-major order.
const MAGIC: &[u8; 8] = b"NLSFIELD";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Physical,
    Spectral,
}

fn write_container(
    path: &Path,
    kind: Kind,
    grid: &GridSpec,
    time: Option<f64>,
    values: &[Complex64],
) -> Result<()> {
    let mut buf = Vec::with_capacity(40 + values.len() * 16);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.push(match kind {
        Kind::Physical => 0,
        Kind::Spectral => 1,
    });
    buf.push(grid.dimension() as u8);
    buf.push(time.is_some() as u8);
    buf.push(0);
    buf.extend_from_slice(&(grid.points() as u64).to_le_bytes());
    buf.extend_from_slice(&grid.half_width().to_le_bytes());
    buf.extend_from_slice(&time.unwrap_or(0.0).to_le_bytes());
    for z in values {
        buf.extend_from_slice(&z.re.to_le_bytes());
        buf.extend_from_slice(&z.im.to_le_bytes());
    }
    crate::io::write_atomic(path, &buf)
}

fn read_container(path: &Path) -> Result<(Kind, GridSpec, Option<f64>, Vec<Complex64>)> {
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    let mut file = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes)?;
    if bytes.len() < 40 || &bytes[..8] != MAGIC {
        return Err(bad("missing snapshot header"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(8);
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let kind = match bytes[12] {
        0 => Kind::Physical,
        1 => Kind::Spectral,
        _ => return Err(bad("unknown container kind")),
    };
    let d = bytes[13] as usize;
    let has_time = bytes[14] != 0;
    let n = u64_at(16) as usize;
    let half_width = f64_at(24);
    let time = has_time.then(|| f64_at(32));
    let grid = GridSpec::new(d, half_width, n).map_err(|e| bad(&e.to_string()))?;
    let body = &bytes[40..];
    if body.len() != grid.len() * 16 {
        return Err(bad("value block length does not match the grid"));
    }
    let values = body
        .chunks_exact(16)
        .map(|c| {
            Complex64::new(
                f64::from_le_bytes(c[..8].try_into().unwrap()),
                f64::from_le_bytes(c[8..].try_into().unwrap()),
            )
        })
        .collect();
    Ok((kind, grid, time, values))
}

pub(crate) fn write_all(w: &mut impl Write, bytes: &[u8]) -> Result<()> {
    w.write_all(bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn constant_closure() {
        let g = make_grid(2, 1.0, 8).unwrap();
        let c = Complex64::new(0.3, -1.2);
        let f = sample_function(&g, |_| c).unwrap();
        assert!(f.values().iter().all(|&z| z == c));
    }

    #[test]
    fn plane_wave_closure_is_exact() {
        let g = make_grid(1, std::f64::consts::PI, 16).unwrap();
        let f = sample_function(&g, |x| Complex64::from_polar(1.0, 3.0 * x[0])).unwrap();
        for (j, z) in f.values().iter().enumerate() {
            let x = g.coordinate(j);
            assert_eq!(*z, Complex64::from_polar(1.0, 3.0 * x));
        }
    }

    #[test]
    fn non_finite_sample_names_coordinate() {
        let g = make_grid(2, 1.0, 8).unwrap();
        let err = sample_function(&g, |x| {
            if x[0] == 0.0 && x[1] == -1.0 {
                Complex64::new(f64::NAN, 0.0)
            } else {
                Complex64::new(1.0, 0.0)
            }
        })
        .unwrap_err();
        match err {
            Error::NonFiniteSample { coordinate, .. } => assert_eq!(coordinate, vec![0.0, -1.0]),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn index_coordinate_map_round_trips() {
        let g = make_grid(3, 2.0, 8).unwrap();
        let f = sample_function(&g, |x| Complex64::new(x[0] + 10.0 * x[1], x[2])).unwrap();
        for (idx, z) in f.values().iter().enumerate() {
            let x = g.position(idx);
            let back: Vec<usize> = (0..3)
                .map(|a| ((x[a] + g.half_width()) / g.spacing()).round() as usize)
                .collect();
            assert_eq!(g.flatten(&back), idx);
            assert_eq!(*z, Complex64::new(x[0] + 10.0 * x[1], x[2]));
        }
    }

    #[test]
    fn snapshot_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(2, 3.7, 16).unwrap();
        let f = sample_function(&g, |x| Complex64::new((x[0] * 1.3).sin(), x[1].exp() / 7.0))
            .unwrap()
            .with_time(0.1 + 0.2);
        let p = dir.path().join("f.bin");
        f.save(&p).unwrap();
        let back = Field::load(&p).unwrap();
        assert_eq!(back.grid(), f.grid());
        assert_eq!(back.time().unwrap().to_bits(), f.time().unwrap().to_bits());
        for (a, b) in back.values().iter().zip(f.values()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
        assert!(Spectrum::load(&p).is_err());
    }

    #[test]
    fn rejects_truncated_container() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.bin");
        let g = make_grid(1, 1.0, 8).unwrap();
        Field::zeros(g).save(&p).unwrap();
        let mut bytes = std::fs::read(&p).unwrap();
        bytes.truncate(bytes.len() - 3);
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(Field::load(&p), Err(Error::Format { .. })));
    }
}
