//! Free Schrödinger propagation and the Strang split-step integrator for
//! `i∂_t u + Δu = |u|^{q-1} u`.
//!
//! Conventions: the free flow is the multiplier `e^{-i|k|²t}` and the
//! nonlinear substep is the exact pointwise solution `u e^{-i|u|^{q-1}dt}`.

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::GridSpec;
use crate::spectral::{Transform, Workspace};

/// Which equation is integrated. `exponent` is `q` in `|u|^{q-1}u`; with
/// `linear` set the nonlinear term is switched off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EquationSpec {
    pub dimension: usize,
    pub exponent: u32,
    #[serde(default)]
    pub linear: bool,
}

impl EquationSpec {
    pub fn new(dimension: usize, exponent: u32) -> Result<Self> {
        if !(1..=3).contains(&dimension) {
            return Err(Error::Dimension(dimension));
        }
        if exponent < 2 {
            return Err(Error::invalid(format!("nonlinearity exponent {exponent} must be at least 2")));
        }
        Ok(EquationSpec {
            dimension,
            exponent,
            linear: false,
        })
    }

    /// Energy-critical `|u|⁴u` in three dimensions.
    pub fn quintic_3d() -> Self {
        EquationSpec { dimension: 3, exponent: 5, linear: false }
    }

    pub fn cubic_3d() -> Self {
        EquationSpec { dimension: 3, exponent: 3, linear: false }
    }

    pub fn quintic_2d() -> Self {
        EquationSpec { dimension: 2, exponent: 5, linear: false }
    }

    /// The free equation in `d` dimensions.
    pub fn free(dimension: usize) -> Self {
        EquationSpec { dimension, exponent: 3, linear: true }
    }

    pub fn without_nonlinearity(mut self) -> Self {
        self.linear = true;
        self
    }

    /// `q - 1`, the power of `|u|` multiplying `u`.
    pub fn power(&self) -> i32 {
        self.exponent as i32 - 1
    }

    /// Anything other than the three headline models.
    pub fn is_extension(&self) -> bool {
        self.linear
            || !matches!((self.dimension, self.exponent), (3, 5) | (3, 3) | (2, 5))
    }

    /// `q - 1 = 4/d`.
    pub fn is_mass_critical(&self) -> bool {
        self.power() as usize * self.dimension == 4
    }

    /// Time-weight exponent for sup-norm decay: `d/2`.
    pub fn decay_exponent(&self) -> f64 {
        self.dimension as f64 / 2.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_cadence: u64,
    pub dealiasing: bool,
}

impl SolverConfig {
    pub fn new(dt: f64, t_end: f64, snapshot_cadence: u64) -> Self {
        SolverConfig {
            dt,
            t_end,
            snapshot_cadence,
            dealiasing: false,
        }
    }

    /// Number of steps; fails unless `dt · steps` reproduces `t_end`.
    pub fn steps(&self) -> Result<u64> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(Error::invalid(format!("t_end must be positive, got {}", self.t_end)));
        }
        if self.snapshot_cadence == 0 {
            return Err(Error::invalid("snapshot cadence must be at least 1"));
        }
        let steps = (self.t_end / self.dt).round();
        if steps < 1.0 || (steps * self.dt - self.t_end).abs() > 1e-12 * self.t_end.max(1.0) {
            return Err(Error::invalid(format!(
                "t_end = {} is not a whole number of steps of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(steps as u64)
    }

    /// Steps at which a snapshot is stored: multiples of the cadence plus the
    /// final step.
    pub fn is_snapshot_step(&self, step: u64, total: u64) -> bool {
        step.is_multiple_of(self.snapshot_cadence) || step == total
    }
}

/// Stored solution curve. The first snapshot is the initial datum at `t = 0`;
/// times increase strictly and every snapshot shares the grid.
#[derive(Debug, Clone)]
pub struct TrajectoryHistory {
    equation: EquationSpec,
    grid: GridSpec,
    snapshots: Vec<Field>,
}

impl TrajectoryHistory {
    pub fn new(equation: EquationSpec, initial: Field) -> Result<Self> {
        if initial.grid().dimension() != equation.dimension {
            return Err(Error::invalid("equation and grid dimensions differ"));
        }
        let grid = *initial.grid();
        let initial = initial.with_time(0.0);
        Ok(TrajectoryHistory {
            equation,
            grid,
            snapshots: vec![initial],
        })
    }

    pub fn push(&mut self, snapshot: Field) -> Result<()> {
        let t = snapshot
            .time()
            .ok_or_else(|| Error::invalid("snapshot without a time stamp"))?;
        if *snapshot.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let last = self.end_time();
        if !(t > last) {
            return Err(Error::invalid(format!("snapshot time {t} does not follow {last}")));
        }
        self.snapshots.push(snapshot);
        Ok(())
    }

    pub fn equation(&self) -> &EquationSpec {
        &self.equation
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn snapshots(&self) -> &[Field] {
        &self.snapshots
    }

    pub fn initial_datum(&self) -> &Field {
        &self.snapshots[0]
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.snapshots[i].time().expect("snapshots carry times")
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.time(i)).collect()
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// Index of the snapshot at time `t`, matched to a relative tolerance of
    /// `1e-9` of the local snapshot spacing.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let times = self.times();
        let spacing = if times.len() > 1 {
            times[1] - times[0]
        } else {
            1.0
        };
        let tol = 1e-9 * spacing.abs().max(f64::MIN_POSITIVE);
        let i = times.partition_point(|&s| s < t - tol);
        (i < times.len() && (times[i] - t).abs() <= tol).then_some(i)
    }

    /// Keeps every `k`-th snapshot (and the last one).
    pub fn thinned(&self, k: usize) -> TrajectoryHistory {
        let last = self.len() - 1;
        let snapshots = self
            .snapshots
            .iter()
            .enumerate()
            .filter(|(i, _)| i % k == 0 || *i == last)
            .map(|(_, f)| f.clone())
            .collect();
        TrajectoryHistory {
            equation: self.equation,
            grid: self.grid,
            snapshots,
        }
    }

    /// Writes `manifest.json` plus one snapshot file per stored time.
    pub fn save_dir(&self, dir: impl AsRef<Path>, meta: serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (i, snap) in self.snapshots.iter().enumerate() {
            snap.save(dir.join(snapshot_file_name(i)))?;
        }
        self.write_manifest(dir, meta)
    }

    /// Writes only `manifest.json`, for snapshots already saved under
    /// [`snapshot_file_name`].
    pub fn write_manifest(&self, dir: impl AsRef<Path>, meta: serde_json::Value) -> Result<()> {
        let entries: Vec<serde_json::Value> = self
            .snapshots
            .iter()
            .enumerate()
            .map(|(i, snap)| serde_json::json!({ "time": snap.time(), "file": snapshot_file_name(i) }))
            .collect();
        let manifest = serde_json::json!({
            "format": "nlsdecay-history",
            "version": 1,
            "equation": self.equation,
            "grid": self.grid,
            "meta": meta,
            "snapshots": entries,
        });
        crate::io::write_atomic(
            &dir.as_ref().join("manifest.json"),
            serde_json::to_string_pretty(&manifest)?.as_bytes(),
        )
    }

    pub fn load_dir(dir: impl AsRef<Path>) -> Result<TrajectoryHistory> {
        let dir = dir.as_ref();
        let path = dir.join("manifest.json");
        let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(&path)?)?;
        let bad = |reason: &str| Error::Format {
            path: path.clone(),
            reason: reason.to_string(),
        };
        if manifest["format"] != "nlsdecay-history" {
            return Err(bad("not a history manifest"));
        }
        let equation: EquationSpec = serde_json::from_value(manifest["equation"].clone())?;
        let grid: GridSpec = serde_json::from_value(manifest["grid"].clone())?;
        let entries = manifest["snapshots"]
            .as_array()
            .ok_or_else(|| bad("missing snapshot list"))?;
        let mut history: Option<TrajectoryHistory> = None;
        for e in entries {
            let file = e["file"].as_str().ok_or_else(|| bad("snapshot entry without file"))?;
            let snap = Field::load(dir.join(file))?;
            if *snap.grid() != grid {
                return Err(bad("snapshot grid differs from manifest"));
            }
            match history.as_mut() {
                None => history = Some(TrajectoryHistory::new(equation, snap)?),
                Some(h) => h.push(snap)?,
            }
        }
        history.ok_or_else(|| bad("history without snapshots"))
    }
}

/// File name of the `i`-th snapshot inside a history directory.
pub fn snapshot_file_name(i: usize) -> String {
    format!("snap_{i:06}.bin")
}

/// `e^{itΔ} f`: multiplies the spectrum by `e^{-i|k|²t}`.
pub fn linear_propagate(f: &Field, t: f64) -> Field {
    if t == 0.0 {
        return f.clone();
    }
    let grid = *f.grid();
    let transform = Transform::new(&grid);
    let mut work = Workspace::default();
    let mut values = f.values().to_vec();
    transform.forward_raw(&mut values, &mut work);
    let scale = 1.0 / grid.len() as f64;
    for (z, &k2) in values.iter_mut().zip(grid.lattice().k_squared()) {
        *z *= Complex64::from_polar(scale, -k2 * t);
    }
    transform.inverse_raw(&mut values, &mut work);
    Field::from_parts(grid, values, f.time().map(|s| s + t))
}

fn phase_in_place(values: &mut [Complex64], power: i32, dt: f64) {
    let half = power / 2;
    let odd = power % 2 != 0;
    for z in values.iter_mut() {
        let m2 = z.norm_sqr();
        let mut amp = m2.powi(half);
        if odd {
            amp *= m2.sqrt();
        }
        *z *= Complex64::from_polar(1.0, -amp * dt);
    }
}

/// Exact flow of `i∂_t u = |u|^{q-1}u` over `dt`.
pub fn nonlinear_phase_step(f: &Field, dt: f64, eq: &EquationSpec) -> Field {
    let mut out = f.clone();
    if !eq.linear && dt != 0.0 {
        phase_in_place(out.values_mut(), eq.power(), dt);
    }
    out
}

/// One Strang step: half free flow, full nonlinear phase, half free flow.
pub fn strang_step(f: &Field, dt: f64, eq: &EquationSpec) -> Field {
    let mut integ = Integrator::new(f, *eq, dt, false);
    integ.advance();
    let mut out = integ.field();
    out.set_time(f.time().map(|t| t + dt));
    out
}

/// `2/3`-rule mask: keeps modes with every `|k_a| ≤ (2/3) k_max`.
pub fn dealias_mask(grid: &GridSpec) -> Vec<bool> {
    let lat = grid.lattice();
    let cut = 2.0 / 3.0 * grid.max_wavenumber();
    (0..grid.len())
        .map(|idx| {
            let k = lat.wavevector(idx);
            k[..grid.dimension()].iter().all(|v| v.abs() <= cut)
        })
        .collect()
}

/// Split-step integrator that keeps its state as raw (unnormalized) DFT
/// coefficients. `t_n = n·dt`; steps are reproducible bit for bit, so a
/// saved `(step, state)` pair resumes exactly.
///
/// With dealiasing on, only the nonlinear increment of each step is
/// projected onto the `2/3` band; this removes aliasing but makes the mass
/// conservation inexact.
pub struct Integrator {
    grid: GridSpec,
    equation: EquationSpec,
    dt: f64,
    transform: Transform,
    work: Workspace,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    mask: Option<Vec<bool>>,
    state: Vec<Complex64>,
    buffer: Vec<Complex64>,
    step: u64,
}

impl Integrator {
    pub fn new(u0: &Field, equation: EquationSpec, dt: f64, dealiasing: bool) -> Self {
        let grid = *u0.grid();
        let transform = Transform::new(&grid);
        let mut work = Workspace::default();
        let mut state = u0.values().to_vec();
        transform.forward_raw(&mut state, &mut work);
        Self::assemble(grid, equation, dt, dealiasing, 0, state, transform, work)
    }

    /// Rebuilds an integrator from a saved raw state.
    pub fn from_state(
        grid: GridSpec,
        equation: EquationSpec,
        dt: f64,
        dealiasing: bool,
        step: u64,
        state: Vec<Complex64>,
    ) -> Result<Self> {
        if state.len() != grid.len() {
            return Err(Error::invalid("saved state does not match the grid"));
        }
        let transform = Transform::new(&grid);
        Ok(Self::assemble(grid, equation, dt, dealiasing, step, state, transform, Workspace::default()))
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        grid: GridSpec,
        equation: EquationSpec,
        dt: f64,
        dealiasing: bool,
        step: u64,
        state: Vec<Complex64>,
        transform: Transform,
        work: Workspace,
    ) -> Self {
        let scale = 1.0 / grid.len() as f64;
        let lat = grid.lattice();
        let post: Vec<Complex64> = lat
            .k_squared()
            .iter()
            .map(|&k2| Complex64::from_polar(1.0, -k2 * dt / 2.0))
            .collect();
        let pre = post.iter().map(|z| z * scale).collect();
        let mask = (dealiasing && !equation.linear).then(|| dealias_mask(&grid));
        Integrator {
            grid,
            equation,
            dt,
            transform,
            work,
            pre,
            post,
            mask,
            buffer: vec![Complex64::default(); state.len()],
            state,
            step,
        }
    }

    pub fn step_index(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn raw_state(&self) -> &[Complex64] {
        &self.state
    }

    /// Current solution `u(t_n)`.
    pub fn field(&self) -> Field {
        let mut values = self.state.clone();
        let mut work = Workspace::default();
        self.transform.inverse_raw(&mut values, &mut work);
        let scale = 1.0 / self.grid.len() as f64;
        values.iter_mut().for_each(|z| *z *= scale);
        Field::from_parts(self.grid, values, Some(self.time()))
    }

    /// Advances one step without checking finiteness.
    pub fn advance(&mut self) {
        for (z, w) in self.state.iter_mut().zip(&self.pre) {
            *z *= w;
        }
        if self.equation.linear {
            // two half multipliers and the 1/N were applied; undo the 1/N
            let n = self.grid.len() as f64;
            for (z, w) in self.state.iter_mut().zip(&self.post) {
                *z *= w * n;
            }
            self.step += 1;
            return;
        }
        self.buffer.copy_from_slice(&self.state);
        self.transform.inverse_raw(&mut self.buffer, &mut self.work);
        phase_in_place(&mut self.buffer, self.equation.power(), self.dt);
        self.transform.forward_raw(&mut self.buffer, &mut self.work);
        match &self.mask {
            None => std::mem::swap(&mut self.state, &mut self.buffer),
            Some(mask) => {
                let n = self.grid.len() as f64;
                for ((s, b), &keep) in self.state.iter_mut().zip(&self.buffer).zip(mask) {
                    let before = *s * n;
                    *s = if keep { *b } else { before };
                }
            }
        }
        for (z, w) in self.state.iter_mut().zip(&self.post) {
            *z *= w;
        }
        self.step += 1;
    }

    /// Advances one step and reports a non-finite state.
    pub fn try_advance(&mut self) -> Result<()> {
        self.advance();
        if self.state.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::NonFiniteState {
                step: self.step,
                time: self.time(),
                last_good: Box::new(Field::zeros(self.grid)),
            });
        }
        Ok(())
    }
}

/// Callback invoked with `(t, u(t))` at every stored snapshot.
pub type Observer<'a> = &'a mut dyn FnMut(f64, &Field);

/// Integrates from `u0` to `cfg.t_end`, storing snapshots at the cadence.
/// Each observer sees `(t, u(t))` at every stored snapshot, starting with
/// the initial datum.
///
/// A non-finite state aborts with [`Error::NonFiniteState`] carrying the
/// step index and the last stored snapshot.
pub fn evolve(
    u0: &Field,
    eq: &EquationSpec,
    cfg: &SolverConfig,
    observers: &mut [Observer<'_>],
) -> Result<TrajectoryHistory> {
    let total = cfg.steps()?;
    if !u0.is_finite() {
        return Err(Error::invalid("initial datum is not finite"));
    }
    let mut history = TrajectoryHistory::new(*eq, u0.clone())?;
    for obs in observers.iter_mut() {
        obs(0.0, history.initial_datum());
    }
    let mut integ = Integrator::new(u0, *eq, cfg.dt, cfg.dealiasing);
    for _ in 0..total {
        if let Err(Error::NonFiniteState { step, time, .. }) = integ.try_advance() {
            let last = history.snapshots().last().cloned().expect("history is never empty");
            return Err(Error::NonFiniteState {
                step,
                time,
                last_good: Box::new(last),
            });
        }
        let step = integ.step_index();
        if cfg.is_snapshot_step(step, total) {
            let u = integ.field();
            for obs in observers.iter_mut() {
                obs(u.time().unwrap_or_default(), &u);
            }
            history.push(u)?;
        }
    }
    Ok(history)
}

/// Time range over which whole-space sup-norm diagnostics can be trusted on
/// the periodic box, for data of width `sigma`.
///
/// `few = sqrt(2 ln(1/tol))` widths hold the datum up to `tol`; its spectral
/// content reaches `K = min(few/σ, k_max)`; the fastest part travels at `2K`
/// and reaches the box edge at `(ℓ - few·σ)/(2K)`.
pub fn validity_window(grid: &GridSpec, sigma: f64, tol: f64) -> f64 {
    let few = (2.0 * (1.0 / tol).ln()).sqrt();
    let k = (few / sigma).min(grid.max_wavenumber());
    ((grid.half_width() - few * sigma) / (2.0 * k)).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::sample_function;
    use crate::grid::make_grid;
    use std::f64::consts::PI;

    fn gaussian(grid: &GridSpec, amp: f64, sigma: f64) -> Field {
        sample_function(grid, |x| {
            let r2: f64 = x.iter().map(|v| v * v).sum();
            Complex64::new(amp * (-r2 / (2.0 * sigma * sigma)).exp(), 0.0)
        })
        .unwrap()
    }

    fn l2(f: &Field) -> f64 {
        (f.values().iter().map(|z| z.norm_sqr()).sum::<f64>() * f.grid().volume_element()).sqrt()
    }

    fn rel_diff(a: &Field, b: &Field) -> f64 {
        l2(&a.sub(b).unwrap()) / l2(b)
    }

    #[test]
    fn zero_time_is_identity() {
        let g = make_grid(2, 10.0, 32).unwrap();
        let f = gaussian(&g, 1.0, 1.5);
        assert_eq!(linear_propagate(&f, 0.0), f);
    }

    #[test]
    fn plane_wave_is_eigenfunction() {
        let g = make_grid(2, PI, 16).unwrap();
        let k = [2.0, -3.0];
        let f = sample_function(&g, |x| Complex64::from_polar(1.0, k[0] * x[0] + k[1] * x[1])).unwrap();
        let t = 0.37;
        let u = linear_propagate(&f, t);
        let phase = Complex64::from_polar(1.0, -(k[0] * k[0] + k[1] * k[1]) * t);
        for (a, b) in u.values().iter().zip(f.values()) {
            assert!((a - b * phase).norm() < 1e-12);
        }
    }

    #[test]
    fn group_property_and_unitarity() {
        let g = make_grid(3, 8.0, 16).unwrap();
        let f = gaussian(&g, 1.0, 1.3);
        let a = linear_propagate(&linear_propagate(&f, 0.4), -1.1);
        let b = linear_propagate(&f, -0.7);
        assert!(rel_diff(&a, &b) < 1e-11);
        assert!((l2(&b) - l2(&f)).abs() / l2(&f) < 1e-12);
    }

    #[test]
    fn phase_step_properties() {
        let g = make_grid(1, 5.0, 32).unwrap();
        let eq = EquationSpec::new(1, 5).unwrap();
        let f = gaussian(&g, 0.8, 1.0);
        assert_eq!(nonlinear_phase_step(&f, 0.0, &eq), f);
        let out = nonlinear_phase_step(&f, 0.3, &eq);
        for (a, b) in out.values().iter().zip(f.values()) {
            assert!((a.norm() - b.norm()).abs() <= 1e-15);
        }
        let c = Complex64::new(0.6, -0.3);
        let cf = nonlinear_phase_step(&Field::constant(g, c), 0.25, &eq);
        let expect = c * Complex64::from_polar(1.0, -c.norm().powi(4) * 0.25);
        assert!((cf.values()[5] - expect).norm() < 1e-15);
        let cubic = EquationSpec::new(1, 3).unwrap();
        let cf = nonlinear_phase_step(&Field::constant(g, c), 0.25, &cubic);
        let expect = c * Complex64::from_polar(1.0, -c.norm().powi(2) * 0.25);
        assert!((cf.values()[0] - expect).norm() < 1e-15);
    }

    #[test]
    fn strang_zero_and_linear_limit() {
        let g = make_grid(2, 10.0, 32).unwrap();
        let eq = EquationSpec::quintic_2d();
        let z = strang_step(&Field::zeros(g), 0.01, &eq);
        assert!(z.values().iter().all(|v| v.norm() == 0.0));
        let tiny = gaussian(&g, 1e-6, 1.5);
        let a = strang_step(&tiny, 0.01, &eq);
        let b = linear_propagate(&tiny, 0.01);
        assert!(rel_diff(&a, &b) < 1e-10);
    }

    #[test]
    fn strang_is_second_order() {
        // one step of dt against two of dt/2, at dt and dt/2: error ratio ≈ 4
        // for the global (accumulated over a fixed interval) error.
        let g = make_grid(1, 10.0, 64).unwrap();
        let eq = EquationSpec::new(1, 3).unwrap();
        let u0 = gaussian(&g, 1.5, 1.2);
        let run = |dt: f64, t: f64| {
            let mut integ = Integrator::new(&u0, eq, dt, false);
            for _ in 0..(t / dt).round() as u64 {
                integ.advance();
            }
            integ.field()
        };
        let t = 0.4;
        let reference = run(0.4 / 1024.0, t);
        let e1 = rel_diff(&run(0.02, t), &reference);
        let e2 = rel_diff(&run(0.01, t), &reference);
        let ratio = e1 / e2;
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn mass_conserved_and_time_reversible() {
        let g = make_grid(2, 12.0, 64).unwrap();
        let eq = EquationSpec::quintic_2d();
        let u0 = gaussian(&g, 1.0, 1.5);
        let m0 = l2(&u0);
        let mut fwd = Integrator::new(&u0, eq, 1e-3, false);
        for _ in 0..500 {
            fwd.advance();
        }
        let u = fwd.field();
        assert!((l2(&u) - m0).abs() / m0 < 1e-10);
        let mut back = Integrator::new(&u, eq, -1e-3, false);
        for _ in 0..500 {
            back.advance();
        }
        assert!(rel_diff(&back.field(), &u0) < 1e-6);
    }

    #[test]
    fn linear_evolution_matches_propagator() {
        let g = make_grid(2, 12.0, 32).unwrap();
        let eq = EquationSpec::free(2);
        let u0 = gaussian(&g, 1.0, 1.5);
        let cfg = SolverConfig::new(1e-2, 0.5, 10);
        let hist = evolve(&u0, &eq, &cfg, &mut []).unwrap();
        assert_eq!(hist.len(), 6);
        for snap in hist.snapshots() {
            let exact = linear_propagate(&u0, snap.time().unwrap());
            assert!(rel_diff(snap, &exact) < 1e-10);
        }
    }

    #[test]
    fn evolve_invokes_observers_at_snapshots() {
        let g = make_grid(1, 6.0, 16).unwrap();
        let u0 = gaussian(&g, 0.5, 1.0);
        let cfg = SolverConfig::new(0.1, 1.0, 3);
        let mut seen = Vec::new();
        let mut obs = |t: f64, _: &Field| seen.push(t);
        let hist = evolve(&u0, &EquationSpec::new(1, 3).unwrap(), &cfg, &mut [&mut obs]).unwrap();
        // cadence 3 over 10 steps: 0, 3, 6, 9 and the forced final step
        let times = hist.times();
        assert_eq!(times.len(), 5);
        assert_eq!(seen, times);
        assert!((times[4] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn solver_config_validation() {
        assert_eq!(SolverConfig::new(1e-3, 12.0, 10).steps().unwrap(), 12000);
        assert!(SolverConfig::new(0.3, 1.0, 1).steps().is_err());
        assert!(SolverConfig::new(-0.1, 1.0, 1).steps().is_err());
        assert!(SolverConfig::new(0.1, 1.0, 0).steps().is_err());
    }

    #[test]
    fn non_finite_state_aborts_with_last_snapshot() {
        let g = make_grid(1, 6.0, 16).unwrap();
        let eq = EquationSpec::new(1, 5).unwrap();
        let mut u0 = gaussian(&g, 1.0, 1.0);
        u0.values_mut()[3] = Complex64::new(1e300, 0.0);
        let cfg = SolverConfig::new(0.1, 1.0, 1);
        match evolve(&u0, &eq, &cfg, &mut []) {
            Err(Error::NonFiniteState { step, last_good, .. }) => {
                assert!(step >= 1);
                assert!(last_good.is_finite());
            }
            other => panic!("expected failure, got {other:?}"),
        }
    }

    #[test]
    fn dealiasing_projects_only_the_increment() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let eq = EquationSpec::new(1, 5).unwrap();
        let tiny = gaussian(&g, 1e-4, 1.0);
        let mut on = Integrator::new(&tiny, eq, 1e-2, true);
        let mut off = Integrator::new(&tiny, eq, 1e-2, false);
        on.advance();
        off.advance();
        assert!(rel_diff(&on.field(), &off.field()) < 1e-12);
    }

    #[test]
    fn history_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = make_grid(2, 6.0, 16).unwrap();
        let u0 = gaussian(&g, 0.5, 1.0);
        let hist = evolve(&u0, &EquationSpec::quintic_2d(), &SolverConfig::new(0.05, 0.2, 2), &mut []).unwrap();
        hist.save_dir(dir.path(), serde_json::json!({"note": "test"})).unwrap();
        let back = TrajectoryHistory::load_dir(dir.path()).unwrap();
        assert_eq!(back.times(), hist.times());
        assert_eq!(back.snapshots(), hist.snapshots());
        assert_eq!(back.equation(), hist.equation());
    }

    #[test]
    fn history_rejects_out_of_order_and_foreign_grids() {
        let g = make_grid(1, 6.0, 16).unwrap();
        let mut h = TrajectoryHistory::new(EquationSpec::free(1), Field::zeros(g)).unwrap();
        h.push(Field::zeros(g).with_time(0.5)).unwrap();
        assert!(h.push(Field::zeros(g).with_time(0.5)).is_err());
        let other = make_grid(1, 7.0, 16).unwrap();
        assert!(matches!(h.push(Field::zeros(other).with_time(1.0)), Err(Error::GridMismatch)));
        assert_eq!(h.index_of(0.5), Some(1));
        assert_eq!(h.index_of(0.25), None);
    }

    #[test]
    fn validity_window_formula() {
        let g = make_grid(2, 32.0 * PI, 256).unwrap();
        let few = (2.0 * 1e3f64.ln()).sqrt();
        let w = validity_window(&g, 1.0, 1e-3);
        assert!((w - (32.0 * PI - few) / (2.0 * few)).abs() < 1e-12);
        // spectral content capped by the grid
        let g3 = make_grid(3, 16.0 * PI, 64).unwrap();
        let w3 = validity_window(&g3, 1.5, 1e-3);
        assert!((w3 - (16.0 * PI - 1.5 * few) / 4.0).abs() < 1e-12);
    }
}
