//! Fixtures shared by the benchmarks.

use nlsdecay_core::{evolve, make_grid, sample_function, Complex64, EquationSpec, Field, SolverConfig, TrajectoryHistory};

/// Gaussian of width 1.5 and amplitude 0.5 on `[-8π, 8π)^d` with `n` points per axis.
pub fn gaussian(d: usize, n: usize) -> Field {
    let grid = make_grid(d, 8.0 * std::f64::consts::PI, n).expect("valid grid");
    sample_function(&grid, |x| {
        let r2: f64 = x.iter().map(|v| v * v).sum();
        Complex64::new(0.5 * (-r2 / 4.5).exp(), 0.0)
    })
    .expect("finite datum")
}

/// Short cubic trajectory with `snapshots` stored states after the datum.
pub fn cubic_history(d: usize, n: usize, snapshots: u64) -> TrajectoryHistory {
    let u0 = gaussian(d, n);
    let cfg = SolverConfig::new(0.01, 0.1 * snapshots as f64, 10);
    evolve(&u0, &EquationSpec::new(d, 3).expect("cubic"), &cfg, &mut []).expect("stable run")
}
