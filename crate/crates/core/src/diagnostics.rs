//! Time series of decay diagnostics: the weighted sup-norm trace with its
//! running maximum `A(τ) = sup_{s≤τ} s^{d/2} ‖u(s)‖_∞`, Strichartz space-time
//! accumulators, and log-log decay fits.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::field::Field;
use crate::norms;
use crate::propagate::{EquationSpec, TrajectoryHistory};

/// What [`DecayTrace::update`] measures besides the sup norm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSettings {
    pub dimension: usize,
    pub equation: Option<EquationSpec>,
    pub sobolev_order: Option<f64>,
    pub strichartz_r: Option<f64>,
    /// Spectral upsampling factor for the sup norm (1 = raw samples).
    pub sup_upsample: usize,
}

impl TraceSettings {
    pub fn sup_only(dimension: usize) -> Self {
        TraceSettings {
            dimension,
            equation: None,
            sobolev_order: None,
            strichartz_r: None,
            sup_upsample: 1,
        }
    }

    pub fn for_equation(eq: &EquationSpec, sobolev_order: f64, strichartz_r: f64) -> Self {
        TraceSettings {
            dimension: eq.dimension,
            equation: Some(*eq),
            sobolev_order: Some(sobolev_order),
            strichartz_r: Some(strichartz_r),
            sup_upsample: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub sup: f64,
    pub weighted: f64,
    pub a: f64,
    pub mass: Option<f64>,
    pub energy: Option<f64>,
    pub hs: Option<f64>,
    pub lr: Option<f64>,
}

pub const CSV_HEADER: &str = "t,sup,weighted,A,mass,energy,Hs,Lr";

#[derive(Debug, Clone, PartialEq)]
pub struct DecayTrace {
    settings: TraceSettings,
    rows: Vec<TraceRow>,
}

impl DecayTrace {
    pub fn new(settings: TraceSettings) -> Self {
        DecayTrace {
            settings,
            rows: Vec::new(),
        }
    }

    pub fn settings(&self) -> &TraceSettings {
        &self.settings
    }

    pub fn rows(&self) -> &[TraceRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Time weight `t^{d/2}`.
    pub fn weight(&self, t: f64) -> f64 {
        t.powf(self.settings.dimension as f64 / 2.0)
    }

    pub fn last_a(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.a)
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::invalid(format!("trace time {t} must be finite and nonnegative")));
        }
        if let Some(last) = self.rows.last() {
            if !(t > last.t) {
                return Err(Error::invalid(format!("trace time {t} does not follow {}", last.t)));
            }
        }
        Ok(())
    }

    /// Appends a row for `u(t)`.
    pub fn update(&mut self, t: f64, f: &Field) -> Result<&TraceRow> {
        self.check_time(t)?;
        let s = &self.settings;
        let sup = if s.sup_upsample > 1 {
            norms::sup_norm_refined(f, s.sup_upsample)?
        } else {
            norms::sup_norm(f)
        };
        let mass = s.equation.map(|_| norms::mass(f));
        let energy = s.equation.map(|eq| norms::energy(f, &eq));
        let hs = s.sobolev_order.map(|o| norms::sobolev_norm(f, o)).transpose()?;
        let lr = s.strichartz_r.map(|r| norms::lp_norm(f, r)).transpose()?;
        self.push(t, sup, mass, energy, hs, lr)
    }

    /// Appends a row from a precomputed sup norm only.
    pub fn push_sup(&mut self, t: f64, sup: f64) -> Result<&TraceRow> {
        self.check_time(t)?;
        self.push(t, sup, None, None, None, None)
    }

    /// Appends a row from norms measured elsewhere (e.g. a checkpoint);
    /// `weighted` and `A` are recomputed.
    pub fn push_measured(
        &mut self,
        t: f64,
        sup: f64,
        mass: Option<f64>,
        energy: Option<f64>,
        hs: Option<f64>,
        lr: Option<f64>,
    ) -> Result<&TraceRow> {
        self.check_time(t)?;
        self.push(t, sup, mass, energy, hs, lr)
    }

    fn push(
        &mut self,
        t: f64,
        sup: f64,
        mass: Option<f64>,
        energy: Option<f64>,
        hs: Option<f64>,
        lr: Option<f64>,
    ) -> Result<&TraceRow> {
        let weighted = self.weight(t) * sup;
        let a = self.last_a().max(weighted);
        self.rows.push(TraceRow {
            t,
            sup,
            weighted,
            a,
            mass,
            energy,
            hs,
            lr,
        });
        Ok(self.rows.last().unwrap())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }

    pub fn sup_norms(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.sup).collect()
    }

    pub fn a_running(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.a).collect()
    }

    /// Largest relative deviation of a column from its first value.
    pub fn max_relative_drift(&self, column: impl Fn(&TraceRow) -> Option<f64>) -> Option<f64> {
        let first = column(self.rows.first()?)?;
        self.rows
            .iter()
            .filter_map(&column)
            .map(|v| ((v - first) / first).abs())
            .reduce(f64::max)
    }

    /// Largest recorded Sobolev norm (the bound `M₁` as measured).
    pub fn max_sobolev(&self) -> Option<f64> {
        self.rows.iter().filter_map(|r| r.hs).reduce(f64::max)
    }

    /// `A` at the last row inside the window.
    pub fn a_at(&self, t: f64) -> Option<f64> {
        self.rows.iter().take_while(|r| r.t <= t).last().map(|r| r.a)
    }

    /// Relative growth of `A` across the final 20% of `window`.
    pub fn a_plateau_change(&self, window: (f64, f64)) -> Option<f64> {
        let (lo, hi) = window;
        let start = hi - 0.2 * (hi - lo);
        let a_end = self.a_at(hi)?;
        let a_start = self.a_at(start)?;
        (a_end > 0.0).then(|| (a_end - a_start) / a_end)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(self.rows.len() * 120);
        out.push_str(CSV_HEADER);
        out.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:e},{:e},{:e},{:e},{},{},{},{}",
                r.t,
                r.sup,
                r.weighted,
                r.a,
                opt(r.mass),
                opt(r.energy),
                opt(r.hs),
                opt(r.lr)
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path.as_ref(), self.to_csv().as_bytes())
    }

    /// Parses the CSV schema written by [`DecayTrace::to_csv`]. The weight
    /// dimension is inferred from the `weighted/sup` column ratio unless given.
    pub fn from_csv(text: &str, dimension: Option<usize>) -> std::result::Result<DecayTrace, String> {
        let mut lines = text.lines();
        let header = lines.next().ok_or("empty trace file")?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        let find = |name: &str| cols.iter().position(|c| *c == name);
        let (ti, si) = match (find("t"), find("sup")) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err("header must contain t and sup columns".into()),
        };
        let wi = find("weighted");
        let optional = [find("mass"), find("energy"), find("Hs"), find("Lr")];
        let mut parsed = Vec::new();
        for (lineno, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let cells: Vec<&str> = line.split(',').map(str::trim).collect();
            if cells.len() != cols.len() {
                return Err(format!("row {} has {} cells, header has {}", lineno + 2, cells.len(), cols.len()));
            }
            let num = |i: usize| -> std::result::Result<f64, String> {
                cells[i]
                    .parse::<f64>()
                    .map_err(|e| format!("row {}: bad number {:?}: {e}", lineno + 2, cells[i]))
            };
            let opt = |i: Option<usize>| -> std::result::Result<Option<f64>, String> {
                match i {
                    Some(i) if !cells[i].is_empty() => num(i).map(Some),
                    _ => Ok(None),
                }
            };
            let t = num(ti)?;
            let sup = num(si)?;
            let weighted = wi.map(num).transpose()?;
            parsed.push((t, sup, weighted, opt(optional[0])?, opt(optional[1])?, opt(optional[2])?, opt(optional[3])?));
        }
        let dimension = match dimension {
            Some(d) => d,
            None => parsed
                .iter()
                .find(|p| p.0 > 1.0 && p.1 > 0.0 && p.2.is_some())
                .map(|p| (2.0 * (p.2.unwrap() / p.1).ln() / p.0.ln()).round() as usize)
                .filter(|d| (1..=3).contains(d))
                .unwrap_or(3),
        };
        let mut trace = DecayTrace::new(TraceSettings::sup_only(dimension));
        for (t, sup, _, mass, energy, hs, lr) in parsed {
            trace.check_time(t).map_err(|e| e.to_string())?;
            trace.push(t, sup, mass, energy, hs, lr).map_err(|e| e.to_string())?;
        }
        Ok(trace)
    }
}

/// Functional form of [`DecayTrace::update`], weighting by `t^{d/2}`.
pub fn update_decay_trace(mut trace: DecayTrace, t: f64, f: &Field, d: usize) -> Result<DecayTrace> {
    if trace.settings.dimension != d {
        return Err(Error::invalid("trace dimension differs from the requested weight"));
    }
    trace.update(t, f)?;
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    pub samples: usize,
    pub window: (f64, f64),
}

/// Least-squares slope of `log ‖u‖_∞` against `log t` over rows with
/// `t ∈ [lo, hi]`.
pub fn fit_decay_exponent(trace: &DecayTrace, window: (f64, f64)) -> Result<DecayFit> {
    let (lo, hi) = window;
    let pts: Vec<(f64, f64)> = trace
        .rows
        .iter()
        .filter(|r| r.t >= lo && r.t <= hi)
        .map(|r| (r.t, r.sup))
        .collect();
    if pts.len() < 8 {
        return Err(Error::EmptyWindow { lo, hi, count: pts.len() });
    }
    if let Some(p) = pts.iter().find(|p| !(p.0 > 0.0 && p.1 > 0.0)) {
        return Err(Error::invalid(format!(
            "log-log fit needs positive times and norms, got t = {}, sup = {}",
            p.0, p.1
        )));
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::invalid("fit window holds a single time"));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| {
            let r = y - intercept - slope * x;
            r * r
        })
        .sum();
    let stderr = (ssr / (n - 2.0) / sxx).sqrt();
    Ok(DecayFit {
        slope,
        stderr,
        intercept,
        samples: pts.len(),
        window,
    })
}

/// Space-time accumulator for `∫ ‖u(t)‖_{L^r}^q dt` by the trapezoid rule over
/// the sample times, with linear interpolation of the integrand at interior
/// endpoints (which keeps the integral additive over partitions).
#[derive(Debug, Clone, PartialEq)]
pub struct StrichartzMeter {
    pub q: f64,
    pub r: f64,
    times: Vec<f64>,
    integrand: Vec<f64>,
}

impl StrichartzMeter {
    pub fn new(q: f64, r: f64) -> Self {
        StrichartzMeter {
            q,
            r,
            times: Vec::new(),
            integrand: Vec::new(),
        }
    }

    /// Records `‖u(t)‖_{L^r}` at time `t`.
    pub fn record(&mut self, t: f64, lr_norm: f64) -> Result<()> {
        if let Some(&last) = self.times.last() {
            if !(t > last) {
                return Err(Error::invalid(format!("meter time {t} does not follow {last}")));
            }
        }
        self.times.push(t);
        self.integrand.push(lr_norm.powf(self.q));
        Ok(())
    }

    pub fn from_history(history: &TrajectoryHistory, q: f64, r: f64) -> Result<Self> {
        let mut m = StrichartzMeter::new(q, r);
        for snap in history.snapshots() {
            m.record(snap.time().unwrap_or_default(), norms::lp_norm(snap, r)?)?;
        }
        Ok(m)
    }

    /// Builds a meter from the `Lr` column of a trace.
    pub fn from_trace(trace: &DecayTrace, q: f64) -> Result<Self> {
        let r = trace
            .settings()
            .strichartz_r
            .ok_or_else(|| Error::invalid("trace carries no L^r column"))?;
        let mut m = StrichartzMeter::new(q, r);
        for row in trace.rows() {
            let lr = row.lr.ok_or_else(|| Error::invalid("trace row without L^r value"))?;
            m.record(row.t, lr)?;
        }
        Ok(m)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn end_time(&self) -> Option<f64> {
        self.times.last().copied()
    }

    fn value_at(&self, i: usize, t: f64) -> f64 {
        // linear interpolation inside interval [times[i], times[i+1]]
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let th = (t - t0) / (t1 - t0);
        self.integrand[i] + th * (self.integrand[i + 1] - self.integrand[i])
    }

    /// `∫_a^b ‖u‖_r^q dt` for `a ≤ b` inside the recorded range.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if self.times.len() < 2 {
            return Err(Error::InsufficientSnapshots("a meter needs at least two samples".into()));
        }
        let (first, last) = (self.times[0], *self.times.last().unwrap());
        if !(a >= first && b <= last && a <= b) {
            return Err(Error::OutsideHistory {
                time: if a < first { a } else { b },
                start: first,
                end: last,
            });
        }
        let mut total = 0.0;
        for i in 0..self.times.len() - 1 {
            let (t0, t1) = (self.times[i], self.times[i + 1]);
            let lo = a.max(t0);
            let hi = b.min(t1);
            if hi <= lo {
                continue;
            }
            let g0 = if lo == t0 { self.integrand[i] } else { self.value_at(i, lo) };
            let g1 = if hi == t1 { self.integrand[i + 1] } else { self.value_at(i, hi) };
            total += 0.5 * (hi - lo) * (g0 + g1);
        }
        Ok(total)
    }

    /// `(∫_start^{T} ‖u‖_r^q dt)^{1/q}` with `T` the last recorded time.
    pub fn tail(&self, start: f64) -> Result<f64> {
        let end = self
            .end_time()
            .ok_or_else(|| Error::InsufficientSnapshots("empty meter".into()))?;
        Ok(self.integral(start, end)?.powf(1.0 / self.q))
    }
}

/// Strichartz tail `(∫_start^{t_end} ‖u‖_r^q dt)^{1/q}` of a stored run.
pub fn strichartz_tail(history: &TrajectoryHistory, start: f64, q: f64, r: f64) -> Result<f64> {
    StrichartzMeter::from_history(history, q, r)?.tail(start)
}
