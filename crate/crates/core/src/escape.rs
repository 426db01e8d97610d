//! Quasi-stationary densities on leaky windows and escape times.

use num_complex::Complex;
use petgraph::algo::kosaraju_scc;
use petgraph::graph::DiGraph;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{eigs, EigOptions};
use crate::model::{rng_for, RandomMap};
use crate::transfer::{build_windowed, Grid, UlamMatrix, DEFAULT_QUADRATURE};
use crate::Real;

/// `alpha` closer than this to 1 marks the window as absorbing.
pub const ABSORBING_TOL: f64 = 1e-12;
/// Subdominant windowed eigenvalues closer than this to `alpha` are noted.
pub const SUBDOMINANT_GAP: f64 = 1e-3;
/// Default censoring cap for Monte Carlo escape times.
pub const DEFAULT_MAX_STEPS: u64 = 10_000_000;

const EIGEN_TOL: f64 = 1e-10;
const EIGEN_K: usize = 4;

/// Quasi-stationary data of a window, optionally with a Monte Carlo estimate.
#[derive(Debug, Clone)]
pub struct EscapeReport<T> {
    /// The window after snapping outward to grid cells.
    pub window: Vec<(T, T)>,
    pub alpha: T,
    /// `1 - alpha`, computed from the leak so that it keeps relative accuracy near 0.
    pub escape_rate: T,
    /// The window contains a closed class of the discretized chain.
    pub absorbing: bool,
    /// Density on the window cells (unit integral), in window-cell order.
    pub qs_density: Vec<T>,
    /// Grid cells of the window, aligned with `qs_density`.
    pub cells: Vec<usize>,
    /// `1 / (1 - alpha)`, infinite for absorbing windows.
    pub expected_escape_spectral: T,
    pub residual: T,
    pub mc_mean: Option<T>,
    pub mc_std_error: Option<T>,
    pub censored: Option<usize>,
    pub notes: Vec<String>,
}

impl<T: Real> EscapeReport<T> {
    pub fn is_absorbing(&self) -> bool {
        self.absorbing
    }
}

/// Start distribution for Monte Carlo escape trials.
#[derive(Debug, Clone, Copy)]
pub enum StartLaw<'a, T> {
    /// Uniform on the window cells.
    Uniform,
    /// Piecewise constant density on the window cells (e.g. the quasi-stationary one).
    Density(&'a [T]),
}

/// Summary of Monte Carlo escape trials.
#[derive(Debug, Clone, PartialEq)]
pub struct EscapeSample<T> {
    /// Mean over uncensored trials.
    pub mean: T,
    pub std_error: T,
    pub trials: usize,
    pub censored: usize,
    /// Escape time of every trial, `None` when censored.
    pub times: Vec<Option<u64>>,
}

impl<T: Real> EscapeSample<T> {
    /// Empirical `P(χ > k)` over all trials (censored trials count as survivors).
    pub fn survival(&self, k: u64) -> T {
        let alive = self.times.iter().filter(|t| t.is_none_or(|t| t > k)).count();
        T::from_usize_lossy(alive) / T::from_usize_lossy(self.trials)
    }

    pub fn censored_fraction(&self) -> T {
        T::from_usize_lossy(self.censored) / T::from_usize_lossy(self.trials)
    }
}

/// One row of an escape-growth table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthRow<T> {
    pub a: T,
    pub offset: T,
    pub alpha: T,
    /// `1 / (1 - alpha)`; infinite when the window is absorbing.
    pub escape_time: T,
    pub absorbing: bool,
}

/// Escape times along `a0 ± offset` and their local log-log slopes.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthTable<T> {
    pub a0: T,
    pub rows: Vec<GrowthRow<T>>,
    /// `-Δlog T / Δlog|a - a0|` between consecutive rows (`None` if either row is absorbing).
    pub slopes: Vec<Option<T>>,
}

impl<T: Real> GrowthTable<T> {
    /// True when every slope exists and their magnitudes strictly increase.
    pub fn slopes_increasing(&self) -> bool {
        let s: Option<Vec<T>> = self.slopes.iter().copied().collect();
        match s {
            Some(s) if !s.is_empty() => s.windows(2).all(|w| w[1].abs() > w[0].abs()),
            _ => false,
        }
    }
}

/// Side of the reference parameter probed by [`escape_growth_probe`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Below,
    Above,
}

/// Leading eigenpair of the windowed Ulam matrix on `window`.
pub fn quasi_stationary<T: Real, M: RandomMap<T>>(map: &M, window: &[(T, T)], grid: &Grid<T>) -> Result<EscapeReport<T>> {
    let m = build_windowed(map, grid, window, DEFAULT_QUADRATURE)?;
    quasi_stationary_of(&m)
}

/// Quasi-stationary eigenpair of an already assembled windowed matrix.
pub fn quasi_stationary_of<T: Real>(m: &UlamMatrix<T>) -> Result<EscapeReport<T>> {
    let n = m.dim();
    if !has_recurrent_cell(m) {
        return Err(Error::precondition(
            "window is transient: every orbit leaves it within a few steps, so there is no quasi-stationary density",
        ));
    }
    let mut opts = EigOptions::new(EIGEN_K.min(n));
    opts.tol = T::lit(EIGEN_TOL);
    let res = eigs(n, |x: &[T], y: &mut [T]| m.mul_transpose(x, y), opts)?;
    // the Perron root is real and maximal among the real eigenvalues
    let lead = res
        .values
        .iter()
        .enumerate()
        .filter(|(_, l)| l.im.abs() <= T::lit(1e-8) * l.norm() && l.re >= T::zero())
        .max_by(|a, b| a.1.re.partial_cmp(&b.1.re).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .ok_or(Error::NoConvergence {
            iterations: res.matvecs,
            residual: f64::NAN,
        })?;
    if !(res.residuals[lead] <= T::lit(EIGEN_TOL)) {
        return Err(Error::NoConvergence {
            iterations: res.matvecs,
            residual: res.residuals[lead].as_f64(),
        });
    }
    let mut phi: Vec<T> = res.vectors[lead].iter().map(|c: &Complex<T>| c.re.max(T::zero())).collect();
    let absorbing = has_closed_class(m);
    let rate = if absorbing {
        T::zero()
    } else {
        let (p, r) = polish(m, phi, T::one() - res.values[lead].re);
        phi = p;
        r
    };
    let alpha = T::one() - rate;
    let h = m.grid.width();
    let total: T = phi.iter().copied().sum::<T>() * h;
    phi.iter_mut().for_each(|v| *v /= total);

    let mut notes = m.notes.clone();
    if absorbing {
        notes.push("window absorbing: it contains a closed class, escape time infinite".to_string());
    } else if rate <= T::lit(ABSORBING_TOL) {
        notes.push(format!("alpha within {ABSORBING_TOL:e} of 1; escape rate {rate:e} resolved from the leak"));
    }
    let gap = T::lit(SUBDOMINANT_GAP);
    let close = res
        .values
        .iter()
        .enumerate()
        .filter(|(i, l)| *i != lead && (alpha - l.norm()).abs() <= gap)
        .count();
    if close > 0 {
        notes.push(format!("{close} subdominant windowed eigenvalues within {SUBDOMINANT_GAP:e} of alpha"));
    }
    let expected = if absorbing { T::infinity() } else { T::one() / rate };
    let cells: Vec<usize> = (0..n).map(|i| m.cell_index(i)).collect();
    let window = cell_runs(&m.grid, &cells);
    Ok(EscapeReport {
        window,
        alpha,
        escape_rate: rate,
        absorbing,
        residual: qs_residual(m, &phi, alpha),
        qs_density: phi,
        cells,
        expected_escape_spectral: expected,
        mc_mean: None,
        mc_std_error: None,
        censored: None,
        notes,
    })
}

/// True when some strongly connected class of the matrix graph neither leaks
/// nor has edges to other classes.
fn has_closed_class<T: Real>(m: &UlamMatrix<T>) -> bool {
    let n = m.dim();
    let (_, sccs) = window_classes(m);
    let mut class = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for v in members {
            class[v.index()] = c;
        }
    }
    sccs.iter().enumerate().any(|(c, members)| {
        members.iter().all(|v| {
            let i = v.index();
            m.leak(i) == T::zero() && m.row(i).all(|(j, w)| w == T::zero() || class[j] == c)
        })
    })
}

/// Graph of the positive off-diagonal entries and its strongly connected classes.
fn window_classes<T: Real>(m: &UlamMatrix<T>) -> (DiGraph<(), ()>, Vec<Vec<petgraph::graph::NodeIndex>>) {
    let n = m.dim();
    let mut g = DiGraph::<(), ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for i in 0..n {
        for (j, v) in m.row(i) {
            if v > T::zero() && j != i {
                g.add_edge(nodes[i], nodes[j], ());
            }
        }
    }
    let sccs = kosaraju_scc(&g);
    (g, sccs)
}

/// True when some cell can return to itself; otherwise the windowed matrix is nilpotent.
fn has_recurrent_cell<T: Real>(m: &UlamMatrix<T>) -> bool {
    let (_, sccs) = window_classes(m);
    sccs.iter().any(|c| c.len() > 1) || (0..m.dim()).any(|i| m.get(i, i) > T::zero())
}

/// Refines a nonnegative quasi-stationary vector by lazy power iteration
/// `φ ← (φ + φM/α) / 2`, which keeps entrywise relative accuracy and damps the
/// peripheral eigenvalues of cyclic windows. Returns the vector (unit sum)
/// and the escape rate `Σ φ_i leak_i`.
fn polish<T: Real>(m: &UlamMatrix<T>, mut phi: Vec<T>, rate0: T) -> (Vec<T>, T) {
    const MAX_ITER: usize = 200_000;
    const CHECK: usize = 25;
    let n = m.dim();
    let leak: Vec<T> = (0..n).map(|i| m.leak(i)).collect();
    let normalize = |v: &mut Vec<T>| {
        let s: T = v.iter().copied().sum();
        v.iter_mut().for_each(|x| *x /= s);
    };
    normalize(&mut phi);
    let mut psi = vec![T::zero(); n];
    let mut rate = rate0.max(T::zero());
    let mut checkpoint = T::infinity();
    for it in 0..MAX_ITER {
        rate = phi.iter().zip(&leak).map(|(p, l)| *p * *l).sum();
        if it % CHECK == 0 {
            if (rate - checkpoint).abs() <= T::lit(1e-12) * rate {
                break;
            }
            checkpoint = rate;
        }
        let alpha = T::one() - rate;
        m.mul_transpose(&phi, &mut psi);
        for (p, q) in phi.iter_mut().zip(&psi) {
            *p = (*p + *q / alpha) * T::lit(0.5);
        }
        normalize(&mut phi);
    }
    (phi, rate)
}

/// `‖φM − αφ‖∞ / ‖φ‖∞` for a density on the window cells.
pub fn qs_residual<T: Real>(m: &UlamMatrix<T>, phi: &[T], alpha: T) -> T {
    let mut y = vec![T::zero(); phi.len()];
    m.mul_transpose(phi, &mut y);
    let top = phi.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    y.iter().zip(phi).fold(T::zero(), |a, (y, p)| a.max((*y - alpha * *p).abs())) / top
}

fn cell_runs<T: Real>(grid: &Grid<T>, cells: &[usize]) -> Vec<(T, T)> {
    let mut out: Vec<(T, T)> = Vec::new();
    let mut prev: Option<usize> = None;
    for &c in cells {
        let (lo, hi) = grid.cell(c);
        match (prev, out.last_mut()) {
            (Some(p), Some(last)) if p + 1 == c => last.1 = hi,
            _ => out.push((lo, hi)),
        }
        prev = Some(c);
    }
    out
}

/// Monte Carlo escape times from the window cells of `m`.
///
/// Trial `i` draws from the stream `(seed, i)`, so results do not depend on
/// the thread count.
pub fn escape_times_mc<T: Real, M: RandomMap<T>>(
    map: &M,
    m: &UlamMatrix<T>,
    start: StartLaw<'_, T>,
    n_trials: usize,
    max_steps: u64,
    seed: u64,
) -> Result<EscapeSample<T>> {
    if n_trials < 100 {
        return Err(Error::precondition("n_trials must be at least 100"));
    }
    if max_steps < 1000 {
        return Err(Error::precondition("max_steps must be at least 1000"));
    }
    if m.window.is_none() {
        return Err(Error::precondition("escape times need a windowed matrix"));
    }
    let n = m.dim();
    let grid = m.grid;
    let weights: Vec<T> = match start {
        StartLaw::Uniform => vec![T::one(); n],
        StartLaw::Density(d) => {
            if d.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: d.len() });
            }
            if d.iter().any(|v| *v < T::zero() || !v.is_finite()) {
                return Err(Error::precondition("start density must be finite and nonnegative"));
            }
            d.to_vec()
        }
    };
    let mut cumulative = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for w in &weights {
        acc += w.as_f64();
        cumulative.push(acc);
    }
    if acc <= 0.0 {
        return Err(Error::precondition("start density has zero mass"));
    }
    let inside = |x: T| -> bool {
        let space = grid.space;
        if !space.contains(x) {
            return false;
        }
        m.local_of(grid.cell_of(x)).is_some()
    };
    let noise = map.noise();
    let times: Vec<Option<u64>> = (0..n_trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = rng_for(seed, trial as u64);
            let u: f64 = rng.gen::<f64>() * acc;
            let k = cumulative.partition_point(|c| *c <= u).min(n - 1);
            let (lo, hi) = grid.cell(m.cell_index(k));
            let mut x = lo + (hi - lo) * T::lit(rng.gen::<f64>());
            for step in 1..=max_steps {
                x = map.eval(x, noise.sample(&mut rng));
                if !inside(x) {
                    return Some(step);
                }
            }
            None
        })
        .collect();
    let done: Vec<f64> = times.iter().filter_map(|t| t.map(|v| v as f64)).collect();
    let censored = n_trials - done.len();
    if done.is_empty() {
        return Err(Error::AllCensored { trials: n_trials });
    }
    let cnt = done.len() as f64;
    let mean = done.iter().sum::<f64>() / cnt;
    let var = if done.len() > 1 {
        done.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / (cnt - 1.0)
    } else {
        0.0
    };
    Ok(EscapeSample {
        mean: T::lit(mean),
        std_error: T::lit((var / cnt).sqrt()),
        trials: n_trials,
        censored,
        times,
    })
}

/// Monte Carlo escape times attached to a quasi-stationary report.
///
/// With `qs_start` the trials start from the quasi-stationary density, which
/// makes the mean directly comparable with `1 / (1 - alpha)`.
pub fn escape_time_mc<T: Real, M: RandomMap<T>>(
    map: &M,
    m: &UlamMatrix<T>,
    report: &mut EscapeReport<T>,
    qs_start: bool,
    n_trials: usize,
    max_steps: u64,
    seed: u64,
) -> Result<()> {
    let start = if qs_start { StartLaw::Density(&report.qs_density) } else { StartLaw::Uniform };
    let s = escape_times_mc(map, m, start, n_trials, max_steps, seed)?;
    if s.censored_fraction() > T::lit(0.01) {
        report
            .notes
            .push(format!("{} of {} escape trials censored at {max_steps} steps", s.censored, s.trials));
    }
    report.mc_mean = Some(s.mean);
    report.mc_std_error = Some(s.std_error);
    report.censored = Some(s.censored);
    Ok(())
}

/// Escape times `1 / (1 - alpha)` at `a0 ∓ offset` for a fixed window.
///
/// A window without recurrent cells at some offset gets `alpha = 0`.
pub fn escape_growth_probe<T: Real, M: RandomMap<T>>(map: &M, a0: T, side: Side, window: &[(T, T)], grid: &Grid<T>, offsets: &[T]) -> Result<GrowthTable<T>> {
    if offsets.is_empty() || offsets.iter().any(|o| !(*o > T::zero())) {
        return Err(Error::precondition("offsets must be positive"));
    }
    if offsets.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::precondition("offsets must be strictly decreasing"));
    }
    let rows: Vec<GrowthRow<T>> = offsets
        .iter()
        .map(|&offset| {
            let a = match side {
                Side::Below => a0 - offset,
                Side::Above => a0 + offset,
            };
            let m = build_windowed(&map.with_parameter(a), grid, window, DEFAULT_QUADRATURE)?;
            if !has_recurrent_cell(&m) {
                // nilpotent windowed matrix: spectral radius 0
                return Ok(GrowthRow {
                    a,
                    offset,
                    alpha: T::zero(),
                    escape_time: T::one(),
                    absorbing: false,
                });
            }
            let r = quasi_stationary_of(&m)?;
            Ok(GrowthRow {
                a,
                offset,
                alpha: r.alpha,
                escape_time: r.expected_escape_spectral,
                absorbing: r.absorbing,
            })
        })
        .collect::<Result<_>>()?;
    let slopes = rows
        .windows(2)
        .map(|w| {
            if w[0].absorbing || w[1].absorbing {
                None
            } else {
                Some(-(w[1].escape_time.ln() - w[0].escape_time.ln()) / (w[1].offset.ln() - w[0].offset.ln()))
            }
        })
        .collect();
    Ok(GrowthTable { a0, rows, slopes })
}
