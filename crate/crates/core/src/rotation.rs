//! Rotation numbers of random circle maps.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{rng_for, Family, RandomMap, RandomMap1D};
use crate::quad::{CompensatedSum, GaussLegendre};
use crate::spectral::{eigen, stationary_densities};
use crate::stationary::minimal_invariant_sets;
use crate::transfer::{build_ulam, Grid, DEFAULT_QUADRATURE};
use crate::Real;

const BATCHES: usize = 32;
const EIGEN_K: usize = 4;
const EIGEN_TOL: f64 = 1e-10;

/// Rotation number at one parameter value by both methods.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationEstimate<T> {
    pub a: T,
    pub rho_mc: T,
    /// Batch-means standard error of `rho_mc`.
    pub rho_mc_se: T,
    pub rho_spectral: T,
    pub n_iter: usize,
    /// `|rho_mc - rho_spectral|`.
    pub discrepancy: T,
    /// Every minimal invariant set misses part of the circle, so lifts stay bounded and `ρ = 0`.
    pub locked: bool,
}

/// Monte Carlo rotation number `(Fⁿ(x0) - x0) / n` with its batch-means standard error.
pub fn rotation_mc<T: Real, M: RandomMap<T>>(map: &M, x0: T, n: usize, seed: u64) -> Result<(T, T)> {
    let space = map.space();
    if !space.is_circle() {
        return Err(Error::precondition("rotation numbers need a circle map"));
    }
    if n < 10_000 {
        return Err(Error::precondition("n must be at least 1e4"));
    }
    let noise = map.noise();
    let mut rng = rng_for(seed, 0);
    let mut x = space.wrap(x0);
    let mut total = CompensatedSum::new();
    let per = n / BATCHES;
    let mut batch = Vec::with_capacity(BATCHES);
    for b in 0..BATCHES {
        let len = if b == BATCHES - 1 { n - per * (BATCHES - 1) } else { per };
        let mut s = CompensatedSum::new();
        for _ in 0..len {
            let y = map.lift(x, noise.sample(&mut rng));
            let d = y - x;
            s.add(d);
            x = space.wrap(y);
        }
        total.add(s.value());
        batch.push(s.value() / T::from_usize_lossy(len));
    }
    let rho = total.value() / T::from_usize_lossy(n);
    let bm = T::from_usize_lossy(BATCHES);
    let mean = batch.iter().copied().sum::<T>() / bm;
    let var = batch.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / (bm - T::one());
    Ok((rho, (var / bm).sqrt()))
}

/// Cell averages of the mean one-step lift displacement `E δ(x; ·)`.
///
/// The standard circle uses the closed form `a + σ Eω + (ε/2π) sin 2πx`
/// integrated exactly over each cell; other maps use Gauss–Legendre in `x`
/// and the 33-point rule in `ω`.
pub fn mean_displacement_cells<T: Real>(map: &RandomMap1D<T>, grid: &Grid<T>) -> Vec<T> {
    let h = grid.width();
    match map.family() {
        Family::StandardCircle { a, eps, sigma } => {
            let drift = a + sigma * map.noise().mean::<T>();
            let tau = T::TAU();
            (0..grid.n_cells)
                .map(|i| {
                    let (lo, hi) = grid.cell(i);
                    drift + eps / tau * ((tau * lo).cos() - (tau * hi).cos()) / (tau * h)
                })
                .collect()
        }
        Family::PureNoise { sigma } => vec![sigma * map.noise().mean::<T>(); grid.n_cells],
        _ => {
            let gl = GaussLegendre::<T>::new(4);
            (0..grid.n_cells)
                .map(|i| {
                    let (lo, hi) = grid.cell(i);
                    gl.integrate(lo, hi, |x| map.mean_displacement(x)) / h
                })
                .collect()
        }
    }
}

/// `ρ = ∫ E δ(x; ·) φ(x) dx` for a density given by cell values.
pub fn rotation_from_density<T: Real>(map: &RandomMap1D<T>, grid: &Grid<T>, phi: &[T]) -> Result<T> {
    if phi.len() != grid.n_cells {
        return Err(Error::DimensionMismatch {
            expected: grid.n_cells,
            got: phi.len(),
        });
    }
    let e = mean_displacement_cells(map, grid);
    let h = grid.width();
    let mut s = CompensatedSum::new();
    for (d, p) in e.iter().zip(phi) {
        s.add(*d * *p * h);
    }
    Ok(s.value())
}

/// Rotation number from the Ulam stationary density on `grid`.
///
/// With several stationary densities the first one is used.
pub fn rotation_spectral<T: Real>(map: &RandomMap1D<T>, grid: &Grid<T>) -> Result<T> {
    if !map.space().is_circle() {
        return Err(Error::precondition("rotation numbers need a circle map"));
    }
    let u = build_ulam(map, grid, DEFAULT_QUADRATURE)?;
    let s = eigen(&u, EIGEN_K.min(u.dim()), T::lit(EIGEN_TOL))?;
    let d = stationary_densities(&s)?;
    rotation_from_density(map, grid, &d[0])
}

/// True when no minimal invariant set of the set-valued map covers the circle.
pub fn is_locked<T: Real>(map: &RandomMap1D<T>, grid: &Grid<T>) -> bool {
    minimal_invariant_sets(map, grid)
        .iter()
        .all(|s| s.measure() < T::one() - grid.width() * T::lit(0.5))
}

/// Both estimates at every `a`; sweep points run in parallel with per-point seeds `(seed, index)`.
pub fn rotation_sweep<T: Real>(map: &RandomMap1D<T>, a_values: &[T], grid: &Grid<T>, n_mc: usize, seed: u64) -> Result<Vec<RotationEstimate<T>>> {
    a_values
        .par_iter()
        .enumerate()
        .map(|(k, &a)| {
            let m = map.with_parameter(a);
            m.validate()?;
            let rho_spectral = rotation_spectral(&m, grid)?;
            let (rho_mc, rho_mc_se) = rotation_mc(&m, T::lit(0.5), n_mc, point_seed(seed, k))?;
            Ok(RotationEstimate {
                a,
                rho_mc,
                rho_mc_se,
                rho_spectral,
                n_iter: n_mc,
                discrepancy: (rho_mc - rho_spectral).abs(),
                locked: is_locked(&m, grid),
            })
        })
        .collect()
}

/// Seed of sweep point `k`.
pub fn point_seed(seed: u64, k: usize) -> u64 {
    seed ^ (k as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// Maximal runs of consecutive locked sweep points, as `(first a, last a)`.
pub fn locked_runs<T: Real>(sweep: &[RotationEstimate<T>]) -> Vec<(T, T)> {
    let mut out: Vec<(T, T)> = Vec::new();
    let mut open = false;
    for e in sweep {
        match (e.locked, open) {
            (true, true) => {
                if let Some(last) = out.last_mut() {
                    last.1 = e.a;
                }
            }
            (true, false) => {
                out.push((e.a, e.a));
                open = true;
            }
            (false, _) => open = false,
        }
    }
    out
}
