//! Leading spectrum of Ulam matrices: stationary densities, the unit and
//! peripheral clusters, cyclic structure and the correlation decay rate.

use num_complex::Complex;
use rand::Rng;

use crate::linalg::{eigs, spectral_order, EigOptions};
use crate::model::rng_for;
use crate::transfer::{Grid, UlamMatrix};
use crate::{Error, Real, Result};

/// Eigenvalues within this distance of 1 (resp. of the unit circle) form the unit (resp. peripheral) cluster.
pub const TOL_UNIT: f64 = 1e-6;
/// Tolerance for matching peripheral eigenvalues to roots of unity.
pub const ROOT_TOL: f64 = 1e-2;

/// Classification of an eigenvalue in a [`SpectralSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Group {
    Unit,
    Peripheral,
    Interior,
}

impl Group {
    pub fn as_str(&self) -> &'static str {
        match self {
            Group::Unit => "unit",
            Group::Peripheral => "peripheral",
            Group::Interior => "interior",
        }
    }
}

/// Leading eigenpairs of an Ulam matrix acting on densities (`v M = λ v`).
#[derive(Debug, Clone)]
pub struct SpectralSet<T> {
    /// Sorted by decreasing modulus, conjugate pairs adjacent, phases in `[0, 2π)` ascending on ties.
    pub eigenvalues: Vec<Complex<T>>,
    /// Density-side eigenvectors (cell values), unit 2-norm.
    pub eigenvectors: Vec<Vec<Complex<T>>>,
    pub residuals: Vec<T>,
    pub groups: Vec<Group>,
    pub unit_multiplicity: usize,
    /// Largest modulus outside the peripheral cluster (0 if every computed eigenvalue is peripheral).
    pub eta: T,
    pub grid: Grid<T>,
    /// Grid cell of every vector entry.
    pub cells: Vec<usize>,
    pub windowed: bool,
    pub matvecs: usize,
}

impl<T: Real> SpectralSet<T> {
    pub fn peripheral(&self) -> Vec<Complex<T>> {
        self.eigenvalues
            .iter()
            .zip(&self.groups)
            .filter(|(_, g)| **g != Group::Interior)
            .map(|(l, _)| *l)
            .collect()
    }

    /// True when every `p`-th root of unity is within [`ROOT_TOL`] of a computed eigenvalue.
    pub fn contains_roots_of_unity(&self, p: usize) -> bool {
        (0..p).all(|j| {
            let w = Complex::from_polar(T::one(), T::TAU() * T::from_usize_lossy(j) / T::from_usize_lossy(p));
            self.eigenvalues.iter().any(|l| (*l - w).norm() <= T::lit(ROOT_TOL))
        })
    }
}

/// The `k` leading eigenpairs of `M` (density side), residual tolerance `tol`.
pub fn eigen<T: Real>(m: &UlamMatrix<T>, k: usize, tol: T) -> Result<SpectralSet<T>> {
    if k == 0 || k > 32 {
        return Err(Error::precondition("k must be in 1..=32"));
    }
    if !(tol > T::zero() && tol <= T::lit(1e-4)) {
        return Err(Error::precondition("tol must be in (0, 1e-4]"));
    }
    let n = m.dim();
    let mut opts = EigOptions::new(k.min(n));
    opts.tol = tol;
    let res = eigs(n, |x: &[T], y: &mut [T]| m.mul_transpose(x, y), opts)?;
    let scale = T::one();
    if let Some(bad) = res
        .residuals
        .iter()
        .zip(&res.values)
        .map(|(r, l)| *r / scale.max(l.norm()))
        .find(|r| !(*r <= tol))
    {
        return Err(Error::NoConvergence {
            iterations: res.matvecs,
            residual: bad.as_f64(),
        });
    }
    let order = spectral_order(&res.values);
    let eigenvalues: Vec<Complex<T>> = order.iter().map(|&i| res.values[i]).collect();
    let eigenvectors: Vec<Vec<Complex<T>>> = order.iter().map(|&i| res.vectors[i].clone()).collect();
    let residuals: Vec<T> = order.iter().map(|&i| res.residuals[i]).collect();
    let tu = T::lit(TOL_UNIT);
    let groups: Vec<Group> = eigenvalues
        .iter()
        .map(|l| {
            if (*l - Complex::new(T::one(), T::zero())).norm() <= tu {
                Group::Unit
            } else if (l.norm() - T::one()).abs() <= tu {
                Group::Peripheral
            } else {
                Group::Interior
            }
        })
        .collect();
    let unit_multiplicity = groups.iter().filter(|g| **g == Group::Unit).count();
    let eta = eigenvalues
        .iter()
        .zip(&groups)
        .filter(|(_, g)| **g == Group::Interior)
        .map(|(l, _)| l.norm())
        .fold(T::zero(), T::max);
    Ok(SpectralSet {
        eigenvalues,
        eigenvectors,
        residuals,
        groups,
        unit_multiplicity,
        eta,
        grid: m.grid,
        cells: (0..n).map(|i| m.cell_index(i)).collect(),
        windowed: m.window.is_some(),
        matvecs: res.matvecs,
    })
}

/// Predicted exponential rate of decay of correlations.
pub fn decay_rate<T: Real>(s: &SpectralSet<T>) -> T {
    s.eta
}

fn to_density<T: Real>(mut v: Vec<T>, h: T) -> Vec<T> {
    v.iter_mut().for_each(|x| *x = x.max(T::zero()));
    let mass: T = v.iter().copied().sum::<T>() * h;
    if mass > T::zero() {
        v.iter_mut().for_each(|x| *x /= mass);
    }
    v
}

/// Real orthonormal basis of the span of the real and imaginary parts.
fn real_basis<T: Real>(vs: &[&Vec<Complex<T>>]) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::new();
    for v in vs {
        for part in [v.iter().map(|c| c.re).collect::<Vec<T>>(), v.iter().map(|c| c.im).collect()] {
            let mut x = part;
            let before = x.iter().map(|a| *a * *a).sum::<T>().sqrt();
            if before == T::zero() {
                continue;
            }
            for _ in 0..2 {
                for u in &out {
                    let c: T = u.iter().zip(&x).map(|(a, b)| *a * *b).sum();
                    x.iter_mut().zip(u).for_each(|(xi, ui)| *xi -= c * *ui);
                }
            }
            let nx = x.iter().map(|a| *a * *a).sum::<T>().sqrt();
            if nx > T::lit(1e-6) * before {
                x.iter_mut().for_each(|a| *a /= nx);
                out.push(x);
            }
        }
    }
    out
}

/// Ergodic stationary densities (unit integral, pairwise disjoint supports).
///
/// With `m > 1` the unit eigenspace basis is split by support: on the support
/// of each ergodic density every basis vector is a fixed multiple of it, so the
/// ratio of a random combination to `Σ|v_k|` is constant there and the
/// components are read off as clusters of that ratio.
pub fn stationary_densities<T: Real>(s: &SpectralSet<T>) -> Result<Vec<Vec<T>>> {
    if s.windowed {
        return Err(Error::precondition("stationary densities need an unwindowed matrix"));
    }
    let h = s.grid.width();
    let unit: Vec<&Vec<Complex<T>>> = s
        .eigenvectors
        .iter()
        .zip(&s.groups)
        .filter(|(_, g)| **g == Group::Unit)
        .map(|(v, _)| v)
        .collect();
    if unit.is_empty() {
        return Err(Error::precondition("no eigenvalue in the unit cluster"));
    }
    let basis = real_basis(&unit);
    let m = s.unit_multiplicity.min(basis.len()).max(1);
    if m == 1 {
        let mut v = basis[0].clone();
        let sum: T = v.iter().copied().sum();
        let peak = v.iter().copied().fold(T::zero(), |a, b| if b.abs() > a.abs() { b } else { a });
        if sum < T::zero() || (sum == T::zero() && peak < T::zero()) {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        return Ok(vec![to_density(v, h)]);
    }
    let n = basis[0].len();
    let u: Vec<T> = (0..n).map(|i| basis.iter().map(|b| b[i].abs()).sum()).collect();
    let mut rng = rng_for(0xc1a55, 0);
    let coeff: Vec<T> = basis.iter().map(|_| T::lit(rng.gen::<f64>() + 0.5)).collect();
    let mix: Vec<T> = (0..n).map(|i| basis.iter().zip(&coeff).map(|(b, c)| b[i] * *c).sum()).collect();
    let umax = u.iter().copied().fold(T::zero(), T::max);
    let floor = umax * T::lit(1e-7);
    let mut support: Vec<(usize, T)> = (0..n).filter(|&i| u[i] > floor).map(|i| (i, mix[i] / u[i])).collect();
    support.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    // split at the m−1 widest gaps
    let mut gaps: Vec<(T, usize)> = support.windows(2).enumerate().map(|(k, w)| (w[1].1 - w[0].1, k + 1)).collect();
    gaps.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut cuts: Vec<usize> = gaps.iter().take(m - 1).map(|g| g.1).collect();
    cuts.sort_unstable();
    let mut bounds = vec![0];
    bounds.extend(cuts);
    bounds.push(support.len());
    let clusters: Vec<&[(usize, T)]> = bounds.windows(2).map(|w| &support[w[0]..w[1]]).collect();
    if clusters.iter().any(|c| c.is_empty()) {
        return Err(Error::SupportOverlap { fraction: 1.0 });
    }
    // a ratio far from its cluster median means the supports are not separated
    let medians: Vec<T> = clusters.iter().map(|c| c[c.len() / 2].1).collect();
    let min_sep = medians.windows(2).map(|w| w[1] - w[0]).fold(T::infinity(), T::min);
    let ambiguous = clusters
        .iter()
        .zip(&medians)
        .map(|(c, med)| c.iter().filter(|(_, r)| (*r - *med).abs() > min_sep * T::lit(0.25)).count())
        .sum::<usize>();
    let fraction = ambiguous as f64 / support.len() as f64;
    if fraction > 0.01 {
        return Err(Error::SupportOverlap { fraction });
    }
    let mut out: Vec<Vec<T>> = clusters
        .iter()
        .map(|c| {
            let mut v = vec![T::zero(); n];
            for &(i, _) in c.iter() {
                v[i] = u[i];
            }
            to_density(v, h)
        })
        .collect();
    // order by the first cell of each support
    out.sort_by_key(|v| v.iter().position(|x| *x > T::zero()).unwrap_or(usize::MAX));
    Ok(out)
}

/// Cycle structure of one ergodic density.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CycleInfo {
    /// Cycle length `p`.
    pub period: usize,
    /// Cyclic class (`0..p`) of each support component, in component order.
    pub classes: Vec<usize>,
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Cycle length from the component graph of `M`, cross-checked against the peripheral spectrum.
///
/// `components[e]` lists the support components of ergodic density `e` as sets of grid cells.
pub fn cyclic_structure<T: Real>(s: &SpectralSet<T>, m: &UlamMatrix<T>, components: &[Vec<Vec<usize>>]) -> Result<Vec<CycleInfo>> {
    if s.unit_multiplicity == 0 {
        return Err(Error::precondition("no unit eigenvalue"));
    }
    let n_cells = m.grid.n_cells;
    let mut out = Vec::with_capacity(components.len());
    for comps in components {
        let c = comps.len();
        if c == 0 {
            return Err(Error::precondition("empty component list"));
        }
        let mut owner = vec![usize::MAX; n_cells];
        for (k, cells) in comps.iter().enumerate() {
            for &cell in cells {
                owner[cell] = k;
            }
        }
        let mut adj = vec![Vec::<usize>::new(); c];
        let floor = T::lit(1e-12);
        for i in 0..m.dim() {
            let from = owner[m.cell_index(i)];
            if from == usize::MAX {
                continue;
            }
            for (j, v) in m.row(i) {
                let to = owner[m.cell_index(j)];
                if v > floor && to != usize::MAX && !adj[from].contains(&to) {
                    adj[from].push(to);
                }
            }
        }
        // period = gcd of level differences along edges of the BFS from component 0
        let mut level = vec![usize::MAX; c];
        level[0] = 0;
        let mut queue = std::collections::VecDeque::from([0usize]);
        let mut period = 0usize;
        while let Some(u) = queue.pop_front() {
            for &v in &adj[u] {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                } else {
                    let d = (level[u] + 1).abs_diff(level[v]);
                    period = gcd(period, d);
                }
            }
        }
        let period = period.max(1);
        let classes = level.iter().map(|&l| if l == usize::MAX { 0 } else { l % period }).collect();
        if !s.contains_roots_of_unity(period) {
            return Err(Error::CycleMismatch { graph: period });
        }
        out.push(CycleInfo { period, classes });
    }
    Ok(out)
}

/// `|∫ g · Uⁿ f dμ − ∫ f dμ ∫ g dμ|` for `n = 0..=n_max`, with `U` the Koopman operator `M x`.
///
/// `weights` are the stationary cell probabilities (`density · h`).
pub fn correlations<T: Real>(m: &UlamMatrix<T>, weights: &[T], f: &[T], g: &[T], n_max: usize) -> Vec<T> {
    let mean = |obs: &[T]| -> T { weights.iter().zip(obs).map(|(w, o)| *w * *o).sum() };
    let product = mean(f) * mean(g);
    let mut cur = f.to_vec();
    let mut next = vec![T::zero(); f.len()];
    let mut out = Vec::with_capacity(n_max + 1);
    for step in 0..=n_max {
        let c: T = weights.iter().zip(g).zip(&cur).map(|((w, gi), fi)| *w * *gi * *fi).sum();
        out.push((c - product).abs());
        if step < n_max {
            m.mul(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    out
}

/// Least-squares exponential rate of a positive sequence over `range`, ignoring values below `floor`.
pub fn fit_rate<T: Real>(seq: &[T], range: std::ops::RangeInclusive<usize>, floor: T) -> Option<T> {
    let pts: Vec<(T, T)> = range
        .filter(|&k| k < seq.len() && seq[k] > floor)
        .map(|k| (T::from_usize_lossy(k), seq[k].ln()))
        .collect();
    if pts.len() < 3 {
        return None;
    }
    let np = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / np;
    let my = pts.iter().map(|p| p.1).sum::<T>() / np;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some((sxy / sxx).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_map, NoiseModel, PhaseSpace};
    use crate::transfer::build_ulam;
    use crate::Family;

    #[test]
    fn two_cell_full_circle() {
        let m = make_map(Family::PureNoise { sigma: 0.5 }, NoiseModel::UNIFORM).unwrap();
        let g = Grid::new(PhaseSpace::circle(), 2).unwrap();
        let u = build_ulam(&m, &g, 5).unwrap();
        let s = eigen(&u, 2, 1e-10).unwrap();
        assert!((s.eigenvalues[0].re - 1.0).abs() < 1e-14);
        assert!(s.eigenvalues[1].norm() < 1e-14);
        assert_eq!(s.unit_multiplicity, 1);
        assert_eq!(decay_rate(&s), s.eigenvalues[1].norm());
        let d = stationary_densities(&s).unwrap();
        assert!((d[0][0] - 1.0).abs() < 1e-12 && (d[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn block_diagonal_gives_two_densities() {
        let g = Grid::new(PhaseSpace::interval(0.0, 2.0).unwrap(), 8).unwrap();
        let mut dense = vec![vec![0.0; 8]; 8];
        for i in 0..8 {
            let base = if i < 4 { 0 } else { 4 };
            for j in 0..4 {
                dense[i][base + j] = 0.25;
            }
        }
        let u = UlamMatrix::from_dense(g, dense).unwrap();
        let s = eigen(&u, 4, 1e-10).unwrap();
        assert_eq!(s.unit_multiplicity, 2);
        let d = stationary_densities(&s).unwrap();
        assert_eq!(d.len(), 2);
        for (k, v) in d.iter().enumerate() {
            for (i, x) in v.iter().enumerate() {
                let expect: f64 = if (i < 4) == (k == 0) { 1.0 } else { 0.0 };
                assert!((x - expect).abs() < 1e-10, "{d:?}");
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = make_map(Family::PureNoise { sigma: 0.5 }, NoiseModel::UNIFORM).unwrap();
        let g = Grid::new(PhaseSpace::circle(), 2).unwrap();
        let u = build_ulam(&m, &g, 5).unwrap();
        assert!(eigen(&u, 33, 1e-10).is_err());
        assert!(eigen(&u, 2, 1e-3).is_err());
    }

    #[test]
    fn period_three_permutation() {
        let g = Grid::new(PhaseSpace::interval(0.0, 1.0).unwrap(), 6).unwrap();
        // cells {0,1} -> {2,3} -> {4,5} -> {0,1}
        let mut dense = vec![vec![0.0; 6]; 6];
        for i in 0..6 {
            let next = (i / 2 + 1) % 3;
            dense[i][2 * next] = 0.5;
            dense[i][2 * next + 1] = 0.5;
        }
        let u = UlamMatrix::from_dense(g, dense).unwrap();
        let s = eigen(&u, 4, 1e-10).unwrap();
        assert!(s.contains_roots_of_unity(3));
        let comps = vec![vec![vec![0, 1], vec![2, 3], vec![4, 5]]];
        let cyc = cyclic_structure(&s, &u, &comps).unwrap();
        assert_eq!(cyc[0].period, 3);
        assert_eq!(cyc[0].classes, vec![0, 1, 2]);
        let merged = vec![vec![vec![0, 1, 2, 3, 4, 5]]];
        assert_eq!(cyclic_structure(&s, &u, &merged).unwrap()[0].period, 1);
    }

    #[test]
    fn rate_fit_recovers_geometric() {
        let seq: Vec<f64> = (0..40).map(|k| 3.0 * 0.7f64.powi(k)).collect();
        assert!((fit_rate(&seq, 1..=30, 1e-14).unwrap() - 0.7).abs() < 1e-12);
    }
}
