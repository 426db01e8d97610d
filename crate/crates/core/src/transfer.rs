//! Ulam discretization of the annealed transfer operator.
//!
//! `M[i][j]` is the probability that a point uniform in cell `i` lands in
//! cell `j` after one step. Rows act on densities from the left: a density
//! `φ` (cell averages) is pushed forward to `φᵀM` (divided by the target cell
//! width, which is constant on the uniform grid).
//!
//! Rows are stored as contiguous column bands (wrapping on the circle); a
//! band covering every column is the dense row.

use rayon::prelude::*;

use crate::kernel::{check_fiber, image_interval, transition_cdf};
use crate::model::{PhaseSpace, RandomMap};
use crate::quad::GaussLegendre;
use crate::{Error, Real, Result};

pub const DEFAULT_QUADRATURE: usize = 5;

/// Uniform partition of a phase space into `n_cells` cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    pub space: PhaseSpace<T>,
    pub n_cells: usize,
}

impl<T: Real> Grid<T> {
    pub fn new(space: PhaseSpace<T>, n_cells: usize) -> Result<Self> {
        if n_cells < 2 {
            return Err(Error::precondition("a grid needs at least 2 cells"));
        }
        Ok(Grid { space, n_cells })
    }

    pub fn width(&self) -> T {
        self.space.length() / T::from_usize_lossy(self.n_cells)
    }

    pub fn edge(&self, i: usize) -> T {
        self.space.lower() + self.space.length() * T::from_usize_lossy(i) / T::from_usize_lossy(self.n_cells)
    }

    pub fn center(&self, i: usize) -> T {
        self.space.lower() + self.width() * (T::from_usize_lossy(i) + T::lit(0.5))
    }

    pub fn cell(&self, i: usize) -> (T, T) {
        (self.edge(i), self.edge(i + 1))
    }

    /// Index of the cell containing `x` (lifted coordinates reduced on the circle, clamped on intervals).
    pub fn cell_of(&self, x: T) -> usize {
        let x = self.space.wrap(x);
        let k = ((x - self.space.lower()) / self.width()).floor();
        let k = k.max(T::zero()).to_usize().unwrap_or(0);
        k.min(self.n_cells - 1)
    }

    /// Signed lift-cell index of a lifted coordinate (no wrapping, no clamping).
    pub fn lift_index(&self, x: T) -> i64 {
        ((x - self.space.lower()) / self.width()).floor().to_i64().unwrap_or(i64::MIN / 4)
    }

    /// Edge of a lift-cell index, may lie outside the base space.
    pub fn lift_edge(&self, m: i64) -> T {
        self.space.lower() + self.width() * T::from_i64(m).expect("index")
    }

    pub fn centers(&self) -> Vec<T> {
        (0..self.n_cells).map(|i| self.center(i)).collect()
    }

    /// Cells whose interior meets one of the intervals (outward snapping).
    pub fn cells_meeting(&self, intervals: &[(T, T)]) -> Vec<usize> {
        let mut keep = vec![false; self.n_cells];
        for &(lo, hi) in intervals {
            if !(hi > lo) {
                continue;
            }
            for (i, k) in keep.iter_mut().enumerate() {
                let (a, b) = self.cell(i);
                if a < hi && b > lo {
                    *k = true;
                }
            }
        }
        keep.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Band<T> {
    start: usize,
    values: Vec<T>,
}

/// Restriction of a matrix to a window of grid cells.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    /// Grid cells in the window, increasing.
    pub cells: Vec<usize>,
}

impl Window {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Maximal runs of consecutive cells, as inclusive index pairs.
    pub fn runs(&self) -> Vec<(usize, usize)> {
        let mut runs: Vec<(usize, usize)> = Vec::new();
        for &c in &self.cells {
            match runs.last_mut() {
                Some(r) if r.1 + 1 == c => r.1 = c,
                _ => runs.push((c, c)),
            }
        }
        runs
    }
}

/// Row-stochastic (or substochastic, when windowed) Ulam matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct UlamMatrix<T> {
    pub grid: Grid<T>,
    pub window: Option<Window>,
    rows: Vec<Band<T>>,
    /// Grid cell → local index (`usize::MAX` outside the window).
    local: Vec<usize>,
    /// Mass each row sends outside the phase space.
    lost: Vec<T>,
    /// Notes produced while building (renormalized rows, leaking rows).
    pub notes: Vec<String>,
}

const OUTSIDE: usize = usize::MAX;

impl<T: Real> UlamMatrix<T> {
    /// Number of rows (= columns).
    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Grid cell of local index `i`.
    pub fn cell_index(&self, i: usize) -> usize {
        match &self.window {
            Some(w) => w.cells[i],
            None => i,
        }
    }

    /// Local index of grid cell `c`, if it belongs to the matrix.
    pub fn local_of(&self, c: usize) -> Option<usize> {
        self.local.get(c).copied().filter(|&j| j != OUTSIDE)
    }

    /// Builds a matrix from dense rows on the given grid (no window).
    pub fn from_dense(grid: Grid<T>, dense: Vec<Vec<T>>) -> Result<Self> {
        let n = grid.n_cells;
        if dense.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: dense.len() });
        }
        let mut rows = Vec::with_capacity(n);
        let mut lost = Vec::with_capacity(n);
        for r in dense {
            if r.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: r.len() });
            }
            if r.iter().any(|&v| v < T::zero() || !v.is_finite()) {
                return Err(Error::invalid("matrix entries must be finite and nonnegative"));
            }
            let s: T = r.iter().copied().sum();
            lost.push((T::one() - s).max(T::zero()));
            rows.push(Band { start: 0, values: r });
        }
        Ok(UlamMatrix {
            grid,
            window: None,
            rows,
            local: (0..n).collect(),
            lost,
            notes: Vec::new(),
        })
    }

    fn band_columns<'a>(&'a self, band: &'a Band<T>) -> impl Iterator<Item = (usize, T)> + 'a {
        let n = self.grid.n_cells;
        band.values.iter().enumerate().filter_map(move |(k, &v)| {
            let col = (band.start + k) % n;
            let j = self.local[col];
            (j != OUTSIDE).then_some((j, v))
        })
    }

    /// Nonzero-pattern aware iteration over row `i` as `(local column, value)`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        self.band_columns(&self.rows[i])
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.row(i).filter(|&(c, _)| c == j).map(|(_, v)| v).sum()
    }

    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut r = vec![T::zero(); n];
                for (j, v) in self.row(i) {
                    r[j] += v;
                }
                r
            })
            .collect()
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.dim()).map(|i| self.row(i).map(|(_, v)| v).sum()).collect()
    }

    /// Stored entries (band lengths summed).
    pub fn stored_entries(&self) -> usize {
        self.rows.iter().map(|b| b.values.len()).sum()
    }

    /// `y = Mᵀ x` (pushforward of cell weights).
    pub fn mul_transpose(&self, x: &[T], y: &mut [T]) {
        y.iter_mut().for_each(|v| *v = T::zero());
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (j, v) in self.row(i) {
                y[j] += xi * v;
            }
        }
    }

    /// `y = M x` (expectation of an observable after one step).
    pub fn mul(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// Mass row `i` sends outside the matrix (outside the window or the phase
    /// space), summed from the entries themselves rather than as `1 - row sum`.
    pub fn leak(&self, i: usize) -> T {
        let band = &self.rows[i];
        let n = self.grid.n_cells;
        let outside: T = band
            .values
            .iter()
            .enumerate()
            .filter(|(k, _)| self.local[(band.start + k) % n] == OUTSIDE)
            .map(|(_, v)| *v)
            .sum();
        outside + self.lost[i]
    }

    /// Pushforward of a density given by cell values.
    pub fn apply(&self, phi: &[T]) -> Result<Vec<T>> {
        let n = self.dim();
        if phi.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: phi.len() });
        }
        // uniform grid: |cell_i| / |cell_j| = 1
        let mut out = vec![T::zero(); n];
        self.mul_transpose(phi, &mut out);
        Ok(out)
    }
}

/// Lift-cell index range touched by the image of `x`, and the CDF increments per lift cell.
fn node_contributions<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, x: T, out: &mut Vec<(i64, T)>) {
    out.clear();
    let (lo, hi) = image_interval(map, x);
    let m_lo = grid.lift_index(lo);
    let m_hi = grid.lift_index(hi);
    let mut prev = T::zero();
    for m in m_lo..=m_hi {
        let right = grid.lift_edge(m + 1);
        let c = if right >= hi { T::one() } else { transition_cdf(map, x, right) };
        let p = c - prev;
        prev = c;
        if p > T::zero() {
            out.push((m, p));
        }
    }
}

/// Assembles row `cell` of the Ulam matrix with a `q`-point Gauss–Legendre rule in `x`.
fn build_row<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, gl: &GaussLegendre<T>, cell: usize) -> Result<(Band<T>, T)> {
    let n = grid.n_cells as i64;
    let circle = grid.space.is_circle();
    let (a, b) = grid.cell(cell);
    let mut contribs: Vec<(i64, T)> = Vec::new();
    let mut per_node: Vec<(T, Vec<(i64, T)>)> = Vec::with_capacity(gl.nodes.len());
    let (mut m_min, mut m_max) = (i64::MAX, i64::MIN);
    for (x, w) in gl.scaled(a, b) {
        check_fiber(map, x)?;
        node_contributions(map, grid, x, &mut contribs);
        if let (Some(f), Some(l)) = (contribs.first(), contribs.last()) {
            m_min = m_min.min(f.0);
            m_max = m_max.max(l.0);
        }
        per_node.push((w / (b - a), contribs.clone()));
    }
    let mut lost = T::zero();
    if m_min > m_max {
        return Ok((Band { start: 0, values: Vec::new() }, T::one()));
    }
    let band = if circle {
        let width = (m_max - m_min + 1).min(n);
        let start = m_min.rem_euclid(n);
        let mut values = vec![T::zero(); width as usize];
        for (w, cs) in &per_node {
            for &(m, p) in cs {
                let k = (m - m_min).rem_euclid(n);
                values[k as usize] += *w * p;
            }
        }
        Band { start: start as usize, values }
    } else {
        let lo = m_min.max(0);
        let hi = m_max.min(n - 1);
        let mut values = vec![T::zero(); if hi >= lo { (hi - lo + 1) as usize } else { 0 }];
        for (w, cs) in &per_node {
            for &(m, p) in cs {
                if m < 0 || m >= n {
                    lost += *w * p;
                } else {
                    values[(m - lo) as usize] += *w * p;
                }
            }
        }
        Band {
            start: lo.max(0) as usize,
            values,
        }
    };
    Ok((band, lost))
}

/// Row bands, leaked mass per row and warnings.
type Assembled<T> = (Vec<Band<T>>, Vec<T>, Vec<String>);

fn assemble<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, q: usize, cells: &[usize]) -> Result<Assembled<T>> {
    if q == 0 {
        return Err(Error::precondition("quadrature order must be >= 1"));
    }
    if grid.space != map.space() {
        return Err(Error::precondition("grid and map live on different phase spaces"));
    }
    let gl = GaussLegendre::<T>::new(q);
    let built: Vec<(Band<T>, T)> = cells.par_iter().map(|&c| build_row(map, grid, &gl, c)).collect::<Result<_>>()?;
    let mut notes = Vec::new();
    let mut rows = Vec::with_capacity(built.len());
    let mut lost_all = Vec::with_capacity(built.len());
    let tol = T::lit(1e-8);
    let (mut renormalized, mut leaking) = (0usize, 0usize);
    for (mut band, lost) in built {
        let s: T = band.values.iter().copied().sum();
        if lost > tol {
            leaking += 1;
        }
        if (s + lost - T::one()).abs() > tol && s > T::zero() {
            let target = T::one() - lost;
            band.values.iter_mut().for_each(|v| *v = *v * target / s);
            renormalized += 1;
        }
        rows.push(band);
        lost_all.push(lost);
    }
    if renormalized > 0 {
        notes.push(format!("renormalized {renormalized} rows with row-sum residual above 1e-8"));
    }
    if leaking > 0 {
        notes.push(format!("{leaking} rows lose mass outside the phase space"));
    }
    Ok((rows, lost_all, notes))
}

/// Ulam matrix of `map` on `grid`.
pub fn build_ulam<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, q: usize) -> Result<UlamMatrix<T>> {
    let cells: Vec<usize> = (0..grid.n_cells).collect();
    let (rows, lost, notes) = assemble(map, grid, q, &cells)?;
    Ok(UlamMatrix {
        grid: *grid,
        window: None,
        rows,
        local: cells,
        lost,
        notes,
    })
}

/// Windowed Ulam matrix `1_W L`: rows and columns restricted to the cells meeting `window`.
pub fn build_windowed<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, window: &[(T, T)], q: usize) -> Result<UlamMatrix<T>> {
    let cells = grid.cells_meeting(window);
    build_on_cells(map, grid, cells, q)
}

/// Windowed Ulam matrix on an explicit set of grid cells.
pub fn build_on_cells<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, mut cells: Vec<usize>, q: usize) -> Result<UlamMatrix<T>> {
    cells.sort_unstable();
    cells.dedup();
    if cells.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let (rows, lost, notes) = assemble(map, grid, q, &cells)?;
    let mut local = vec![OUTSIDE; grid.n_cells];
    for (k, &c) in cells.iter().enumerate() {
        local[c] = k;
    }
    Ok(UlamMatrix {
        grid: *grid,
        window: Some(Window { cells }),
        rows,
        local,
        lost,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_map, make_map_on, NoiseModel};
    use crate::Family;

    #[test]
    fn full_circle_two_cells() {
        let m = make_map(Family::PureNoise { sigma: 0.5 }, NoiseModel::UNIFORM).unwrap();
        let g = Grid::new(PhaseSpace::circle(), 2).unwrap();
        let u = build_ulam(&m, &g, 5).unwrap();
        for r in u.to_dense() {
            for v in r {
                assert!((v - 0.5).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn banded_pure_noise() {
        let m = make_map(Family::PureNoise { sigma: 0.05 }, NoiseModel::UNIFORM).unwrap();
        let g = Grid::new(PhaseSpace::circle(), 64).unwrap();
        let u = build_ulam(&m, &g, 5).unwrap();
        let dense = u.to_dense();
        for (i, r) in dense.iter().enumerate() {
            let nz = r.iter().filter(|&&v| v > 0.0).count();
            assert!(nz <= 9, "row {i} has {nz} nonzeros");
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn toy_leak_rows_sum_to_half() {
        let space = PhaseSpace::interval(-2.0, 2.0).unwrap();
        let m = make_map_on(
            Family::AffineTest {
                c: 0.0,
                lambda: 0.0,
                sigma: 2.0,
            },
            NoiseModel::UNIFORM,
            space,
        )
        .unwrap();
        let g = Grid::new(space, 40).unwrap();
        let w = build_windowed(&m, &g, &[(-1.0, 1.0)], 5).unwrap();
        assert_eq!(w.dim(), 20);
        for s in w.row_sums() {
            assert!((s - 0.5).abs() < 1e-14);
        }
        let full = build_windowed(&m, &g, &[(-2.0, 2.0)], 5).unwrap();
        assert_eq!(full.to_dense(), build_ulam(&m, &g, 5).unwrap().to_dense());
    }

    #[test]
    fn empty_window_rejected() {
        let m = make_map(Family::PureNoise { sigma: 0.05 }, NoiseModel::UNIFORM).unwrap();
        let g = Grid::new(PhaseSpace::circle(), 16).unwrap();
        assert_eq!(build_windowed(&m, &g, &[(0.3, 0.3)], 5).unwrap_err(), Error::EmptyWindow);
    }

    #[test]
    fn apply_dimension_checked() {
        let m = make_map(Family::PureNoise { sigma: 0.5 }, NoiseModel::UNIFORM).unwrap();
        let g = Grid::new(PhaseSpace::circle(), 2).unwrap();
        let u = build_ulam(&m, &g, 5).unwrap();
        assert!(matches!(u.apply(&[1.0]), Err(Error::DimensionMismatch { .. })));
        assert_eq!(u.apply(&[1.0, 1.0]).unwrap(), vec![1.0, 1.0]);
    }
}
