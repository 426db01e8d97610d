//! Supports of stationary measures, set-valued minimal invariant sets and
//! Monte Carlo Birkhoff averages.

use petgraph::algo::kosaraju_scc;
use petgraph::graph::{DiGraph, NodeIndex};

use crate::kernel::image_interval;
use crate::model::{rng_for, PhaseSpace, RandomMap};
use crate::transfer::Grid;
use crate::{Error, Real, Result};

/// Default relative density threshold for supports.
pub const DEFAULT_TAU_REL: f64 = 1e-6;
/// Default number of discarded iterates in Birkhoff averages.
pub const DEFAULT_BURN_IN: usize = 1000;
const BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SupportMethod {
    DensityThreshold,
    SetValued,
}

impl SupportMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            SupportMethod::DensityThreshold => "density",
            SupportMethod::SetValued => "setvalued",
        }
    }
}

/// Union of disjoint closed intervals, sorted by left endpoint.
///
/// On the circle a component crossing `0` is stored with `hi > 1`
/// (lifted right endpoint); the whole circle is `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SupportSet<T> {
    pub components: Vec<(T, T)>,
    pub method: SupportMethod,
    /// Absolute density threshold (zero for set-valued supports).
    pub threshold: T,
    pub space: PhaseSpace<T>,
    /// Grid cells of every component.
    pub cells: Vec<Vec<usize>>,
}

impl<T: Real> SupportSet<T> {
    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Components as non-wrapping pieces of the base space.
    pub fn pieces(&self) -> Vec<(T, T)> {
        let mut out = Vec::new();
        for &(lo, hi) in &self.components {
            if self.space.is_circle() && hi > T::one() {
                out.push((T::zero(), hi - T::one()));
                out.push((lo, T::one()));
            } else {
                out.push((lo, hi));
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
        out
    }

    pub fn contains(&self, x: T) -> bool {
        let x = self.space.wrap(x);
        self.pieces().iter().any(|&(lo, hi)| x >= lo && x <= hi)
    }

    pub fn measure(&self) -> T {
        self.components.iter().map(|&(lo, hi)| hi - lo).sum()
    }

    /// `true` when the support is the whole circle.
    pub fn wraps(&self) -> bool {
        self.space.is_circle() && self.components.len() == 1 && self.components[0].1 - self.components[0].0 >= T::one()
    }

    fn distance_to(&self, x: T) -> T {
        let pieces = self.pieces();
        let mut best = T::infinity();
        for (lo, hi) in pieces {
            if x >= lo && x <= hi {
                return T::zero();
            }
            best = best.min(self.space.distance(x, lo)).min(self.space.distance(x, hi));
        }
        best
    }

    /// Midpoints of the gaps between consecutive pieces (wrap-aware on the circle).
    fn gap_midpoints(&self) -> Vec<T> {
        let comps = &self.components;
        let mut out = Vec::new();
        if comps.is_empty() {
            return out;
        }
        let two = T::lit(2.0);
        for w in comps.windows(2) {
            out.push((w[0].1 + w[1].0) / two);
        }
        if self.space.is_circle() {
            let last = comps[comps.len() - 1].1;
            let first = comps[0].0 + T::one();
            if first > last {
                out.push(self.space.wrap((last + first) / two));
            }
        } else {
            out.push(self.space.lower());
            out.push(self.space.upper());
        }
        out
    }
}

/// Hausdorff distance between two supports on the same phase space.
pub fn hausdorff<T: Real>(a: &SupportSet<T>, b: &SupportSet<T>) -> T {
    fn directed<T: Real>(a: &SupportSet<T>, b: &SupportSet<T>) -> T {
        if b.is_empty() {
            return T::infinity();
        }
        let mut cands: Vec<T> = a.pieces().iter().flat_map(|&(lo, hi)| [lo, hi]).collect();
        cands.extend(b.gap_midpoints().into_iter().filter(|&x| a.contains(x)));
        cands.into_iter().map(|x| b.distance_to(x)).fold(T::zero(), T::max)
    }
    directed(a, b).max(directed(b, a))
}

/// Maximal runs of marked cells as components (circle wraparound merged).
fn runs_to_support<T: Real>(grid: &Grid<T>, marked: &[bool], method: SupportMethod, threshold: T) -> SupportSet<T> {
    let n = grid.n_cells;
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < n {
        if marked[i] {
            let start = i;
            while i < n && marked[i] {
                i += 1;
            }
            runs.push((start, i - 1));
        } else {
            i += 1;
        }
    }
    let circle = grid.space.is_circle();
    let mut cells: Vec<Vec<usize>> = runs.iter().map(|&(a, b)| (a..=b).collect()).collect();
    let mut components: Vec<(T, T)> = runs.iter().map(|&(a, b)| (grid.edge(a), grid.edge(b + 1))).collect();
    if circle && runs.len() > 1 && runs[0].0 == 0 && runs[runs.len() - 1].1 == n - 1 {
        let first = components.remove(0);
        let first_cells = cells.remove(0);
        let last = components.len() - 1;
        components[last].1 = first.1 + T::one();
        cells[last].extend(first_cells);
        // keep the sort by left endpoint
        let c = components.remove(last);
        let cc = cells.remove(last);
        let pos = components.iter().position(|x| x.0 > c.0).unwrap_or(components.len());
        components.insert(pos, c);
        cells.insert(pos, cc);
    }
    SupportSet {
        components,
        method,
        threshold,
        space: grid.space,
        cells,
    }
}

/// Cells with `φ ≥ τ_rel · max φ`, merged into maximal runs.
pub fn support_from_density<T: Real>(grid: &Grid<T>, phi: &[T], tau_rel: T) -> Result<SupportSet<T>> {
    if phi.len() != grid.n_cells {
        return Err(Error::DimensionMismatch {
            expected: grid.n_cells,
            got: phi.len(),
        });
    }
    if !(tau_rel > T::zero() && tau_rel <= T::lit(1e-2)) {
        return Err(Error::precondition("tau_rel must be in (0, 1e-2]"));
    }
    let max = phi.iter().copied().fold(T::zero(), T::max);
    if !(max > T::zero()) {
        return Err(Error::AllBelowThreshold);
    }
    let tau = tau_rel * max;
    let marked: Vec<bool> = phi.iter().map(|&v| v >= tau).collect();
    Ok(runs_to_support(grid, &marked, SupportMethod::DensityThreshold, tau))
}

/// Outer image `f(cell; [−1, 1])` in lift coordinates, from 5 samples per cell plus interior critical points.
pub fn cell_image<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>, cell: usize) -> (T, T) {
    let (a, b) = grid.cell(cell);
    let mut xs: Vec<T> = (0..5).map(|k| a + (b - a) * T::from_usize_lossy(k) / T::lit(4.0)).collect();
    xs.extend(map.critical_points().into_iter().filter(|&c| c > a && c < b));
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for x in xs {
        let (l, h) = image_interval(map, x);
        lo = lo.min(l);
        hi = hi.max(h);
    }
    (lo, hi)
}

/// Cells whose interior meets the lifted interval `[lo, hi]`, as inclusive non-wrapping index runs.
fn cell_runs_meeting<T: Real>(grid: &Grid<T>, lo: T, hi: T) -> Vec<(usize, usize)> {
    let n = grid.n_cells as i64;
    let mut m_lo = grid.lift_index(lo);
    let mut m_hi = grid.lift_index(hi);
    if grid.lift_edge(m_hi) >= hi && m_hi > m_lo {
        m_hi -= 1;
    }
    if grid.space.is_circle() {
        if m_hi - m_lo + 1 >= n {
            return vec![(0, grid.n_cells - 1)];
        }
        let a = m_lo.rem_euclid(n);
        let b = m_hi.rem_euclid(n);
        if a <= b {
            vec![(a as usize, b as usize)]
        } else {
            vec![(0, b as usize), (a as usize, grid.n_cells - 1)]
        }
    } else {
        m_lo = m_lo.max(0);
        m_hi = m_hi.min(n - 1);
        if m_lo > m_hi {
            return Vec::new();
        }
        vec![(m_lo as usize, m_hi as usize)]
    }
}

/// Images of the set-valued cell map as inclusive index runs per cell.
pub fn cell_ranges<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>) -> Vec<Vec<(usize, usize)>> {
    use rayon::prelude::*;
    (0..grid.n_cells)
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = cell_image(map, grid, c);
            cell_runs_meeting(grid, lo, hi)
        })
        .collect()
}

/// Adjacency of the set-valued cell map `C ↦ cells meeting f(C; [−1, 1])`.
pub fn cell_graph<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>) -> Vec<Vec<usize>> {
    cell_ranges(map, grid)
        .into_iter()
        .map(|runs| runs.into_iter().flat_map(|(a, b)| a..=b).collect())
        .collect()
}

/// Cells reachable from `start`, with their BFS distance.
fn reachable(ranges: &[Vec<(usize, usize)>], start: usize) -> Vec<usize> {
    let n = ranges.len();
    let mut dist = vec![usize::MAX; n];
    // next[i]: smallest unvisited cell >= i (n when none)
    let mut next: Vec<usize> = (0..=n).collect();
    fn find(next: &mut [usize], mut i: usize) -> usize {
        let mut root = i;
        while next[root] != root {
            root = next[root];
        }
        while next[i] != root {
            let up = next[i];
            next[i] = root;
            i = up;
        }
        root
    }
    dist[start] = 0;
    next[start] = start + 1;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &(a, b) in &ranges[u] {
            let mut v = find(&mut next, a);
            while v <= b {
                dist[v] = dist[u] + 1;
                next[v] = v + 1;
                queue.push_back(v);
                v = find(&mut next, v + 1);
            }
        }
    }
    dist
}

/// Closed strongly connected classes of the range graph.
///
/// Each run is linked through a segment tree over the cells, so the graph has
/// `O(n log n)` edges instead of one edge per cell pair.
fn closed_classes(ranges: &[Vec<(usize, usize)>]) -> Vec<Vec<usize>> {
    let n = ranges.len();
    let size = n.next_power_of_two();
    // node ids: cells 0..n, internal tree node t in 1..size at n + t
    let node_of = |t: usize| -> Option<usize> {
        if t >= size {
            (t - size < n).then_some(t - size)
        } else {
            Some(n + t)
        }
    };
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n + size, 0);
    for _ in 0..n + size {
        g.add_node(());
    }
    for t in 1..size {
        for child in [2 * t, 2 * t + 1] {
            if let Some(c) = node_of(child) {
                g.add_edge(NodeIndex::new(n + t), NodeIndex::new(c), ());
            }
        }
    }
    for (c, runs) in ranges.iter().enumerate() {
        for &(a, b) in runs {
            let (mut l, mut r) = (a + size, b + size + 1);
            while l < r {
                if l & 1 == 1 {
                    if let Some(v) = node_of(l) {
                        g.add_edge(NodeIndex::new(c), NodeIndex::new(v), ());
                    }
                    l += 1;
                }
                if r & 1 == 1 {
                    r -= 1;
                    if let Some(v) = node_of(r) {
                        g.add_edge(NodeIndex::new(c), NodeIndex::new(v), ());
                    }
                }
                l >>= 1;
                r >>= 1;
            }
        }
    }
    let sccs = kosaraju_scc(&g);
    let mut comp = vec![usize::MAX; n];
    for (k, scc) in sccs.iter().enumerate() {
        for ix in scc.iter().filter(|ix| ix.index() < n) {
            comp[ix.index()] = k;
        }
    }
    // same_until[i]: last index of the run of equal components starting at i
    let mut same_until = vec![0usize; n];
    for i in (0..n).rev() {
        same_until[i] = if i + 1 < n && comp[i + 1] == comp[i] { same_until[i + 1] } else { i };
    }
    let mut out = Vec::new();
    for (k, scc) in sccs.iter().enumerate() {
        let mut members: Vec<usize> = scc.iter().map(|ix| ix.index()).filter(|&i| i < n).collect();
        if members.is_empty() {
            continue;
        }
        members.sort_unstable();
        let closed = members.iter().all(|&m| ranges[m].iter().all(|&(a, b)| comp[a] == k && same_until[a] >= b));
        let nontrivial = members.len() > 1 || ranges[members[0]].iter().any(|&(a, b)| a <= members[0] && members[0] <= b);
        if closed && nontrivial {
            out.push(members);
        }
    }
    out.sort();
    out
}

fn support_of_cells<T: Real>(grid: &Grid<T>, cells: &[usize]) -> SupportSet<T> {
    let mut marked = vec![false; grid.n_cells];
    for &c in cells {
        marked[c] = true;
    }
    runs_to_support(grid, &marked, SupportMethod::SetValued, T::zero())
}

/// Minimal forward-invariant cell set reached from `seedpoint`.
///
/// Among the closed classes reachable from the seed cell, the one nearest to
/// the seed in graph distance is returned.
pub fn minimal_invariant_set<T: Real, M: RandomMap<T>>(map: &M, seedpoint: T, grid: &Grid<T>) -> Result<SupportSet<T>> {
    if !grid.space.contains(seedpoint) {
        return Err(Error::precondition(format!("seed {seedpoint} is outside the phase space")));
    }
    let ranges = cell_ranges(map, grid);
    let dist = reachable(&ranges, grid.cell_of(seedpoint));
    let classes = closed_classes(&ranges);
    let best = classes
        .iter()
        .map(|c| (c.iter().map(|&x| dist[x]).min().unwrap_or(usize::MAX), c))
        .filter(|(d, _)| *d != usize::MAX)
        .min_by_key(|(d, _)| *d);
    match best {
        Some((_, c)) => Ok(support_of_cells(grid, c)),
        None => {
            let size = dist.iter().filter(|&&d| d != usize::MAX).count();
            Err(Error::NoFixedSet { previous: size, last: size })
        }
    }
}

/// All minimal invariant cell sets (closed classes of the whole cell graph).
pub fn minimal_invariant_sets<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>) -> Vec<SupportSet<T>> {
    closed_classes(&cell_ranges(map, grid)).iter().map(|c| support_of_cells(grid, c)).collect()
}

/// Union of all minimal invariant sets of the set-valued map on `grid`.
pub fn set_valued_support<T: Real, M: RandomMap<T>>(map: &M, grid: &Grid<T>) -> SupportSet<T> {
    let cells: Vec<usize> = closed_classes(&cell_ranges(map, grid)).into_iter().flatten().collect();
    support_of_cells(grid, &cells)
}

/// Endpoints of the components of `s` (none for the whole circle).
pub fn support_endpoints<T: Real>(s: &SupportSet<T>) -> Vec<T> {
    if s.wraps() {
        return Vec::new();
    }
    s.components.iter().flat_map(|&(lo, hi)| [s.space.wrap(lo), s.space.wrap(hi)]).collect()
}

/// `∫_lo^hi φ dm` for a piecewise-constant density on `grid`.
pub fn density_mass<T: Real>(grid: &Grid<T>, phi: &[T], lo: T, hi: T) -> T {
    (0..grid.n_cells)
        .map(|i| {
            let (a, b) = grid.cell(i);
            let overlap = (b.min(hi) - a.max(lo)).max(T::zero());
            phi[i] * overlap
        })
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable<T> {
    /// `1_{[lo, hi]}`.
    Indicator(T, T),
    Coordinate,
}

impl<T: Real> Observable<T> {
    pub fn eval(&self, x: T) -> T {
        match *self {
            Observable::Indicator(lo, hi) => {
                if x >= lo && x <= hi {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Observable::Coordinate => x,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            Observable::Indicator(lo, hi) => format!("indicator[{lo},{hi}]"),
            Observable::Coordinate => "coordinate".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirkhoffEstimate<T> {
    pub observable: String,
    pub value: T,
    pub n: usize,
    pub burn_in: usize,
    /// Batch-means standard error (32 batches).
    pub std_error: T,
}

/// Time average of `observable` along one noisy orbit.
pub fn birkhoff_average<T: Real, M: RandomMap<T>>(
    map: &M,
    x0: T,
    observable: Observable<T>,
    n: usize,
    burn_in: usize,
    seed: u64,
) -> Result<BirkhoffEstimate<T>> {
    if n < 1000 {
        return Err(Error::precondition("n must be at least 1000"));
    }
    let space = map.space();
    if !space.contains(x0) {
        return Err(Error::precondition(format!("x0 = {x0} is outside the phase space")));
    }
    let noise = map.noise();
    let mut rng = rng_for(seed, 0);
    let mut x = space.wrap(x0);
    for _ in 0..burn_in {
        x = map.eval(x, noise.sample(&mut rng));
    }
    let per = n / BATCHES;
    let mut batch_means = Vec::with_capacity(BATCHES);
    let mut total = T::zero();
    let mut count = 0usize;
    for b in 0..BATCHES {
        let len = if b == BATCHES - 1 { n - per * (BATCHES - 1) } else { per };
        let mut s = T::zero();
        for _ in 0..len {
            x = map.eval(x, noise.sample(&mut rng));
            s += observable.eval(x);
        }
        total += s;
        count += len;
        batch_means.push(s / T::from_usize_lossy(len));
    }
    let value = total / T::from_usize_lossy(count);
    let bm = T::from_usize_lossy(BATCHES);
    let mean_b = batch_means.iter().copied().sum::<T>() / bm;
    let var = batch_means.iter().map(|m| (*m - mean_b) * (*m - mean_b)).sum::<T>() / (bm - T::one());
    Ok(BirkhoffEstimate {
        observable: observable.describe(),
        value,
        n,
        burn_in,
        std_error: (var / bm).sqrt(),
    })
}
