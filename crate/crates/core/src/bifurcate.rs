//! Parameter sweeps, extremal periodic orbits and detection of random
//! saddle-node, homoclinic and boundary bifurcations.

use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::RandomMap;
use crate::spectral::{eigen, stationary_densities, Group};
use crate::stationary::{hausdorff, set_valued_support, support_endpoints, SupportSet};
use crate::transfer::{build_ulam, Grid, DEFAULT_QUADRATURE};
use crate::Real;

/// `|multiplier − 1|` below which an orbit is a saddle-node candidate.
pub const SADDLE_NODE_TOL: f64 = 1e-6;
/// Threshold for the unfolding derivatives.
pub const GENERICITY_TOL: f64 = 1e-6;
/// Largest accepted residual `|f^k(x) − x − m|` of a periodic point.
pub const ORBIT_TOL: f64 = 1e-10;
/// Largest period searched.
pub const K_MAX_LIMIT: usize = 6;
/// Largest critical-orbit length searched.
pub const L_MAX_LIMIT: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Attracting,
    Repelling,
    SaddleNodeCandidate,
    NonHyperbolicOther,
}

impl Stability {
    fn classify<T: Real>(mult: T) -> Self {
        if (mult - T::one()).abs() <= T::lit(SADDLE_NODE_TOL) {
            Stability::SaddleNodeCandidate
        } else if mult > T::zero() && mult < T::one() {
            Stability::Attracting
        } else if mult > T::one() {
            Stability::Repelling
        } else {
            Stability::NonHyperbolicOther
        }
    }
}

/// Periodic orbit of an extremal map `x ↦ f(x; ω_k) ∘ … ∘ f(x; ω_1)`, `ω_i = ±1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtremalOrbit<T> {
    pub period: usize,
    /// Canonical (lexicographically least) rotation of the sign word.
    pub word: Vec<i8>,
    /// `points[i+1] = f(points[i]; word[i])`.
    pub points: Vec<T>,
    /// `d/dx f^k` at the orbit.
    pub multiplier: T,
    pub stability: Stability,
}

impl<T: Real> ExtremalOrbit<T> {
    /// Multiplier away from `0` and `±1`.
    pub fn is_hyperbolic(&self) -> bool {
        let tol = T::lit(SADDLE_NODE_TOL);
        let m = self.multiplier.abs();
        (m - T::one()).abs() > tol && m > tol
    }
}

/// Sign word as a string of `+` and `-`.
pub fn word_string(word: &[i8]) -> String {
    word.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventType {
    SaddleNode,
    Homoclinic,
    Boundary,
    /// Support jump without a matching detector event.
    SupportJump,
}

impl EventType {
    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::SaddleNode => "saddle-node",
            EventType::Homoclinic => "homoclinic",
            EventType::Boundary => "boundary",
            EventType::SupportJump => "support-jump",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// The number of stationary measures is the same on both sides.
    Intermittency,
    /// The number of stationary measures drops.
    Transient,
}

impl Label {
    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Intermittency => "intermittency",
            Label::Transient => "transient",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence<T> {
    /// Multipliers `(a, attracting partner, repelling partner)` stepping away from the bracket.
    MultiplierTrace { word: Vec<i8>, point: T, trace: Vec<(T, T, T)> },
    /// `f^l(c; word) − x̄` changes sign across the bracket.
    CriticalOrbitGap {
        critical: T,
        word: Vec<i8>,
        orbit_word: Vec<i8>,
        point: T,
        gaps: (T, T),
    },
    /// An attracting and a repelling orbit point of different words collide.
    CollidingPair {
        attracting: Vec<i8>,
        repelling: Vec<i8>,
        point: T,
        multipliers: (T, T),
    },
    /// Hausdorff distance between the supports at the two ends of the sweep step.
    HausdorffJump { size: T },
}

impl<T: Real> fmt::Display for Evidence<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Evidence::MultiplierTrace { word, point, trace } => {
                let last = trace.first().map(|t| (t.1, t.2)).unwrap_or((T::nan(), T::nan()));
                write!(f, "multiplier word {} at x={} (mult {} / {})", word_string(word), point, last.0, last.1)
            }
            Evidence::CriticalOrbitGap {
                critical,
                word,
                orbit_word,
                point,
                gaps,
            } => write!(
                f,
                "f^{}(c={}; {}) crosses x={} of orbit {} (gap {} -> {})",
                word.len(),
                critical,
                word_string(word),
                point,
                word_string(orbit_word),
                gaps.0,
                gaps.1
            ),
            Evidence::CollidingPair {
                attracting,
                repelling,
                point,
                multipliers,
            } => write!(
                f,
                "orbits {} (mult {}) and {} (mult {}) collide at x={}",
                word_string(attracting),
                multipliers.0,
                word_string(repelling),
                multipliers.1,
                point
            ),
            Evidence::HausdorffJump { size } => write!(f, "support jump {size}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BifurcationEvent<T> {
    pub a_star: T,
    /// Half width of the bracket around `a_star`.
    pub bracket: T,
    pub kind: EventType,
    /// Set by `sweep`; detectors alone leave it empty.
    pub label: Option<Label>,
    pub evidence: Vec<Evidence<T>>,
    /// Unfolding derivatives: `(f^k)''` and `∂_a f^k` (saddle node), `∂_a gap`
    /// (homoclinic), or both `∂_a f^k` (boundary).
    pub unfolding: Vec<T>,
    pub generic: bool,
}

impl<T: Real> BifurcationEvent<T> {
    /// Evidence items joined by `"; "`.
    pub fn evidence_text(&self) -> String {
        let mut parts: Vec<String> = self.evidence.iter().map(|e| e.to_string()).collect();
        if !self.generic {
            parts.push("non-generic".to_string());
        }
        parts.join("; ")
    }
}

/// Controls shared by the detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectOptions<T> {
    pub k_max: usize,
    /// Requested bracket width.
    pub resolution: T,
    /// Parameter values in the coarse scan.
    pub scan_a: usize,
    /// Sample points of the `x`-scan for periodic orbits.
    pub scan_x: usize,
    /// Longest critical-orbit segment for homoclinic gaps.
    pub l_max: usize,
    /// Grid of the set-valued supports used to keep only events on a support
    /// boundary; `None` reports every candidate.
    pub support_cells: Option<usize>,
}

impl<T: Real> Default for DetectOptions<T> {
    fn default() -> Self {
        DetectOptions {
            k_max: 3,
            resolution: T::lit(1e-5),
            scan_a: 200,
            scan_x: 2048,
            l_max: 6,
            support_cells: Some(65_536),
        }
    }
}

impl<T: Real> DetectOptions<T> {
    fn check(&self, a_lo: T, a_hi: T) -> Result<()> {
        if !(a_lo.is_finite() && a_hi.is_finite() && a_lo < a_hi) {
            return Err(Error::precondition("parameter range must be finite with a_lo < a_hi"));
        }
        if !(self.resolution > T::zero()) {
            return Err(Error::precondition("resolution must be positive"));
        }
        if self.k_max == 0 || self.k_max > K_MAX_LIMIT {
            return Err(Error::precondition(format!("k_max must be in 1..={K_MAX_LIMIT}")));
        }
        if self.l_max == 0 || self.l_max > L_MAX_LIMIT {
            return Err(Error::precondition(format!("l_max must be in 1..={L_MAX_LIMIT}")));
        }
        if self.scan_a < 2 || self.scan_x < 16 {
            return Err(Error::precondition("scan_a >= 2 and scan_x >= 16 required"));
        }
        Ok(())
    }

    fn a_grid(&self, a_lo: T, a_hi: T) -> Vec<T> {
        linspace(a_lo, a_hi, self.scan_a)
    }
}

fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    let d = T::from_usize_lossy(n - 1);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * T::from_usize_lossy(i) / d })
        .collect()
}

fn sign<T: Real>(s: i8) -> T {
    if s > 0 {
        T::one()
    } else {
        -T::one()
    }
}

/// Lift of `f(·; word[k-1]) ∘ … ∘ f(·; word[0])` at `x`.
fn word_lift<T: Real, M: RandomMap<T>>(map: &M, x: T, word: &[i8]) -> T {
    word.iter().fold(x, |y, &s| map.lift(y, sign(s)))
}

/// Value and derivatives of the word composition at `x`.
#[derive(Debug, Clone, Copy)]
struct Jet<T> {
    value: T,
    d1: T,
    d2: T,
    da: T,
}

fn word_jet<T: Real, M: RandomMap<T>>(map: &M, x: T, word: &[i8]) -> Jet<T> {
    let mut j = Jet {
        value: x,
        d1: T::one(),
        d2: T::zero(),
        da: T::zero(),
    };
    for &s in word {
        let w = sign::<T>(s);
        let y = j.value;
        let fx = map.dx(y, w);
        j = Jet {
            value: map.lift(y, w),
            d1: fx * j.d1,
            d2: map.dxx(y, w) * j.d1 * j.d1 + fx * j.d2,
            da: map.da(y, w) + fx * j.da,
        };
    }
    j
}

/// Sign words of length `k` that are least among their rotations.
pub fn necklaces(k: usize) -> Vec<Vec<i8>> {
    let mut out = Vec::new();
    for bits in 0..(1u32 << k) {
        let w: Vec<i8> = (0..k).rev().map(|i| if bits >> i & 1 == 1 { 1 } else { -1 }).collect();
        if (1..k).all(|r| {
            let rot: Vec<i8> = w[r..].iter().chain(&w[..r]).copied().collect();
            w <= rot
        }) {
            out.push(w);
        }
    }
    out
}

fn bisect<T: Real, F: Fn(T) -> T>(f: F, mut lo: T, mut hi: T) -> T {
    let mut flo = f(lo);
    for _ in 0..200 {
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == T::zero() {
            return mid;
        }
        if (fm < T::zero()) == (flo < T::zero()) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    (lo + hi) / T::lit(2.0)
}

/// Newton polish of a root of `F(x) − x − m`, kept only when it lowers the residual.
fn polish<T: Real, M: RandomMap<T>>(map: &M, word: &[i8], mut x: T, m: T) -> T {
    let mut res = (word_lift(map, x, word) - x - m).abs();
    for _ in 0..4 {
        let j = word_jet(map, x, word);
        let d = j.d1 - T::one();
        if d == T::zero() {
            break;
        }
        let y = x - (j.value - x - m) / d;
        let r = (word_lift(map, y, word) - y - m).abs();
        if !(r < res) {
            break;
        }
        x = y;
        res = r;
    }
    x
}

/// Periodic points `x` (base coordinates) of the word composition, with their lift shift `m`.
fn word_roots<T: Real, M: RandomMap<T>>(map: &M, word: &[i8], scan: usize) -> Vec<(T, T)> {
    let space = map.space();
    let circle = space.is_circle();
    let (lo, len) = (space.lower(), space.length());
    let count = if circle { scan + 1 } else { scan };
    let xs: Vec<T> = (0..count)
        .map(|j| lo + len * (T::from_usize_lossy(j) + T::lit(0.5)) / T::from_usize_lossy(scan))
        .collect();
    let jets: Vec<Jet<T>> = xs.iter().map(|&x| word_jet(map, x, word)).collect();
    let g = |x: T| word_lift(map, x, word) - x;
    let mut roots: Vec<(T, T)> = Vec::new();
    let push = |x: T, m: T, roots: &mut Vec<(T, T)>| {
        let x = polish(map, word, x, m);
        if (word_lift(map, x, word) - x - m).abs() > T::lit(ORBIT_TOL) {
            return;
        }
        let xw = space.wrap(x);
        if !roots.iter().any(|&(y, _)| space.distance(xw, y) <= T::lit(1e-9)) {
            roots.push((xw, m));
        }
    };
    for j in 0..count - 1 {
        let (x0, x1) = (xs[j], xs[j + 1]);
        let (g0, g1) = (jets[j].value - x0, jets[j + 1].value - x1);
        let shifts: Vec<T> = if circle {
            let (a, b) = (g0.min(g1).ceil(), g0.max(g1).floor());
            let mut v = Vec::new();
            let mut m = a;
            while m <= b {
                v.push(m);
                m += T::one();
            }
            v
        } else {
            vec![T::zero()]
        };
        let mut found = false;
        for m in shifts {
            let (h0, h1) = (g0 - m, g1 - m);
            if h0 == T::zero() {
                push(x0, m, &mut roots);
                found = true;
            } else if h1 != T::zero() && (h0 < T::zero()) != (h1 < T::zero()) {
                push(bisect(|x| g(x) - m, x0, x1), m, &mut roots);
                found = true;
            }
        }
        let (s0, s1) = (jets[j].d1 - T::one(), jets[j + 1].d1 - T::one());
        if !found && (s0 < T::zero()) != (s1 < T::zero()) {
            let xt = bisect(|x| word_jet(map, x, word).d1 - T::one(), x0, x1);
            let gt = g(xt);
            let m = if circle { gt.round() } else { T::zero() };
            if (gt - m).abs() <= T::lit(ORBIT_TOL) {
                push(xt, m, &mut roots);
            }
        }
    }
    roots.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    roots
}

/// The orbit through `x` with its multiplier, or `None` when it has a shorter period.
fn orbit_through<T: Real, M: RandomMap<T>>(map: &M, word: &[i8], x: T) -> Option<ExtremalOrbit<T>> {
    let space = map.space();
    let k = word.len();
    for d in (1..k).filter(|d| k.is_multiple_of(*d)) {
        let y = word_lift(map, x, &word[..d]) - x;
        let m = if space.is_circle() { y.round() } else { T::zero() };
        if (y - m).abs() <= T::lit(1e-9) {
            return None;
        }
    }
    let mut points = Vec::with_capacity(k);
    let mut mult = T::one();
    let mut y = x;
    for &s in word {
        points.push(y);
        mult *= map.dx(y, sign(s));
        y = space.wrap(map.lift(y, sign(s)));
    }
    Some(ExtremalOrbit {
        period: k,
        word: word.to_vec(),
        points,
        multiplier: mult,
        stability: Stability::classify(mult),
    })
}

/// Periodic orbits of every extremal sign word of length `≤ k_max`, found by a
/// sign-change scan on `scan` points refined by bisection and Newton.
pub fn find_extremal_orbits<T: Real, M: RandomMap<T>>(map: &M, k_max: usize, scan: usize) -> Result<Vec<ExtremalOrbit<T>>> {
    if k_max == 0 || k_max > K_MAX_LIMIT {
        return Err(Error::precondition(format!("k_max must be in 1..={K_MAX_LIMIT}")));
    }
    if scan < 16 {
        return Err(Error::precondition("scan must be at least 16"));
    }
    let space = map.space();
    let mut out: Vec<ExtremalOrbit<T>> = Vec::new();
    for k in 1..=k_max {
        for word in necklaces(k) {
            for (x, _) in word_roots(map, &word, scan) {
                let Some(orbit) = orbit_through(map, &word, x) else { continue };
                let dup = out
                    .iter()
                    .any(|o| o.word == word && o.points.iter().any(|&p| space.distance(p, x) <= T::lit(1e-9)));
                if !dup {
                    out.push(orbit);
                }
            }
        }
    }
    Ok(out)
}

/// Newton continuation of a periodic point of `word` from `x` (lift shift `m`).
fn continue_root<T: Real, M: RandomMap<T>>(map: &M, word: &[i8], x: T, m: T) -> Option<T> {
    let space = map.space();
    let mut y = x;
    for _ in 0..50 {
        let j = word_jet(map, y, word);
        let r = j.value - y - m;
        if r.abs() <= T::lit(1e-13) {
            break;
        }
        let d = j.d1 - T::one();
        if d.abs() < T::lit(1e-12) {
            return None;
        }
        y -= r / d;
        if !y.is_finite() {
            return None;
        }
    }
    let r = (word_lift(map, y, word) - y - m).abs();
    (r <= T::lit(ORBIT_TOL) && space.distance(space.wrap(y), space.wrap(x)) < T::lit(0.05)).then(|| space.wrap(y))
}

fn lift_shift<T: Real, M: RandomMap<T>>(map: &M, word: &[i8], x: T) -> T {
    let y = word_lift(map, x, word) - x;
    if map.space().is_circle() {
        y.round()
    } else {
        T::zero()
    }
}

/// Orbit of `word` continued from the orbit `o` (same word) to the map `map`.
fn continue_orbit<T: Real, M: RandomMap<T>>(map: &M, o: &ExtremalOrbit<T>, last_good: T) -> Result<ExtremalOrbit<T>> {
    let m = lift_shift(map, &o.word, o.points[0]);
    continue_root(map, &o.word, o.points[0], m)
        .and_then(|x| orbit_through(map, &o.word, x))
        .ok_or(Error::LostTrack { last_good: last_good.as_f64() })
}

/// Signed difference `x − y`, wrapped to `[−1/2, 1/2)` on the circle.
fn signed_diff<T: Real, M: RandomMap<T>>(map: &M, x: T, y: T) -> T {
    let d = x - y;
    if map.space().is_circle() {
        d - d.round()
    } else {
        d
    }
}

fn near_support_boundary<T: Real, M: RandomMap<T>>(map: &M, s: &SupportSet<T>, points: &[T], tol: T) -> bool {
    let space = map.space();
    let ends = support_endpoints(s);
    points.iter().any(|&p| ends.iter().any(|&e| space.distance(p, e) <= tol))
}

fn support_grid<T: Real, M: RandomMap<T>>(map: &M, cells: Option<usize>) -> Result<Option<Grid<T>>> {
    cells.map(|n| Grid::new(map.space(), n)).transpose()
}

/// Random saddle-node bifurcations: parameter values where two extremal
/// periodic orbits of one sign word (multipliers on either side of 1) merge.
///
/// The number of periodic points of every word is scanned in `a`; changes are
/// bisected to `resolution`. With `support_cells` set, only events whose orbit
/// lies on the boundary of the set-valued support are kept.
pub fn detect_saddle_node<T: Real, M: RandomMap<T>>(map: &M, a_lo: T, a_hi: T, opts: &DetectOptions<T>) -> Result<Vec<BifurcationEvent<T>>> {
    opts.check(a_lo, a_hi)?;
    let sgrid = support_grid(map, opts.support_cells)?;
    let words: Vec<Vec<i8>> = (1..=opts.k_max).flat_map(necklaces).collect();
    let a_grid = opts.a_grid(a_lo, a_hi);
    let count = |a: T, w: &[i8]| word_roots(&map.with_parameter(a), w, opts.scan_x).len();
    let counts: Vec<Vec<usize>> = a_grid.par_iter().map(|&a| words.iter().map(|w| count(a, w)).collect()).collect();
    let space = map.space();
    let mut events = Vec::new();
    for (wi, word) in words.iter().enumerate() {
        for n in 0..a_grid.len() - 1 {
            if counts[n][wi] == counts[n + 1][wi] {
                continue;
            }
            let (mut lo, mut hi) = (a_grid[n], a_grid[n + 1]);
            let c_lo = counts[n][wi];
            while hi - lo > opts.resolution {
                let mid = (lo + hi) / T::lit(2.0);
                if count(mid, word) == c_lo {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let (a_more, a_less) = if count(lo, word) > count(hi, word) { (lo, hi) } else { (hi, lo) };
            let fm = map.with_parameter(a_more);
            let Some((x_att, x_rep, _)) = colliding_pair(&fm, word, opts.scan_x, None) else {
                continue;
            };
            let (Some(oa), Some(_)) = (orbit_through(&fm, word, x_att), orbit_through(&fm, word, x_rep)) else {
                continue;
            };
            if let Some(g) = &sgrid {
                let s = set_valued_support(&fm, g);
                if !near_support_boundary(&fm, &s, &oa.points, T::lit(4.0) * g.width()) {
                    continue;
                }
            }
            let xbar = space.wrap(x_att + signed_diff(&fm, x_rep, x_att) / T::lit(2.0));
            let dir = if a_more > a_less { T::one() } else { -T::one() };
            let mut trace = Vec::new();
            for j in 0..6 {
                let aj = a_more + dir * opts.resolution * T::from_usize_lossy(j);
                let mj = map.with_parameter(aj);
                if let Some((xa, xr, _)) = colliding_pair(&mj, word, opts.scan_x, Some(xbar)) {
                    trace.push((aj, word_jet(&mj, xa, word).d1, word_jet(&mj, xr, word).d1));
                }
            }
            let jet = word_jet(&fm, xbar, word);
            let tol = T::lit(GENERICITY_TOL);
            events.push(BifurcationEvent {
                a_star: (lo + hi) / T::lit(2.0),
                bracket: (hi - lo) / T::lit(2.0),
                kind: EventType::SaddleNode,
                label: None,
                evidence: vec![Evidence::MultiplierTrace {
                    word: word.clone(),
                    point: xbar,
                    trace,
                }],
                unfolding: vec![jet.d2, jet.da],
                generic: jet.d2.abs() > tol && jet.da.abs() > tol,
            });
        }
    }
    Ok(merge_events(events, opts.resolution))
}

/// Closest pair of adjacent periodic points of `word` with multipliers on either
/// side of 1, as `(attracting, repelling, separation)`; with `near`, the pair
/// closest to that point.
fn colliding_pair<T: Real, M: RandomMap<T>>(map: &M, word: &[i8], scan: usize, near: Option<T>) -> Option<(T, T, T)> {
    let space = map.space();
    let roots: Vec<T> = word_roots(map, word, scan).into_iter().map(|r| r.0).collect();
    let n = roots.len();
    if n < 2 {
        return None;
    }
    let pairs = if space.is_circle() { n } else { n - 1 };
    let mut best: Option<(T, T, T, T)> = None;
    for i in 0..pairs {
        let (x, y) = (roots[i], roots[(i + 1) % n]);
        let (mx, my) = (word_jet(map, x, word).d1, word_jet(map, y, word).d1);
        let half = T::lit(0.5);
        if (mx - T::one()) * (my - T::one()) > T::zero() || (mx - T::one()).abs() > half || (my - T::one()).abs() > half {
            continue;
        }
        let sep = space.distance(x, y);
        let key = near.map(|z| space.distance(x, z).min(space.distance(y, z))).unwrap_or(sep);
        let (att, rep) = if mx < my { (x, y) } else { (y, x) };
        if best.map(|b| key < b.3).unwrap_or(true) {
            best = Some((att, rep, sep, key));
        }
    }
    best.map(|b| (b.0, b.1, b.2))
}

/// Merge events of the same kind closer than two brackets, keeping the one
/// with the shortest evidence word.
fn merge_events<T: Real>(mut events: Vec<BifurcationEvent<T>>, resolution: T) -> Vec<BifurcationEvent<T>> {
    events.sort_by(|a, b| a.a_star.partial_cmp(&b.a_star).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<BifurcationEvent<T>> = Vec::new();
    for e in events {
        if let Some(last) = out.last_mut() {
            if last.kind == e.kind && (e.a_star - last.a_star).abs() <= T::lit(2.0) * (resolution + last.bracket + e.bracket) {
                if evidence_len(&e) < evidence_len(last) {
                    *last = e;
                }
                continue;
            }
        }
        out.push(e);
    }
    out
}

fn evidence_len<T>(e: &BifurcationEvent<T>) -> usize {
    e.evidence
        .iter()
        .map(|v| match v {
            Evidence::MultiplierTrace { word, .. } => word.len(),
            Evidence::CriticalOrbitGap { word, orbit_word, .. } => 16 * word.len() + orbit_word.len(),
            Evidence::CollidingPair { attracting, repelling, .. } => attracting.len() + repelling.len(),
            Evidence::HausdorffJump { .. } => usize::MAX / 2,
        })
        .min()
        .unwrap_or(usize::MAX)
}

/// Points `f^l(c; word)` for every critical point `c` and sign word of length `1..=l_max`.
fn critical_values<T: Real, M: RandomMap<T>>(map: &M, l_max: usize) -> Vec<(T, Vec<i8>, T)> {
    let space = map.space();
    let mut out = Vec::new();
    for c in map.critical_points() {
        let mut level: Vec<(Vec<i8>, T)> = vec![(Vec::new(), c)];
        for _ in 0..l_max {
            let mut next = Vec::with_capacity(level.len() * 2);
            for (w, y) in &level {
                for s in [-1i8, 1] {
                    let mut w2 = w.clone();
                    w2.push(s);
                    let z = space.wrap(map.lift(*y, sign(s)));
                    out.push((c, w2.clone(), z));
                    next.push((w2, z));
                }
            }
            level = next;
        }
    }
    out
}

/// Matching orbit (same word, nearest first point within 0.05) in `list`.
fn matching<'a, T: Real, M: RandomMap<T>>(map: &M, o: &ExtremalOrbit<T>, list: &'a [ExtremalOrbit<T>]) -> Option<&'a ExtremalOrbit<T>> {
    let space = map.space();
    list.iter()
        .filter(|p| p.word == o.word)
        .map(|p| (space.distance(p.points[0], o.points[0]), p))
        .filter(|(d, _)| *d < T::lit(0.05))
        .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(_, p)| p)
}

struct Scan<T> {
    a: T,
    orbits: Vec<ExtremalOrbit<T>>,
    support: Option<SupportSet<T>>,
}

fn scan_orbits<T: Real, M: RandomMap<T>>(map: &M, a_lo: T, a_hi: T, opts: &DetectOptions<T>, sgrid: Option<&Grid<T>>) -> Result<Vec<Scan<T>>> {
    opts.a_grid(a_lo, a_hi)
        .par_iter()
        .map(|&a| {
            let m = map.with_parameter(a);
            let orbits = find_extremal_orbits(&m, opts.k_max, opts.scan_x)?
                .into_iter()
                .filter(|o| o.is_hyperbolic())
                .collect();
            Ok(Scan {
                a,
                orbits,
                support: sgrid.map(|g| set_valued_support(&m, g)),
            })
        })
        .collect()
}

/// Scan indices `n` where the support changes abruptly between `a_n` and `a_{n+1}`.
fn support_jumps<T: Real>(scans: &[Scan<T>], cell: T) -> Vec<usize> {
    let d: Vec<T> = scans
        .windows(2)
        .map(|w| match (&w[0].support, &w[1].support) {
            (Some(s0), Some(s1)) => hausdorff(s0, s1),
            _ => T::zero(),
        })
        .collect();
    let thresh = (T::lit(10.0) * median(&d)).max(T::lit(8.0) * cell);
    (0..d.len())
        .filter(|&n| {
            let (Some(s0), Some(s1)) = (&scans[n].support, &scans[n + 1].support) else {
                return false;
            };
            d[n] > thresh || s0.len() != s1.len()
        })
        .collect()
}

fn median<T: Real>(v: &[T]) -> T {
    let mut w: Vec<T> = v.iter().copied().filter(|x| x.is_finite()).collect();
    if w.is_empty() {
        return T::zero();
    }
    w.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    w[w.len() / 2]
}

/// Random homoclinic bifurcations: an iterate `f^l(c; word)` of a critical
/// point crosses a point of a hyperbolic extremal periodic orbit.
///
/// `orbit_word` restricts the tracked orbits to one sign word (any rotation).
/// With `support_cells` set, a crossing is kept only when the set-valued
/// support jumps within a few scan steps of it and the orbit point lies on the
/// support boundary; one event (shortest `l`) is reported per jump.
pub fn detect_homoclinic<T: Real, M: RandomMap<T>>(
    map: &M,
    a_lo: T,
    a_hi: T,
    orbit_word: Option<&[i8]>,
    opts: &DetectOptions<T>,
) -> Result<Vec<BifurcationEvent<T>>> {
    opts.check(a_lo, a_hi)?;
    if map.critical_points().is_empty() {
        return Ok(Vec::new());
    }
    let canon = orbit_word.map(canonical);
    let sgrid = support_grid(map, opts.support_cells)?;
    let mut scans = scan_orbits(map, a_lo, a_hi, opts, sgrid.as_ref())?;
    if let Some(w) = &canon {
        scans.iter_mut().for_each(|s| s.orbits.retain(|o| &o.word == w));
    }
    let jumps = match &sgrid {
        Some(g) => {
            let j = support_jumps(&scans, g.width());
            if j.is_empty() {
                return Ok(Vec::new());
            }
            Some(j)
        }
        None => None,
    };
    const NEAR_JUMP: usize = 6;
    let near_jump = |n: usize| {
        jumps
            .as_ref()
            .map(|j| j.iter().any(|&k| n + NEAR_JUMP >= k && n <= k + NEAR_JUMP))
            .unwrap_or(true)
    };
    let mut candidates = Vec::new();
    for n in (0..scans.len() - 1).filter(|&n| near_jump(n)) {
        let m0 = map.with_parameter(scans[n].a);
        let m1 = map.with_parameter(scans[n + 1].a);
        let v0 = critical_values(&m0, opts.l_max);
        let v1 = critical_values(&m1, opts.l_max);
        for o in &scans[n].orbits {
            let Some(o1) = matching(map, o, &scans[n + 1].orbits) else { continue };
            for i in 0..o.period {
                for (v, (c, w, y0)) in v0.iter().enumerate() {
                    let g0 = signed_diff(&m0, *y0, o.points[i]);
                    let g1 = signed_diff(&m1, v1[v].2, o1.points[i]);
                    if g0.abs() < T::lit(0.25) && g1.abs() < T::lit(0.25) && g0 != g1 && (g0 <= T::zero()) != (g1 <= T::zero()) {
                        candidates.push((n, refine_gap(map, scans[n].a, scans[n + 1].a, o, i, *c, w, opts.resolution)?));
                    }
                }
            }
        }
    }
    let events = match (&sgrid, &jumps) {
        (Some(g), Some(jumps)) => {
            let mut out = Vec::new();
            for &k in jumps {
                let a_mid = (scans[k].a + scans[k + 1].a) / T::lit(2.0);
                let best = candidates
                    .iter()
                    .filter(|(n, _)| *n + NEAR_JUMP >= k && *n <= k + NEAR_JUMP)
                    .filter(|(n, e)| match &e.evidence[0] {
                        // the critical orbit moves |∂a gap| |a − a*| away from the point at a flank
                        Evidence::CriticalOrbitGap { point, .. } => [k, k + 1, *n, *n + 1].iter().any(|&j| {
                            let tol = T::lit(16.0) * g.width() + e.unfolding[0].abs() * (scans[j].a - e.a_star).abs();
                            scans[j].support.as_ref().is_some_and(|s| near_support_boundary(map, s, &[*point], tol))
                        }),
                        _ => false,
                    })
                    .map(|(_, e)| e)
                    .min_by(|x, y| {
                        (evidence_len(x), (x.a_star - a_mid).abs())
                            .partial_cmp(&(evidence_len(y), (y.a_star - a_mid).abs()))
                            .unwrap_or(std::cmp::Ordering::Equal)
                    });
                if let Some(e) = best {
                    out.push(e.clone());
                }
            }
            out
        }
        _ => candidates.into_iter().map(|c| c.1).collect(),
    };
    Ok(merge_events(events, opts.resolution))
}

/// Lexicographically least rotation of `w`.
fn canonical(w: &[i8]) -> Vec<i8> {
    (0..w.len())
        .map(|r| w[r..].iter().chain(&w[..r]).copied().collect::<Vec<i8>>())
        .min()
        .unwrap_or_default()
}

#[allow(clippy::too_many_arguments)]
fn refine_gap<T: Real, M: RandomMap<T>>(
    map: &M,
    a0: T,
    a1: T,
    o: &ExtremalOrbit<T>,
    i: usize,
    c: T,
    word: &[i8],
    resolution: T,
) -> Result<BifurcationEvent<T>> {
    let gap = |a: T, from: &ExtremalOrbit<T>, last_good: T| -> Result<(T, ExtremalOrbit<T>)> {
        let m = map.with_parameter(a);
        let orb = continue_orbit(&m, from, last_good)?;
        let y = m.space().wrap(word_lift(&m, c, word));
        Ok((signed_diff(&m, y, orb.points[i]), orb))
    };
    let (mut lo, mut hi) = (a0, a1);
    let (g_lo0, mut o_lo) = gap(lo, o, lo)?;
    let (g_hi0, _) = gap(hi, &o_lo, lo)?;
    let mut g_lo = g_lo0;
    while hi - lo > resolution {
        let mid = (lo + hi) / T::lit(2.0);
        let (gm, om) = gap(mid, &o_lo, lo)?;
        if (gm <= T::zero()) == (g_lo <= T::zero()) {
            lo = mid;
            g_lo = gm;
            o_lo = om;
        } else {
            hi = mid;
        }
    }
    let slope = (g_hi0 - g_lo0) / (a1 - a0);
    Ok(BifurcationEvent {
        a_star: (lo + hi) / T::lit(2.0),
        bracket: (hi - lo) / T::lit(2.0),
        kind: EventType::Homoclinic,
        label: None,
        evidence: vec![Evidence::CriticalOrbitGap {
            critical: c,
            word: word.to_vec(),
            orbit_word: o.word.clone(),
            point: o_lo.points[i],
            gaps: (g_lo0, g_hi0),
        }],
        unfolding: vec![slope],
        generic: slope.abs() > T::lit(GENERICITY_TOL),
    })
}

/// Random boundary bifurcations: a point of an attracting extremal orbit meets
/// a point of a repelling extremal orbit with a different sign word.
///
/// With `support_cells` set, only collisions on the boundary of the set-valued
/// support are kept.
pub fn detect_boundary<T: Real, M: RandomMap<T>>(map: &M, a_lo: T, a_hi: T, opts: &DetectOptions<T>) -> Result<Vec<BifurcationEvent<T>>> {
    opts.check(a_lo, a_hi)?;
    let sgrid = support_grid(map, opts.support_cells)?;
    let scans = scan_orbits(map, a_lo, a_hi, opts, None)?;
    let mut events = Vec::new();
    for n in 0..scans.len() - 1 {
        let m0 = map.with_parameter(scans[n].a);
        let m1 = map.with_parameter(scans[n + 1].a);
        let orbits = &scans[n].orbits;
        for oa in orbits.iter().filter(|o| o.stability == Stability::Attracting) {
            let Some(oa1) = matching(map, oa, &scans[n + 1].orbits).filter(|o| o.stability == Stability::Attracting) else {
                continue;
            };
            for or in orbits.iter().filter(|o| o.stability == Stability::Repelling && o.word != oa.word) {
                let Some(or1) = matching(map, or, &scans[n + 1].orbits).filter(|o| o.stability == Stability::Repelling) else {
                    continue;
                };
                for i in 0..oa.period {
                    for j in 0..or.period {
                        let d0 = signed_diff(&m0, oa.points[i], or.points[j]);
                        let d1 = signed_diff(&m1, oa1.points[i], or1.points[j]);
                        if d0.abs() < T::lit(0.1) && d1.abs() < T::lit(0.1) && d0 != d1 && (d0 <= T::zero()) != (d1 <= T::zero()) {
                            let e = refine_collision(map, scans[n].a, scans[n + 1].a, oa, or, i, j, opts.resolution)?;
                            if let (Some(g), Evidence::CollidingPair { point, .. }) = (&sgrid, &e.evidence[0]) {
                                let fm = map.with_parameter(e.a_star);
                                let s = set_valued_support(&fm, g);
                                if !near_support_boundary(&fm, &s, &[*point], T::lit(4.0) * g.width()) {
                                    continue;
                                }
                            }
                            events.push(e);
                        }
                    }
                }
            }
        }
    }
    // collisions at one parameter value (several point pairs) are one event
    events.sort_by(|a, b| a.a_star.partial_cmp(&b.a_star).unwrap_or(std::cmp::Ordering::Equal));
    let mut out: Vec<BifurcationEvent<T>> = Vec::new();
    for e in events {
        match out.last_mut() {
            Some(last) if (e.a_star - last.a_star).abs() <= T::lit(2.0) * (opts.resolution + last.bracket + e.bracket) => {
                last.evidence.extend(e.evidence);
                last.generic &= e.generic;
            }
            _ => out.push(e),
        }
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn refine_collision<T: Real, M: RandomMap<T>>(
    map: &M,
    a0: T,
    a1: T,
    oa: &ExtremalOrbit<T>,
    or: &ExtremalOrbit<T>,
    i: usize,
    j: usize,
    resolution: T,
) -> Result<BifurcationEvent<T>> {
    let diff = |a: T, fa: &ExtremalOrbit<T>, fr: &ExtremalOrbit<T>, last_good: T| -> Result<(T, ExtremalOrbit<T>, ExtremalOrbit<T>)> {
        let m = map.with_parameter(a);
        let pa = continue_orbit(&m, fa, last_good)?;
        let pr = continue_orbit(&m, fr, last_good)?;
        Ok((signed_diff(&m, pa.points[i], pr.points[j]), pa, pr))
    };
    let (mut lo, mut hi) = (a0, a1);
    let (mut d_lo, mut pa, mut pr) = diff(lo, oa, or, lo)?;
    while hi - lo > resolution {
        let mid = (lo + hi) / T::lit(2.0);
        let (dm, qa, qr) = diff(mid, &pa, &pr, lo)?;
        if (dm <= T::zero()) == (d_lo <= T::zero()) {
            lo = mid;
            d_lo = dm;
            pa = qa;
            pr = qr;
        } else {
            hi = mid;
        }
    }
    let m = map.with_parameter(lo);
    let rot = |w: &[i8], k: usize| -> Vec<i8> { w[k..].iter().chain(&w[..k]).copied().collect() };
    let da_a = word_jet(&m, pa.points[i], &rot(&pa.word, i)).da;
    let da_r = word_jet(&m, pr.points[j], &rot(&pr.word, j)).da;
    Ok(BifurcationEvent {
        a_star: (lo + hi) / T::lit(2.0),
        bracket: (hi - lo) / T::lit(2.0),
        kind: EventType::Boundary,
        label: None,
        evidence: vec![Evidence::CollidingPair {
            attracting: pa.word.clone(),
            repelling: pr.word.clone(),
            point: pa.points[i],
            multipliers: (pa.multiplier, pr.multiplier),
        }],
        unfolding: vec![da_a, da_r],
        generic: displacements_differ(da_a, da_r),
    })
}

/// Genericity of a boundary collision: the two `∂_a f^k` differ by more than the threshold.
pub fn displacements_differ<T: Real>(da_attracting: T, da_repelling: T) -> bool {
    (da_attracting - da_repelling).abs() > T::lit(GENERICITY_TOL)
}

/// Controls of `sweep`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions<T> {
    pub steps: usize,
    /// Ulam grid cells.
    pub grid_cells: usize,
    /// Grid of the set-valued supports.
    pub support_cells: usize,
    /// Eigenpairs computed per point.
    pub eigen_k: usize,
    pub eigen_tol: T,
    /// Run the three detectors and merge their events.
    pub detectors: bool,
    pub detect: DetectOptions<T>,
}

impl<T: Real> Default for SweepOptions<T> {
    fn default() -> Self {
        SweepOptions {
            steps: 101,
            grid_cells: 2048,
            support_cells: 65_536,
            eigen_k: 4,
            eigen_tol: T::lit(1e-8),
            detectors: true,
            detect: DetectOptions::default(),
        }
    }
}

/// Record of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub a: T,
    /// Number of stationary measures (multiplicity of eigenvalue 1).
    pub m: usize,
    /// Eigenvalues on the unit circle (including 1).
    pub n_peripheral: usize,
    /// Components of the set-valued support.
    pub components: Vec<(T, T)>,
    pub hausdorff_prev: Option<T>,
    /// Sup-norm distance between the mean stationary densities of this and the previous point.
    pub supdist_prev: Option<T>,
    pub eta: T,
    /// Mean of the stationary densities (cell values).
    pub density: Vec<T>,
    pub error: Option<String>,
}

impl<T> SweepPoint<T> {
    pub fn n_components(&self) -> usize {
        self.components.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport<T> {
    pub a: Vec<T>,
    pub points: Vec<SweepPoint<T>>,
    /// Sorted by `a_star`.
    pub events: Vec<BifurcationEvent<T>>,
    pub notes: Vec<String>,
}

fn sweep_point<T: Real, M: RandomMap<T>>(map: &M, a: T, grid: &Grid<T>, sgrid: &Grid<T>, opts: &SweepOptions<T>) -> (SweepPoint<T>, SupportSet<T>) {
    let m = map.with_parameter(a);
    let support = set_valued_support(&m, sgrid);
    let mut p = SweepPoint {
        a,
        m: 0,
        n_peripheral: 0,
        components: support.components.clone(),
        hausdorff_prev: None,
        supdist_prev: None,
        eta: T::nan(),
        density: Vec::new(),
        error: None,
    };
    let spectral = build_ulam(&m, grid, DEFAULT_QUADRATURE)
        .and_then(|u| eigen(&u, opts.eigen_k.min(u.dim()), opts.eigen_tol))
        .and_then(|s| stationary_densities(&s).map(|d| (s, d)));
    match spectral {
        Ok((s, d)) => {
            p.m = s.unit_multiplicity;
            p.n_peripheral = s.groups.iter().filter(|g| **g != Group::Interior).count();
            p.eta = s.eta;
            let k = T::from_usize_lossy(d.len());
            p.density = (0..grid.n_cells).map(|i| d.iter().map(|v| v[i]).sum::<T>() / k).collect();
        }
        Err(e) => p.error = Some(e.to_string()),
    }
    (p, support)
}

/// Sweep of the parameter over `steps` equally spaced values.
///
/// Every point records the number of stationary measures, the set-valued
/// support, the decay rate and the distances to the previous point. A step
/// whose support Hausdorff distance exceeds ten times the median step distance
/// is a support jump, bisected to the detector resolution and labeled by
/// comparing `m` at its two flanking points. Detector events within a few
/// steps of a jump replace its type.
pub fn sweep<T: Real, M: RandomMap<T>>(map: &M, a_lo: T, a_hi: T, opts: &SweepOptions<T>) -> Result<SweepReport<T>> {
    if opts.steps < 2 {
        return Err(Error::precondition("steps must be at least 2"));
    }
    if !(a_lo.is_finite() && a_hi.is_finite() && a_lo < a_hi) {
        return Err(Error::precondition("parameter range must be finite with a_lo < a_hi"));
    }
    let grid = Grid::new(map.space(), opts.grid_cells)?;
    let sgrid = Grid::new(map.space(), opts.support_cells)?;
    let a = linspace(a_lo, a_hi, opts.steps);
    let (mut points, supports): (Vec<SweepPoint<T>>, Vec<SupportSet<T>>) = a.par_iter().map(|&x| sweep_point(map, x, &grid, &sgrid, opts)).unzip();
    for i in 1..points.len() {
        points[i].hausdorff_prev = Some(hausdorff(&supports[i - 1], &supports[i]));
        let (prev, cur) = (&points[i - 1].density, &points[i].density);
        if !prev.is_empty() && !cur.is_empty() {
            points[i].supdist_prev = Some(prev.iter().zip(cur).map(|(x, y)| (*x - *y).abs()).fold(T::zero(), T::max));
        }
    }
    let mut notes: Vec<String> = points.iter().filter_map(|p| p.error.as_ref().map(|e| format!("a = {}: {e}", p.a))).collect();
    let d: Vec<T> = points.iter().filter_map(|p| p.hausdorff_prev).collect();
    let thresh = (T::lit(10.0) * median(&d)).max(T::lit(4.0) * sgrid.width());
    let step = (a_hi - a_lo) / T::from_usize_lossy(opts.steps - 1);
    let resolution = opts.detect.resolution;
    let label_at = |a_star: T| -> Option<Label> {
        let i = points.iter().position(|p| p.a >= a_star)?;
        if i == 0 {
            return None;
        }
        let (l, r) = (&points[i - 1], &points[i]);
        if l.error.is_some() || r.error.is_some() {
            return None;
        }
        Some(if l.m == r.m { Label::Intermittency } else { Label::Transient })
    };
    let mut jumps: Vec<BifurcationEvent<T>> = Vec::new();
    let mut i = 1;
    while i < points.len() {
        let h = points[i].hausdorff_prev.unwrap_or(T::zero());
        let count_change = supports[i].len() != supports[i - 1].len();
        if !(h > thresh || count_change) {
            i += 1;
            continue;
        }
        // adjacent jump steps belong to one event; keep the largest
        let mut k = i;
        while k + 1 < points.len() && points[k + 1].hausdorff_prev.unwrap_or(T::zero()) > thresh {
            k += 1;
        }
        let best = (i..=k)
            .max_by(|&x, &y| {
                points[x]
                    .hausdorff_prev
                    .partial_cmp(&points[y].hausdorff_prev)
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .unwrap_or(i);
        let (lo, hi) = refine_jump(
            map,
            &sgrid,
            points[best - 1].a,
            points[best].a,
            &supports[best - 1],
            &supports[best],
            resolution,
        );
        let size = points[best].hausdorff_prev.unwrap_or(T::zero());
        jumps.push(BifurcationEvent {
            a_star: (lo + hi) / T::lit(2.0),
            bracket: (hi - lo) / T::lit(2.0),
            kind: EventType::SupportJump,
            label: label_at(points[best].a),
            evidence: vec![Evidence::HausdorffJump { size }],
            unfolding: Vec::new(),
            generic: true,
        });
        i = k + 1;
    }
    let mut detected: Vec<BifurcationEvent<T>> = Vec::new();
    if opts.detectors {
        let dopts = DetectOptions {
            support_cells: Some(opts.support_cells),
            ..opts.detect
        };
        let (sn, (hc, bd)) = rayon::join(
            || detect_saddle_node(map, a_lo, a_hi, &dopts),
            || rayon::join(|| detect_homoclinic(map, a_lo, a_hi, None, &dopts), || detect_boundary(map, a_lo, a_hi, &dopts)),
        );
        for r in [sn, hc, bd] {
            match r {
                Ok(ev) => detected.extend(ev),
                Err(e) => notes.push(format!("detector failed: {e}")),
            }
        }
    }
    let merge_tol = T::lit(6.0) * step;
    let mut used = vec![false; detected.len()];
    let mut events = Vec::new();
    for j in jumps {
        let near = detected
            .iter()
            .enumerate()
            .filter(|(k, e)| !used[*k] && (e.a_star - j.a_star).abs() <= merge_tol + e.bracket + j.bracket)
            .min_by(|x, y| {
                (x.1.a_star - j.a_star)
                    .abs()
                    .partial_cmp(&(y.1.a_star - j.a_star).abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
            .map(|(k, _)| k);
        match near {
            Some(k) => {
                used[k] = true;
                let mut e = detected[k].clone();
                e.label = j.label;
                e.evidence.extend(j.evidence);
                events.push(e);
            }
            None => events.push(j),
        }
    }
    for (k, mut e) in detected.into_iter().enumerate() {
        if !used[k] {
            e.label = label_at(e.a_star);
            events.push(e);
        }
    }
    events.sort_by(|x, y| x.a_star.partial_cmp(&y.a_star).unwrap_or(std::cmp::Ordering::Equal));
    for e in events.iter().filter(|e| !e.generic) {
        notes.push(format!("non-generic {} event at a = {}", e.kind.as_str(), e.a_star));
    }
    Ok(SweepReport { a, points, events, notes })
}

/// Bisection of a support jump between `a0` and `a1` to `resolution`.
fn refine_jump<T: Real, M: RandomMap<T>>(map: &M, sgrid: &Grid<T>, a0: T, a1: T, s0: &SupportSet<T>, s1: &SupportSet<T>, resolution: T) -> (T, T) {
    let (mut lo, mut hi) = (a0, a1);
    let (mut slo, mut shi) = (s0.clone(), s1.clone());
    while hi - lo > resolution {
        let mid = (lo + hi) / T::lit(2.0);
        let sm = set_valued_support(&map.with_parameter(mid), sgrid);
        if hausdorff(&slo, &sm) >= hausdorff(&sm, &shi) {
            hi = mid;
            shi = sm;
        } else {
            lo = mid;
            slo = sm;
        }
    }
    (lo, hi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_map, Family, NoiseModel, PhaseSpace, RandomMap1D};
    use proptest::prelude::*;

    const EPS: f64 = 0.9;

    fn circle(a: f64, sigma: f64) -> RandomMap1D<f64> {
        make_map(Family::StandardCircle { a, eps: EPS, sigma }, NoiseModel::UNIFORM).unwrap()
    }

    fn logistic(a: f64, sigma: f64) -> RandomMap1D<f64> {
        make_map(Family::Logistic { a, sigma }, NoiseModel::UNIFORM).unwrap()
    }

    fn quick() -> DetectOptions<f64> {
        DetectOptions {
            scan_a: 80,
            scan_x: 1024,
            support_cells: Some(16_384),
            ..DetectOptions::default()
        }
    }

    /// `(1+ω)/2 f₊ + (1−ω)/2 f₋` with `f₊ = x − (0.1/2π) sin 2π(x − 0.3 − a)` and
    /// `f₋ = x + (0.8/2π) sin 2π(x − 0.3)`: the `+` attractor `0.3 + a` meets the
    /// `−+` repeller at `a = 0`.
    #[derive(Clone, Copy)]
    struct Crossing {
        a: f64,
    }

    impl RandomMap<f64> for Crossing {
        fn space(&self) -> PhaseSpace<f64> {
            PhaseSpace::circle()
        }
        fn noise(&self) -> NoiseModel {
            NoiseModel::UNIFORM
        }
        fn lift(&self, x: f64, w: f64) -> f64 {
            let tau = std::f64::consts::TAU;
            let up = x - 0.1 / tau * (tau * (x - 0.3 - self.a)).sin();
            let down = x + 0.8 / tau * (tau * (x - 0.3)).sin();
            (1.0 + w) / 2.0 * up + (1.0 - w) / 2.0 * down
        }
        fn parameter(&self) -> f64 {
            self.a
        }
        fn with_parameter(&self, a: f64) -> Self {
            Crossing { a }
        }
    }

    #[test]
    fn necklace_counts() {
        let counts: Vec<usize> = (1..=6).map(|k| necklaces(k).len()).collect();
        assert_eq!(counts, vec![2, 3, 4, 6, 8, 14]);
    }

    #[test]
    fn tangent_fixed_point_at_three_quarters() {
        let sigma = 0.05;
        let a0 = EPS / std::f64::consts::TAU - sigma;
        let orbits = find_extremal_orbits(&circle(a0, sigma), 1, 4096).unwrap();
        let plus: Vec<_> = orbits.iter().filter(|o| o.word == vec![1]).collect();
        assert_eq!(plus.len(), 1);
        assert!((plus[0].points[0] - 0.75).abs() < 1e-6);
        assert!((plus[0].multiplier - 1.0).abs() < 1e-10);
        assert_eq!(plus[0].stability, Stability::SaddleNodeCandidate);
    }

    #[test]
    fn fixed_point_pair_closed_form() {
        let sigma = 0.05;
        let orbits = find_extremal_orbits(&circle(0.0, sigma), 1, 1024).unwrap();
        let plus: Vec<_> = orbits.iter().filter(|o| o.word == vec![1]).collect();
        assert_eq!(plus.len(), 2);
        // sin 2πx = −2πσ/ε
        let s = (-std::f64::consts::TAU * sigma / EPS).asin() / std::f64::consts::TAU;
        let expect = [0.5 - s, 1.0 + s];
        for o in plus {
            let x = o.points[0];
            assert!(expect.iter().any(|e| (x - e).abs() < 1e-12), "x = {x}");
            let want = if (x - expect[0]).abs() < 1e-6 {
                Stability::Attracting
            } else {
                Stability::Repelling
            };
            assert_eq!(o.stability, want);
        }
    }

    #[test]
    fn pure_rotation_has_no_orbits() {
        let m = make_map(
            Family::StandardCircle {
                a: 0.05,
                eps: 0.0,
                sigma: 0.03,
            },
            NoiseModel::UNIFORM,
        )
        .unwrap();
        assert!(find_extremal_orbits(&m, 3, 512).unwrap().is_empty());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn logistic_orbits_are_periodic(a in 3.6f64..3.95) {
            let m = logistic(a, 0.005);
            for o in find_extremal_orbits(&m, 3, 1024).unwrap() {
                let y = word_lift(&m, o.points[0], &o.word);
                prop_assert!((y - o.points[0]).abs() <= 1e-12);
                // finite-difference multiplier of the word composition
                let h = 1e-6;
                let fd = (word_lift(&m, o.points[0] + h, &o.word) - word_lift(&m, o.points[0] - h, &o.word)) / (2.0 * h);
                prop_assert!((fd - o.multiplier).abs() <= 1e-6 * o.multiplier.abs().max(1.0));
                let prod: f64 = o.points.iter().zip(&o.word).map(|(x, s)| m.dx(*x, sign(*s))).product();
                prop_assert!((prod - o.multiplier).abs() <= 1e-10 * prod.abs().max(1.0));
            }
        }
    }

    #[test]
    fn circle_saddle_node_on_the_support_boundary() {
        let sigma = 0.05;
        let opts = quick();
        let ev = detect_saddle_node(&circle(0.1, sigma), 0.0, 0.15, &opts).unwrap();
        assert_eq!(ev.len(), 1, "{ev:?}");
        let a0 = EPS / std::f64::consts::TAU - sigma;
        assert!((ev[0].a_star - a0).abs() <= opts.resolution);
        assert!(ev[0].bracket <= opts.resolution);
        assert!(ev[0].generic);
        let Evidence::MultiplierTrace { trace, .. } = &ev[0].evidence[0] else {
            panic!("evidence")
        };
        assert!(trace.len() >= 3);
        // the attracting partner's multiplier rises monotonically to 1 at the bracket
        assert!(trace.windows(2).all(|w| w[0].1 >= w[1].1 && w[0].1 < 1.0));
        assert!(trace.windows(2).all(|w| w[0].2 <= w[1].2 && w[0].2 > 1.0));
    }

    #[test]
    fn deterministic_circle_saddle_node() {
        let opts = quick();
        let ev = detect_saddle_node(&circle(0.1, 0.0), 0.0, 0.15, &opts).unwrap();
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert!((ev[0].a_star - EPS / std::f64::consts::TAU).abs() <= opts.resolution);
    }

    #[test]
    fn interior_saddle_nodes_are_filtered() {
        let opts = DetectOptions {
            support_cells: None,
            ..quick()
        };
        let all = detect_saddle_node(&circle(0.1, 0.05), 0.0, 0.15, &opts).unwrap();
        assert_eq!(all.len(), 3);
    }

    #[test]
    fn logistic_period_three_saddle_nodes() {
        let sigma = 0.005;
        let det = 1.0 + 8f64.sqrt();
        let free = DetectOptions {
            support_cells: None,
            ..quick()
        };
        let ev = detect_saddle_node(&logistic(3.85, sigma), 3.80, 3.86, &free).unwrap();
        assert!(!ev.is_empty());
        for e in &ev {
            let Evidence::MultiplierTrace { word, .. } = &e.evidence[0] else {
                panic!("evidence")
            };
            assert_eq!(word.len(), 3);
            assert!(e.a_star > det - 3.0 * sigma && e.a_star < det + 6.0 * sigma, "{}", e.a_star);
        }
        // none of them sits on the boundary of the support
        assert!(detect_saddle_node(&logistic(3.85, sigma), 3.80, 3.86, &quick()).unwrap().is_empty());
    }

    #[test]
    fn logistic_homoclinic_closes_the_window() {
        let sigma = 0.005;
        let opts = DetectOptions {
            support_cells: Some(65_536),
            ..quick()
        };
        let ev = detect_homoclinic(&logistic(3.85, sigma), 3.84, 3.87, None, &opts).unwrap();
        assert_eq!(ev.len(), 1, "{ev:?}");
        // interval-iteration oracle for the random window: [3.8352, 3.8423]
        assert!((ev[0].a_star - 3.8423).abs() < 2e-4);
        assert!(ev[0].a_star > 3.8568 - 6.0 * sigma && ev[0].a_star < 3.8568 + 6.0 * sigma);
        assert!(ev[0].generic);
    }

    #[test]
    fn deterministic_crisis() {
        // bisection on first entry of the orbit of 1/2 into (0.6, 0.85): 3.8568007
        let opts = DetectOptions {
            support_cells: Some(65_536),
            ..quick()
        };
        let ev = detect_homoclinic(&logistic(3.85, 0.0), 3.84, 3.87, None, &opts).unwrap();
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert!((ev[0].a_star - 3.8568007).abs() <= opts.resolution);
    }

    #[test]
    fn no_homoclinic_inside_the_window() {
        let opts = DetectOptions { scan_a: 20, ..quick() };
        assert!(detect_homoclinic(&logistic(3.85, 0.005), 3.837, 3.841, None, &opts).unwrap().is_empty());
    }

    #[test]
    fn circle_has_no_boundary_events() {
        assert!(detect_boundary(&circle(0.1, 0.05), 0.0, 0.15, &quick()).unwrap().is_empty());
    }

    #[test]
    fn engineered_boundary_crossing() {
        let opts = DetectOptions {
            support_cells: None,
            k_max: 2,
            scan_a: 41,
            ..quick()
        };
        let ev = detect_boundary(&Crossing { a: 0.0 }, -0.05, 0.05, &opts).unwrap();
        assert_eq!(ev.len(), 1, "{ev:?}");
        assert!(ev[0].a_star.abs() <= opts.resolution);
        assert_eq!(ev[0].kind, EventType::Boundary);
        assert!(ev[0].generic);
    }

    #[test]
    fn equal_displacements_are_non_generic() {
        assert!(!displacements_differ(0.25, 0.25 + 5e-7));
        assert!(displacements_differ(0.25, 0.25 + 5e-6));
    }

    #[test]
    fn constant_family_has_no_events() {
        let m = make_map(Family::PureNoise { sigma: 0.1 }, NoiseModel::UNIFORM).unwrap();
        let opts = SweepOptions {
            steps: 5,
            grid_cells: 128,
            support_cells: 1024,
            detect: quick(),
            ..SweepOptions::default()
        };
        let r = sweep(&m, 0.0, 1.0, &opts).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.points.len(), 5);
        assert!(r.points.iter().all(|p| p.m == 1 && p.error.is_none()));
    }

    #[test]
    fn coarse_circle_sweep_finds_the_explosion() {
        let opts = SweepOptions {
            steps: 31,
            grid_cells: 256,
            support_cells: 8192,
            detect: quick(),
            ..SweepOptions::default()
        };
        let r = sweep(&circle(0.1, 0.05), 0.0, 0.15, &opts).unwrap();
        assert_eq!(r.events.len(), 1, "{:?}", r.events);
        let e = &r.events[0];
        assert_eq!(e.kind, EventType::SaddleNode);
        assert_eq!(e.label, Some(Label::Intermittency));
        assert!((e.a_star - 0.093239).abs() < 0.005);
        assert!(e.evidence.iter().any(|v| matches!(v, Evidence::HausdorffJump { .. })));
        assert!(r.points.windows(2).all(|w| w[0].a < w[1].a));
    }

    #[test]
    fn rejects_bad_ranges() {
        let m = circle(0.1, 0.05);
        assert!(detect_saddle_node(&m, 0.2, 0.1, &quick()).is_err());
        assert!(detect_saddle_node(&m, 0.0, 0.1, &DetectOptions { k_max: 7, ..quick() }).is_err());
        assert!(sweep(
            &m,
            0.0,
            0.1,
            &SweepOptions {
                steps: 1,
                ..SweepOptions::default()
            }
        )
        .is_err());
    }
}
