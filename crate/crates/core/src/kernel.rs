//! Transition density `k(x, y)`, forward image sets `U_x` and preimage sets `V_y`.

use std::fmt;
use std::sync::Arc;

use crate::model::RandomMap;
use crate::{Error, Real, Result};

/// `|∂f/∂ω|` below this value counts as a degenerate fiber.
pub const DEGENERACY_THRESHOLD: f64 = 1e-14;

/// The density `y ↦ k(x, y)` for one base point.
#[derive(Clone)]
pub struct KernelSlice<T> {
    pub x: T,
    /// `U_x` as at most two sorted non-wrapping intervals (more only for arcs longer than the circle).
    pub support: Vec<(T, T)>,
    /// Unreduced image `f(x; [-1, 1])`.
    pub image: (T, T),
    density: Arc<dyn Fn(T) -> T + Send + Sync>,
}

impl<T: Real> KernelSlice<T> {
    pub fn density(&self, y: T) -> T {
        (self.density)(y)
    }

    pub fn support_length(&self) -> T {
        self.support.iter().map(|&(a, b)| b - a).sum()
    }
}

impl<T: Real> fmt::Debug for KernelSlice<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelSlice").field("x", &self.x).field("support", &self.support).finish()
    }
}

/// `V_y = {x : y ∈ U_x}` as sorted disjoint intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct PreimageSet<T> {
    pub y: T,
    pub components: Vec<(T, T)>,
}

impl<T: Real> PreimageSet<T> {
    pub fn contains(&self, x: T) -> bool {
        self.components.iter().any(|&(a, b)| x >= a && x <= b)
    }
}

/// Unreduced image interval `[min_ω f, max_ω f]` of the noise fiber over `x`.
pub fn image_interval<T: Real, M: RandomMap<T>>(map: &M, x: T) -> (T, T) {
    let a = map.lift(x, -T::one());
    let b = map.lift(x, T::one());
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Fails with `DegenerateFiber` when `|∂f/∂ω|` is below threshold somewhere on `[-1, 1]`.
pub fn check_fiber<T: Real, M: RandomMap<T>>(map: &M, x: T) -> Result<()> {
    let thr = T::lit(DEGENERACY_THRESHOLD);
    for j in 0..=32 {
        let w = -T::one() + T::lit(2.0) * T::from_usize_lossy(j) / T::lit(32.0);
        let s = map.domega(x, w);
        if !(s.abs() >= thr) {
            return Err(Error::DegenerateFiber {
                x: x.as_f64(),
                omega: w.as_f64(),
                slope: s.as_f64(),
            });
        }
    }
    Ok(())
}

/// Solves `f(x; ω) = target` for `ω ∈ [-1, 1]` (lift coordinates). Values outside
/// the image are clamped to the nearest endpoint of `[-1, 1]`.
pub fn omega_of<T: Real, M: RandomMap<T>>(map: &M, x: T, target: T) -> T {
    let f_lo = map.lift(x, -T::one());
    let f_hi = map.lift(x, T::one());
    let increasing = f_hi >= f_lo;
    let below = |v: T| if increasing { v <= target } else { v >= target };
    if below(f_hi) {
        return T::one();
    }
    if !below(f_lo) {
        return -T::one();
    }
    if let Some((a, b)) = map.affine_in_noise(x) {
        if b != T::zero() {
            return ((target - a) / b).max(-T::one()).min(T::one());
        }
    }
    // bisection on the bracket, Newton steps when they stay inside
    let (mut lo, mut hi) = (-T::one(), T::one());
    let mut w = T::zero();
    let tol = T::lit(1e-14);
    for _ in 0..200 {
        let v = map.lift(x, w);
        if below(v) {
            lo = w;
        } else {
            hi = w;
        }
        let d = map.domega(x, w);
        let mut next = if d != T::zero() { w - (v - target) / d } else { (lo + hi) * T::lit(0.5) };
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::lit(0.5);
        }
        if (next - w).abs() < tol || hi - lo < tol {
            return next;
        }
        w = next;
    }
    w
}

/// `P(f(x; ω) ≤ target)` for a lift-coordinate `target`.
pub fn transition_cdf<T: Real, M: RandomMap<T>>(map: &M, x: T, target: T) -> T {
    let noise = map.noise();
    let increasing = map.lift(x, T::one()) >= map.lift(x, -T::one());
    let w = omega_of(map, x, target);
    let g = noise.cdf(w);
    if increasing {
        g
    } else {
        T::one() - g
    }
}

/// Transition density `k(x, ·)` by change of variables `g(ω(x, y)) |∂ω/∂y|`.
pub fn kernel_at<T: Real, M: RandomMap<T> + 'static>(map: &M, x: T) -> Result<KernelSlice<T>> {
    let space = map.space();
    if !space.contains(x) {
        return Err(Error::precondition(format!("x = {x} is outside the phase space")));
    }
    check_fiber(map, x)?;
    let (lo, hi) = image_interval(map, x);
    let support = if space.is_circle() { circle_arcs(lo, hi) } else { vec![(lo, hi)] };
    let m = map.clone();
    let circle = space.is_circle();
    let density = Arc::new(move |y: T| -> T {
        let noise = m.noise();
        let at = |yy: T| -> T {
            if yy < lo || yy > hi {
                return T::zero();
            }
            let w = omega_of(&m, x, yy);
            noise.density(w) / m.domega(x, w).abs()
        };
        if circle {
            // every lift of y inside the image contributes
            let mut k = (lo - y).ceil();
            let mut total = T::zero();
            while y + k <= hi {
                total += at(y + k);
                k += T::one();
            }
            total
        } else {
            at(y)
        }
    });
    Ok(KernelSlice {
        x,
        support,
        image: (lo, hi),
        density,
    })
}

/// Splits a lifted arc `[lo, hi]` into sorted non-wrapping pieces of `[0, 1)`.
pub fn circle_arcs<T: Real>(lo: T, hi: T) -> Vec<(T, T)> {
    if hi - lo >= T::one() {
        return vec![(T::zero(), T::one())];
    }
    let start = lo - lo.floor();
    let end = start + (hi - lo);
    if end <= T::one() {
        vec![(start, end)]
    } else {
        vec![(T::zero(), end - T::one()), (start, T::one())]
    }
}

/// Signed membership margin of `y` in `U_x`: nonnegative exactly on `V_y`.
fn membership_margin<T: Real, M: RandomMap<T>>(map: &M, x: T, y: T) -> T {
    let (lo, hi) = image_interval(map, x);
    if map.space().is_circle() {
        if hi - lo >= T::one() {
            return T::one();
        }
        let d = y - lo;
        let yy = lo + (d - d.floor());
        (yy - lo).min(hi - yy)
    } else {
        (y - lo).min(hi - y)
    }
}

/// Golden-section maximum of the membership margin on `[l, r]`.
fn margin_peak<T: Real, M: RandomMap<T>>(map: &M, y: T, mut l: T, mut r: T) -> (T, T) {
    let g = T::lit(0.618_033_988_749_894_9);
    let f = |x: T| membership_margin(map, x, y);
    let (mut c, mut d) = (r - g * (r - l), l + g * (r - l));
    let (mut fc, mut fd) = (f(c), f(d));
    while r - l > T::lit(1e-13) {
        if fc >= fd {
            r = d;
            d = c;
            fd = fc;
            c = r - g * (r - l);
            fc = f(c);
        } else {
            l = c;
            c = d;
            fc = fd;
            d = l + g * (r - l);
            fd = f(d);
        }
    }
    let x = (l + r) * T::lit(0.5);
    (x, f(x))
}

/// Computes `V_y` by sign scanning at `resolution` points and bisection to 1e-12.
/// Negative local maxima of the margin are searched, so components narrower
/// than the scan step are found when they sit on a single peak.
pub fn preimage_set<T: Real, M: RandomMap<T>>(map: &M, y: T, resolution: usize) -> Result<PreimageSet<T>> {
    if resolution < 64 {
        return Err(Error::precondition("preimage resolution must be >= 64"));
    }
    let space = map.space();
    if !space.contains(y) {
        return Err(Error::precondition(format!("y = {y} is outside the phase space")));
    }
    let (a, len) = (space.lower(), space.length());
    let grid: Vec<T> = (0..=resolution)
        .map(|i| a + len * T::from_usize_lossy(i) / T::from_usize_lossy(resolution))
        .collect();
    let margins: Vec<T> = grid.iter().map(|&x| membership_margin(map, x, y)).collect();
    let mut xs: Vec<T> = Vec::with_capacity(grid.len());
    for i in 0..=resolution {
        xs.push(grid[i]);
        let (lm, rm) = (
            if i > 0 { margins[i - 1] } else { -T::infinity() },
            margins.get(i + 1).copied().unwrap_or(-T::infinity()),
        );
        if margins[i] < T::zero() && margins[i] >= lm && margins[i] >= rm {
            let (l, r) = (grid[i.saturating_sub(1)], grid[(i + 1).min(resolution)]);
            let (peak, m) = margin_peak(map, y, l, r);
            if m >= T::zero() && peak > l && peak < r {
                // keep xs sorted: the peak may sit on either side of grid[i]
                if peak < grid[i] {
                    xs.insert(xs.len() - 1, peak);
                } else {
                    xs.push(peak);
                }
            }
        }
    }
    let resolution = xs.len() - 1;
    let inside: Vec<bool> = xs.iter().map(|&x| membership_margin(map, x, y) >= T::zero()).collect();
    let refine = |mut l: T, mut r: T, l_in: bool| -> T {
        while r - l > T::lit(1e-12) {
            let m = (l + r) * T::lit(0.5);
            if (membership_margin(map, m, y) >= T::zero()) == l_in {
                l = m;
            } else {
                r = m;
            }
        }
        (l + r) * T::lit(0.5)
    };
    let mut comps: Vec<(T, T)> = Vec::new();
    let mut start: Option<T> = if inside[0] { Some(xs[0]) } else { None };
    for i in 0..resolution {
        if inside[i] != inside[i + 1] {
            let b = refine(xs[i], xs[i + 1], inside[i]);
            if inside[i] {
                comps.push((start.take().unwrap_or(xs[0]), b));
            } else {
                start = Some(b);
            }
        }
    }
    if let Some(s) = start {
        comps.push((s, xs[resolution]));
    }
    if space.is_circle() && comps.len() >= 2 {
        let first = comps[0];
        let last = *comps.last().unwrap();
        if first.0 == xs[0] && last.1 == xs[resolution] {
            // arc through 0: keep the two pieces, they are stored non-wrapping
            comps.sort_by(|p, q| p.0.partial_cmp(&q.0).unwrap());
        }
    }
    Ok(PreimageSet { y, components: comps })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_map, NoiseModel};
    use crate::quad::adaptive_simpson;
    use crate::Family;

    fn integral(slice: &KernelSlice<f64>) -> f64 {
        slice.support.iter().map(|&(a, b)| adaptive_simpson(&|y| slice.density(y), a, b, 1e-13)).sum()
    }

    #[test]
    fn pure_noise_slice() {
        let m = make_map(Family::PureNoise { sigma: 0.1 }, NoiseModel::UNIFORM).unwrap();
        for &x in &[0.02, 0.5, 0.97] {
            let s = kernel_at(&m, x).unwrap();
            assert!((s.support_length() - 0.2).abs() < 1e-14);
            let inside = m.space().wrap(x + 0.05);
            assert!((s.density(inside) - 5.0).abs() < 1e-12);
            assert!((integral(&s) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn logistic_slice_at_half() {
        let m = make_map(Family::Logistic { a: 3.85, sigma: 0.005 }, NoiseModel::UNIFORM).unwrap();
        let s = kernel_at(&m, 0.5).unwrap();
        assert!((s.support[0].0 - 0.96125).abs() < 1e-14);
        assert!((s.support[0].1 - 0.96375).abs() < 1e-14);
        assert!((s.density(0.9625) - 400.0).abs() < 1e-9);
        assert_eq!(s.density(0.97), 0.0);
        assert!((integral(&s) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn circle_slice_wraps() {
        let m = make_map(Family::StandardCircle { a: 0.0, eps: 0.9, sigma: 0.05 }, NoiseModel::UNIFORM).unwrap();
        let s = kernel_at(&m, 0.0).unwrap();
        assert_eq!(s.support.len(), 2);
        assert!((s.support[0].1 - 0.05).abs() < 1e-14 && (s.support[1].0 - 0.95).abs() < 1e-14);
        assert!((s.density(0.99) - 10.0).abs() < 1e-10);
        assert!((s.density(0.01) - 10.0).abs() < 1e-10);
        assert!((integral(&s) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn smooth_bump_slice_normalized() {
        let m = make_map(Family::Logistic { a: 3.7, sigma: 0.02 }, NoiseModel::SMOOTH_BUMP).unwrap();
        let s = kernel_at(&m, 0.3).unwrap();
        assert!((integral(&s) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_fiber_detected() {
        let m = make_map(Family::PureNoise { sigma: 0.0 }, NoiseModel::UNIFORM).unwrap();
        assert!(matches!(kernel_at(&m, 0.3), Err(Error::DegenerateFiber { .. })));
    }

    #[test]
    fn preimages() {
        let m = make_map(Family::PureNoise { sigma: 0.1 }, NoiseModel::UNIFORM).unwrap();
        let p = preimage_set(&m, 0.5, 256).unwrap();
        assert_eq!(p.components.len(), 1);
        assert!((p.components[0].0 - 0.4).abs() < 1e-11 && (p.components[0].1 - 0.6).abs() < 1e-11);

        let m = make_map(Family::Logistic { a: 3.85, sigma: 0.005 }, NoiseModel::UNIFORM).unwrap();
        let p = preimage_set(&m, 0.96, 1024).unwrap();
        assert_eq!(p.components.len(), 2);
        // roots of (a ± σ) x (1 - x) = 0.96
        let root = |c: f64| (1.0 - (1.0 - 4.0 * 0.96 / c).sqrt()) / 2.0;
        let (r_hi, r_lo) = (root(3.855), root(3.845));
        assert!((p.components[0].0 - r_hi).abs() < 1e-10);
        assert!((p.components[0].1 - r_lo).abs() < 1e-10);
        assert!((p.components[1].0 - (1.0 - r_lo)).abs() < 1e-10);
        assert!((p.components[1].1 - (1.0 - r_hi)).abs() < 1e-10);

        let p = preimage_set(&m, 0.9999, 1024).unwrap();
        assert!(p.components.is_empty());
    }

    #[test]
    fn components_narrower_than_the_scan_step() {
        let (a, sigma, y) = (3.2809634392914035, 0.006743709115993701, 0.5290756559108153);
        let m = make_map(Family::Logistic { a, sigma }, NoiseModel::UNIFORM).unwrap();
        let p = preimage_set(&m, y, 512).unwrap();
        let root = |c: f64| (1.0 - (1.0 - 4.0 * y / c).sqrt()) / 2.0;
        let (r_hi, r_lo) = (root(a + sigma), root(a - sigma));
        assert!(r_lo - r_hi < 1.0 / 512.0);
        assert_eq!(p.components.len(), 2);
        assert!((p.components[0].0 - r_hi).abs() < 1e-10 && (p.components[0].1 - r_lo).abs() < 1e-10);
        assert!((p.components[1].0 - (1.0 - r_lo)).abs() < 1e-10 && (p.components[1].1 - (1.0 - r_hi)).abs() < 1e-10);
        assert!(p.contains(0.2025062247010203));
    }
}
