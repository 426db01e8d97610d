//! Representation of a one-dimensional transition kernel by a monotone family
//! `μ ↦ f_μ(x)` (conditional-CDF inversion) and the circle diffeomorphism criterion.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;

use crate::kernel::{check_fiber, image_interval, omega_of};
use crate::model::{NoiseModel, RandomMap};
use crate::quad::{GaussLegendre, Pchip};
use crate::{Error, Real, Result};

/// Panels of the cumulative quadrature of `k(x, ·)`.
pub const PANELS: usize = 1024;
/// Gauss–Legendre order per panel.
pub const PANEL_ORDER: usize = 8;
/// A kernel slice whose density maximum exceeds this multiple of its mean is unbounded.
pub const UNBOUNDED_RATIO: f64 = 1e6;
/// Number of `x` values probed by [`represent_1d`].
pub const PROBE_X: usize = 17;
/// Default number of `z` points in [`circle_diffeo_condition`].
pub const DIFFEO_Z_POINTS: usize = 257;
/// Values of the criterion below this modulus count as zero.
pub const DIFFEO_TOL: f64 = 1e-8;
/// Finite-difference step for `l_-'(x)` and `∂k/∂x`.
pub const DIFFEO_FD_STEP: f64 = 1e-6;

/// Source of transition densities `k(x, y)` in lift coordinates.
pub trait TransitionKernel<T: Real>: Send + Sync {
    /// Support of `k(x, ·)` as sorted intervals.
    fn support(&self, x: T) -> Vec<(T, T)>;
    fn density(&self, x: T, y: T) -> T;
    /// Base points the kernel is defined for.
    fn domain(&self) -> (T, T);
    fn describe(&self) -> String;

    fn is_circle(&self) -> bool {
        false
    }

    /// Rejects base points where the kernel is not defined.
    fn check(&self, _x: T) -> Result<()> {
        Ok(())
    }
}

/// Uniform additive noise: density `1/(2σ)` on `[F(x) - σ, F(x) + σ]`.
#[derive(Clone)]
pub struct AdditiveKernel<T> {
    base: Arc<dyn Fn(T) -> T + Send + Sync>,
    pub sigma: T,
    pub circle: bool,
    pub domain: (T, T),
}

impl<T: Real> AdditiveKernel<T> {
    pub fn new(base: impl Fn(T) -> T + Send + Sync + 'static, sigma: T, circle: bool) -> Result<Self> {
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::invalid(format!("sigma = {sigma} must be positive")));
        }
        Ok(AdditiveKernel {
            base: Arc::new(base),
            sigma,
            circle,
            domain: (T::zero(), T::one()),
        })
    }

    pub fn base(&self, x: T) -> T {
        (self.base)(x)
    }
}

impl<T: Real> TransitionKernel<T> for AdditiveKernel<T> {
    fn support(&self, x: T) -> Vec<(T, T)> {
        let c = self.base(x);
        vec![(c - self.sigma, c + self.sigma)]
    }

    fn density(&self, x: T, y: T) -> T {
        let c = self.base(x);
        if y >= c - self.sigma && y <= c + self.sigma {
            T::one() / (self.sigma + self.sigma)
        } else {
            T::zero()
        }
    }

    fn domain(&self) -> (T, T) {
        self.domain
    }

    fn describe(&self) -> String {
        format!("additive-uniform(sigma={})", self.sigma)
    }

    fn is_circle(&self) -> bool {
        self.circle
    }
}

impl<T: Real> fmt::Debug for AdditiveKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AdditiveKernel")
            .field("sigma", &self.sigma)
            .field("circle", &self.circle)
            .finish()
    }
}

/// Kernel of `f(x; ω) = x + (x - ω)²` with `ω` uniform on `[-1, 1]`, `x ∈ [0, 1]`.
#[derive(Debug, Clone, Copy, Default)]
pub struct QuadraticNoiseKernel;

impl<T: Real> TransitionKernel<T> for QuadraticNoiseKernel {
    fn support(&self, x: T) -> Vec<(T, T)> {
        let (u_lo, u_hi) = (x - T::one(), x + T::one());
        let min = if u_lo <= T::zero() && u_hi >= T::zero() {
            T::zero()
        } else {
            (u_lo * u_lo).min(u_hi * u_hi)
        };
        let max = (u_lo * u_lo).max(u_hi * u_hi);
        vec![(x + min, x + max)]
    }

    fn density(&self, x: T, y: T) -> T {
        let s = y - x;
        if s < T::zero() {
            return T::zero();
        }
        if s == T::zero() {
            return T::infinity();
        }
        // ω = x - u with u = ±√s; |dy/dω| = 2|u|, g = 1/2
        let r = s.sqrt();
        let (u_lo, u_hi) = (x - T::one(), x + T::one());
        [r, -r]
            .iter()
            .filter(|&&u| u >= u_lo && u <= u_hi)
            .map(|&u| T::lit(0.5) / (T::lit(2.0) * u.abs()))
            .sum()
    }

    fn domain(&self) -> (T, T) {
        (T::zero(), T::one())
    }

    fn describe(&self) -> String {
        "quadratic-noise(x + (x - w)^2)".to_string()
    }
}

/// Kernel induced by a random map with an injective noise fiber.
#[derive(Debug, Clone)]
pub struct MapKernel<M> {
    pub map: M,
}

impl<M> MapKernel<M> {
    pub fn new(map: M) -> Self {
        MapKernel { map }
    }
}

impl<T: Real, M: RandomMap<T>> TransitionKernel<T> for MapKernel<M> {
    fn support(&self, x: T) -> Vec<(T, T)> {
        vec![image_interval(&self.map, x)]
    }

    fn density(&self, x: T, y: T) -> T {
        let (lo, hi) = image_interval(&self.map, x);
        if y < lo || y > hi {
            return T::zero();
        }
        let w = omega_of(&self.map, x, y);
        self.map.noise().density(w) / self.map.domega(x, w).abs()
    }

    fn domain(&self) -> (T, T) {
        let s = self.map.space();
        (s.lower(), s.upper())
    }

    fn describe(&self) -> String {
        "random-map".to_string()
    }

    fn is_circle(&self) -> bool {
        self.map.space().is_circle()
    }

    fn check(&self, x: T) -> Result<()> {
        check_fiber(&self.map, x)
    }
}

/// Cumulative distribution of `k(x, ·)` on one support interval.
#[derive(Debug, Clone)]
pub struct Fiber<T> {
    pub x: T,
    pub support: (T, T),
    /// Quadrature mass of `k(x, ·)` before normalization.
    pub mass: T,
    /// Largest sampled density divided by the mean density.
    pub peak_ratio: T,
    cdf: Pchip<T>,
    nodes: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> Fiber<T> {
    /// Monotone interpolant of the normalized cumulative at `y`.
    pub fn cdf(&self, y: T) -> T {
        if y <= self.support.0 {
            return T::zero();
        }
        if y >= self.support.1 {
            return T::one();
        }
        self.cdf.eval(y)
    }

    /// Conditional quantile: the `y` with `cdf(y) = u`.
    pub fn quantile(&self, u: T) -> T {
        if u <= T::zero() {
            return self.support.0;
        }
        if u >= T::one() {
            return self.support.1;
        }
        let n = self.values.len();
        let i = match self.values.binary_search_by(|v| v.partial_cmp(&u).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => return self.nodes[i],
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        };
        let (mut lo, mut hi) = (self.nodes[i], self.nodes[i + 1]);
        let mut y = lo + (hi - lo) * (u - self.values[i]) / (self.values[i + 1] - self.values[i]);
        let tol = T::epsilon() * T::lit(4.0) * (T::one() + y.abs());
        for _ in 0..100 {
            let r = self.cdf.eval(y) - u;
            if r > T::zero() {
                hi = y;
            } else {
                lo = y;
            }
            let d = self.cdf.derivative(y);
            let mut next = if d > T::zero() { y - r / d } else { (lo + hi) * T::lit(0.5) };
            if !(next > lo && next < hi) {
                next = (lo + hi) * T::lit(0.5);
            }
            if (next - y).abs() <= tol || hi - lo <= tol {
                return next;
            }
            y = next;
        }
        y
    }
}

/// A kernel together with the family `f_μ(x) = Q_x(G(μ))` representing it.
pub struct RepresentationMap<T, K> {
    pub kernel: K,
    pub noise: NoiseModel,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real, K: TransitionKernel<T>> RepresentationMap<T, K> {
    /// Builds the cumulative of `k(x, ·)`; repeated evaluations at one `x` should reuse it.
    pub fn fiber(&self, x: T) -> Result<Fiber<T>> {
        build_fiber(&self.kernel, x)
    }

    /// `f_μ(x)` in lift coordinates.
    pub fn eval(&self, x: T, mu: T) -> Result<T> {
        Ok(self.eval_on(&self.fiber(x)?, mu))
    }

    /// `f_μ` at the base point of `fiber`.
    pub fn eval_on(&self, fiber: &Fiber<T>, mu: T) -> T {
        fiber.quantile(self.noise.cdf(mu))
    }

    /// `f_μ(x)` reduced to `[0, 1)` on the circle.
    pub fn eval_reduced(&self, x: T, mu: T) -> Result<T> {
        let y = self.eval(x, mu)?;
        Ok(if self.kernel.is_circle() { y - y.floor() } else { y })
    }

    pub fn describe(&self) -> String {
        self.kernel.describe()
    }
}

impl<T: Real, K> fmt::Debug for RepresentationMap<T, K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RepresentationMap").field("noise", &self.noise).finish()
    }
}

fn build_fiber<T: Real, K: TransitionKernel<T> + ?Sized>(kernel: &K, x: T) -> Result<Fiber<T>> {
    kernel.check(x)?;
    let support = kernel.support(x);
    if support.len() != 1 {
        return Err(Error::MulticomponentSupport { components: support.len() });
    }
    let (lo, hi) = support[0];
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::precondition(format!("kernel support at x = {x} is empty")));
    }
    let len = hi - lo;
    let gl = GaussLegendre::<T>::new(PANEL_ORDER);
    let nodes: Vec<T> = (0..=PANELS).map(|i| lo + len * T::from_usize_lossy(i) / T::from_usize_lossy(PANELS)).collect();
    let mut peak = T::zero();
    let mut masses = Vec::with_capacity(PANELS);
    for w in nodes.windows(2) {
        let mut m = T::zero();
        for (y, wt) in gl.scaled(w[0], w[1]) {
            let k = kernel.density(x, y);
            peak = peak.max(k);
            m += wt * k;
        }
        masses.push(m);
    }
    // unbounded densities blow up at a point; approach both endpoints geometrically
    for j in 1..=15 {
        let d = len * T::lit(10f64.powi(-j));
        peak = peak.max(kernel.density(x, lo + d)).max(kernel.density(x, hi - d));
    }
    peak = peak.max(kernel.density(x, lo)).max(kernel.density(x, hi));
    let mass: T = masses.iter().copied().sum();
    if !(mass > T::zero()) {
        return Err(Error::precondition(format!("kernel at x = {x} has no mass")));
    }
    let ratio = if peak.is_finite() { peak * len / mass } else { T::infinity() };
    if ratio > T::lit(UNBOUNDED_RATIO) {
        return Err(Error::UnboundedKernel { ratio: ratio.as_f64() });
    }
    let positive: Vec<bool> = masses.iter().map(|m| *m > T::zero()).collect();
    let runs = usize::from(positive[0]) + positive.windows(2).filter(|w| !w[0] && w[1]).count();
    if runs > 1 {
        return Err(Error::MulticomponentSupport { components: runs });
    }
    let mut values = Vec::with_capacity(PANELS + 1);
    let mut acc = T::zero();
    values.push(T::zero());
    for m in &masses {
        acc += *m / mass;
        values.push(acc.min(T::one()));
    }
    values[PANELS] = T::one();
    // zero-mass edge panels make the cumulative flat; keep it strictly increasing for the inverse
    let first = masses.iter().position(|m| *m > T::zero()).unwrap_or(0);
    let last = masses.iter().rposition(|m| *m > T::zero()).unwrap_or(PANELS - 1);
    let (nodes, values) = (nodes[first..=last + 1].to_vec(), values[first..=last + 1].to_vec());
    let support = (nodes[0], nodes[nodes.len() - 1]);
    let slopes: Vec<T> = nodes.iter().map(|&y| kernel.density(x, y) / mass).collect();
    let cdf = Pchip::with_slopes(nodes.clone(), values.clone(), slopes);
    Ok(Fiber {
        x,
        support,
        mass,
        peak_ratio: ratio,
        cdf,
        nodes,
        values,
    })
}

/// Builds the representation of `kernel` over the noise law `noise`, probing
/// [`PROBE_X`] base points for bounded, single-interval kernel slices.
pub fn represent_1d<T: Real, K: TransitionKernel<T>>(kernel: K, noise: NoiseModel) -> Result<RepresentationMap<T, K>> {
    let (a, b) = kernel.domain();
    if !(b > a) {
        return Err(Error::precondition("kernel domain is empty"));
    }
    let probes: Vec<T> = (0..PROBE_X)
        .map(|i| a + (b - a) * (T::from_usize_lossy(i) + T::lit(0.5)) / T::from_usize_lossy(PROBE_X))
        .collect();
    probes.par_iter().map(|&x| build_fiber(&kernel, x).map(|_| ())).collect::<Result<Vec<_>>>()?;
    Ok(RepresentationMap {
        kernel,
        noise,
        _scalar: std::marker::PhantomData,
    })
}

/// Total-variation distance between `k(x, ·)` and the law of `f_μ(x)`, `μ ∼ ν`.
///
/// Uses the substitution `y = f_μ(x)`: `½ ∫ |k(x, f_μ(x)) ∂_μ f_μ(x) - g(μ)| dμ`,
/// plus any kernel mass outside the image of `μ ↦ f_μ(x)`.
pub fn tv_distance<T: Real, K: TransitionKernel<T>>(rep: &RepresentationMap<T, K>, x: T, panels: usize) -> Result<T> {
    let fiber = rep.fiber(x)?;
    let gl = GaussLegendre::<T>::new(PANEL_ORDER);
    let h = T::lit(1e-6);
    let noise = rep.noise;
    let mut total = T::zero();
    let one = T::one();
    for i in 0..panels {
        let a = -one + T::lit(2.0) * T::from_usize_lossy(i) / T::from_usize_lossy(panels);
        let b = -one + T::lit(2.0) * T::from_usize_lossy(i + 1) / T::from_usize_lossy(panels);
        for (mu, wt) in gl.scaled(a, b) {
            let lo = (mu - h).max(-one);
            let hi = (mu + h).min(one);
            let dfdmu = (rep.eval_on(&fiber, hi) - rep.eval_on(&fiber, lo)) / (hi - lo);
            let y = rep.eval_on(&fiber, mu);
            total += wt * (rep.kernel.density(x, y) * dfdmu - noise.density(mu)).abs();
        }
    }
    let (lo, hi) = rep.kernel.support(x)[0];
    let (f_lo, f_hi) = (rep.eval_on(&fiber, -one), rep.eval_on(&fiber, one));
    let outside = |a: T, b: T| if b > a { gl.integrate(a, b, |y| rep.kernel.density(x, y)) } else { T::zero() };
    total += outside(lo, f_lo) + outside(f_hi, hi);
    Ok(total * T::lit(0.5))
}

/// Outcome of [`circle_diffeo_condition`] at one base point.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffeoCheck<T> {
    pub x: T,
    pub holds: bool,
    /// First `z` where the criterion vanishes, when it does.
    pub witness: Option<T>,
    /// Criterion value of smallest modulus over the `z` grid.
    pub min_value: T,
    pub min_z: T,
}

/// Evaluates `-k(x, l_-(x)) l_-'(x) + ∫_{l_-(x)}^{z} ∂k/∂x(x, y) dy` for `z` on a
/// `z_points` grid of `[l_-(x), l_+(x)]` and reports whether it stays away from zero.
pub fn circle_diffeo_condition<T: Real, K: TransitionKernel<T> + ?Sized>(kernel: &K, xs: &[T], z_points: usize) -> Vec<DiffeoCheck<T>> {
    let z_points = z_points.max(2);
    xs.par_iter().map(|&x| diffeo_at(kernel, x, z_points)).collect()
}

fn diffeo_at<T: Real, K: TransitionKernel<T> + ?Sized>(kernel: &K, x: T, z_points: usize) -> DiffeoCheck<T> {
    let h = T::lit(DIFFEO_FD_STEP);
    let lower = |x: T| kernel.support(x)[0].0;
    let (l_lo, l_hi) = {
        let s = kernel.support(x);
        (s[0].0, s[s.len() - 1].1)
    };
    let dl = (lower(x + h) - lower(x - h)) / (h + h);
    let inside = |x: T, y: T| kernel.support(x).iter().any(|&(a, b)| y >= a && y <= b);
    // ∂k/∂x of the smooth extension: one-sided where y leaves the support at x ± h
    let dkdx = |y: T| -> T {
        let k0 = kernel.density(x, y);
        match (inside(x - h, y), inside(x + h, y)) {
            (true, true) => (kernel.density(x + h, y) - kernel.density(x - h, y)) / (h + h),
            (false, true) => (kernel.density(x + h, y) - k0) / h,
            (true, false) => (k0 - kernel.density(x - h, y)) / h,
            (false, false) => T::zero(),
        }
    };
    let gl = GaussLegendre::<T>::new(4);
    let base = -kernel.density(x, l_lo) * dl;
    let tol = T::lit(DIFFEO_TOL);
    let mut value = base;
    let mut check = DiffeoCheck {
        x,
        holds: true,
        witness: None,
        min_value: value,
        min_z: l_lo,
    };
    let mut z_prev = l_lo;
    for j in 0..z_points {
        let z = l_lo + (l_hi - l_lo) * T::from_usize_lossy(j) / T::from_usize_lossy(z_points - 1);
        if j > 0 {
            value += gl.integrate(z_prev, z, dkdx);
        }
        if value.abs() < check.min_value.abs() {
            check.min_value = value;
            check.min_z = z;
        }
        if !(value.abs() >= tol) && check.witness.is_none() {
            check.holds = false;
            check.witness = Some(z);
        }
        z_prev = z;
    }
    check
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{make_map, Family, NoiseKind};
    use crate::quad::adaptive_simpson;
    use proptest::prelude::*;
    use rand::Rng;
    use std::f64::consts::PI;

    fn circle_base(eps: f64) -> impl Fn(f64) -> f64 + Send + Sync + 'static {
        move |x| x + 0.1 + eps / (2.0 * PI) * (2.0 * PI * x).sin()
    }

    fn additive(sigma: f64) -> AdditiveKernel<f64> {
        AdditiveKernel::new(circle_base(0.9), sigma, true).unwrap()
    }

    /// `ν{μ : f_μ(x) ≤ t}` by bisection on the evaluator.
    fn law_cdf<K: TransitionKernel<f64>>(rep: &RepresentationMap<f64, K>, fiber: &Fiber<f64>, t: f64) -> f64 {
        let (mut lo, mut hi) = (-1.0, 1.0);
        if rep.eval_on(fiber, lo) > t {
            return 0.0;
        }
        if rep.eval_on(fiber, hi) <= t {
            return 1.0;
        }
        for _ in 0..80 {
            let m = 0.5 * (lo + hi);
            if rep.eval_on(fiber, m) <= t {
                lo = m;
            } else {
                hi = m;
            }
        }
        rep.noise.cdf(0.5 * (lo + hi))
    }

    #[test]
    fn uniform_additive_is_linear_inversion() {
        let k = additive(0.05);
        for noise in [NoiseModel::UNIFORM, NoiseModel::SMOOTH_BUMP] {
            let rep = represent_1d(k.clone(), noise).unwrap();
            for &x in &[0.0, 0.13, 0.5, 0.77] {
                let fiber = rep.fiber(x).unwrap();
                for &mu in &[-1.0, -0.6, -0.1, 0.0, 0.35, 0.9, 1.0] {
                    let want = k.base(x) - 0.05 + 0.1 * noise.cdf(mu);
                    assert!((rep.eval_on(&fiber, mu) - want).abs() < 1e-12, "x={x} mu={mu}");
                }
            }
        }
        let rep = represent_1d(k.clone(), NoiseModel::UNIFORM).unwrap();
        assert!((rep.eval(0.3, 0.4).unwrap() - (k.base(0.3) + 0.05 * 0.4)).abs() < 1e-12);
        let r = rep.eval_reduced(0.95, 1.0).unwrap();
        assert!((0.0..1.0).contains(&r));
    }

    #[test]
    fn round_trip_tv_at_random_points() {
        let rep = represent_1d(additive(0.05), NoiseModel::UNIFORM).unwrap();
        let mut rng = crate::model::rng_for(7, 0);
        for _ in 0..100 {
            let x: f64 = rng.gen();
            let tv = tv_distance(&rep, x, 64).unwrap();
            assert!(tv <= 1e-6, "x={x} tv={tv}");
        }
    }

    #[test]
    fn law_matches_kernel_cdf() {
        let map = make_map(Family::StandardCircle { a: 0.2, eps: 0.9, sigma: 0.05 }, NoiseModel::SMOOTH_BUMP).unwrap();
        let kernel = MapKernel::new(map);
        let rep = represent_1d(kernel.clone(), NoiseModel::UNIFORM).unwrap();
        for &x in &[0.1, 0.42, 0.8] {
            let fiber = rep.fiber(x).unwrap();
            let (lo, hi) = kernel.support(x)[0];
            for j in 1..10 {
                let t = lo + (hi - lo) * j as f64 / 10.0;
                let exact = adaptive_simpson(&|y| kernel.density(x, y), lo, t, 1e-12);
                let got = law_cdf(&rep, &fiber, t);
                assert!((got - exact).abs() < 1e-6, "x={x} t={t} got={got} exact={exact}");
            }
            let tv = tv_distance(&rep, x, 64).unwrap();
            assert!(tv < 1e-6, "tv={tv}");
        }
    }

    #[test]
    fn map_kernel_reproduces_the_map() {
        let map = make_map(Family::Logistic { a: 3.7, sigma: 0.02 }, NoiseModel::UNIFORM).unwrap();
        let rep = represent_1d(MapKernel::new(map), NoiseModel::UNIFORM).unwrap();
        for &x in &[0.2, 0.5, 0.71] {
            let fiber = rep.fiber(x).unwrap();
            for &mu in &[-0.9f64, -0.3, 0.0, 0.6, 1.0] {
                assert!((rep.eval_on(&fiber, mu) - map.lift(x, mu)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn quadratic_noise_is_unbounded() {
        let err = represent_1d::<f64, _>(QuadraticNoiseKernel, NoiseModel::UNIFORM).unwrap_err();
        assert!(matches!(err, Error::UnboundedKernel { ratio } if ratio > UNBOUNDED_RATIO));
    }

    #[derive(Clone)]
    struct TwoBumps;

    impl TransitionKernel<f64> for TwoBumps {
        fn support(&self, _x: f64) -> Vec<(f64, f64)> {
            vec![(0.0, 1.0)]
        }
        fn density(&self, _x: f64, y: f64) -> f64 {
            if (0.1..0.3).contains(&y) || (0.6..0.9).contains(&y) {
                2.0
            } else {
                0.0
            }
        }
        fn domain(&self) -> (f64, f64) {
            (0.0, 1.0)
        }
        fn describe(&self) -> String {
            "two-bumps".into()
        }
    }

    #[test]
    fn gaps_in_the_support_are_rejected() {
        let err = represent_1d(TwoBumps, NoiseModel::UNIFORM).unwrap_err();
        assert!(matches!(err, Error::MulticomponentSupport { components: 2 }));
    }

    #[test]
    fn degenerate_fiber_is_forwarded() {
        let map = make_map(Family::Logistic { a: 3.7, sigma: 0.02 }, NoiseModel::UNIFORM).unwrap();
        let rep = RepresentationMap {
            kernel: MapKernel::new(map),
            noise: NoiseModel::UNIFORM,
            _scalar: Default::default(),
        };
        assert!(matches!(rep.eval(0.0, 0.0), Err(Error::DegenerateFiber { .. })));
    }

    #[test]
    fn diffeo_criterion_for_additive_family() {
        let sigma = 0.05;
        let k = additive(sigma);
        let xs: Vec<f64> = (0..50).map(|i| i as f64 / 50.0).collect();
        for c in circle_diffeo_condition(&k, &xs, DIFFEO_Z_POINTS) {
            assert!(c.holds, "x={}", c.x);
            let fp = 1.0 + 0.9 * (2.0 * PI * c.x).cos();
            assert!((c.min_value + fp / (2.0 * sigma)).abs() < 1e-6, "x={} v={}", c.x, c.min_value);
        }
        // F'(1/2) = 0 for eps = 1
        let k = AdditiveKernel::new(circle_base(1.0), sigma, true).unwrap();
        let c = &circle_diffeo_condition(&k, &[0.5, 0.25], DIFFEO_Z_POINTS);
        assert!(!c[0].holds && c[0].witness.is_some());
        assert!(c[1].holds && c[1].witness.is_none());
        // identity base, wide noise
        let k = AdditiveKernel::new(|x: f64| x, 40.0, true).unwrap();
        for c in circle_diffeo_condition(&k, &[0.1, 0.6], 33) {
            assert!(c.holds);
            assert!((c.min_value + 1.0 / 80.0).abs() < 1e-9);
        }
    }

    #[test]
    fn diffeo_criterion_is_the_cdf_derivative() {
        // independent route: the criterion equals ∂/∂x of ∫_{-∞}^{z} k(x, y) dy at fixed z
        let map = make_map(Family::StandardCircle { a: 0.2, eps: 0.6, sigma: 0.1 }, NoiseModel::SMOOTH_BUMP).unwrap();
        let kernel = MapKernel::new(map);
        let x = 0.3;
        let (lo, hi) = kernel.support(x)[0];
        let cdf = |x: f64, z: f64| crate::kernel::transition_cdf(&map, x, z);
        let c = &circle_diffeo_condition(&kernel, &[x], 65)[0];
        let h = 1e-5;
        let mut min = f64::INFINITY;
        for j in 0..65 {
            let z = lo + (hi - lo) * j as f64 / 64.0;
            let v = (cdf(x + h, z) - cdf(x - h, z)) / (2.0 * h);
            min = min.min(v.abs());
        }
        assert!((c.min_value.abs() - min).abs() < 1e-4, "{} vs {min}", c.min_value);
        // the bump density vanishes at l_-, so the criterion vanishes there
        assert!(!c.holds);
    }

    #[test]
    fn representation_is_smooth() {
        let map = make_map(Family::StandardCircle { a: 0.1, eps: 0.8, sigma: 0.1 }, NoiseModel::SMOOTH_BUMP).unwrap();
        let rep = represent_1d(MapKernel::new(map), NoiseModel::UNIFORM).unwrap();
        let xs: Vec<f64> = (0..=40).map(|i| 0.2 + 0.01 * i as f64).collect();
        for &mu in &[-0.5, 0.0, 0.7] {
            let f: Vec<f64> = xs.iter().map(|&x| rep.eval(x, mu).unwrap()).collect();
            let d: Vec<f64> = f.windows(2).map(|w| (w[1] - w[0]) / 0.01).collect();
            let scale = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for w in d.windows(2) {
                assert!((w[1] - w[0]).abs() < 10.0 * 0.1 * scale, "mu={mu}");
            }
        }
        let fiber = rep.fiber(0.4).unwrap();
        let mus: Vec<f64> = (0..=100).map(|i| -0.9 + 0.018 * i as f64).collect();
        let d: Vec<f64> = mus
            .windows(2)
            .map(|w| (rep.eval_on(&fiber, w[1]) - rep.eval_on(&fiber, w[0])) / 0.018)
            .collect();
        let scale = d.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for w in d.windows(2) {
            assert!((w[1] - w[0]).abs() < 0.1 * scale);
        }
    }

    #[test]
    fn works_in_single_precision() {
        let k = AdditiveKernel::new(|x: f32| 0.5 * x + 0.2, 0.1f32, false).unwrap();
        let rep = represent_1d(k, NoiseModel::UNIFORM).unwrap();
        let y = rep.eval(0.4f32, 0.5).unwrap();
        assert!((y - 0.45).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_sigma() {
        assert!(AdditiveKernel::new(|x: f64| x, 0.0, true).is_err());
        assert!(AdditiveKernel::new(|x: f64| x, f64::NAN, true).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn monotone_in_mu(x in 0.0f64..1.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let map = make_map(Family::StandardCircle { a: 0.3, eps: 0.9, sigma: 0.07 }, NoiseModel::SMOOTH_BUMP).unwrap();
            let rep = represent_1d(MapKernel::new(map), NoiseModel::new(NoiseKind::Uniform)).unwrap();
            let fiber = rep.fiber(x).unwrap();
            let (m1, m2) = (2.0 * a.min(b) - 1.0, 2.0 * a.max(b) - 1.0);
            prop_assume!(m2 - m1 > 1e-9);
            prop_assert!(rep.eval_on(&fiber, m2) > rep.eval_on(&fiber, m1));
        }

        #[test]
        fn reparametrization_leaves_the_law(x in 0.0f64..1.0, sigma in 0.01f64..0.3) {
            let k = additive(sigma);
            for noise in [NoiseModel::UNIFORM, NoiseModel::SMOOTH_BUMP] {
                let rep = represent_1d(k.clone(), noise).unwrap();
                let tv = tv_distance(&rep, x, 64).unwrap();
                prop_assert!(tv <= 1e-6, "tv={}", tv);
            }
        }
    }
}
