//! Phase spaces, noise laws and the built-in random map families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::quad::GaussLegendre;
use crate::{Error, Real, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    Circle,
    Interval,
}

/// One-dimensional phase space: the circle `R/Z` or a compact interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseSpace<T> {
    kind: SpaceKind,
    lower: T,
    upper: T,
}

impl<T: Real> PhaseSpace<T> {
    /// The unit circle `[0, 1)` with wraparound.
    pub fn circle() -> Self {
        PhaseSpace {
            kind: SpaceKind::Circle,
            lower: T::zero(),
            upper: T::one(),
        }
    }

    pub fn interval(lower: T, upper: T) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::invalid(format!("interval bounds must satisfy lower < upper, got [{lower}, {upper}]")));
        }
        Ok(PhaseSpace {
            kind: SpaceKind::Interval,
            lower,
            upper,
        })
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn is_circle(&self) -> bool {
        self.kind == SpaceKind::Circle
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    pub fn length(&self) -> T {
        self.upper - self.lower
    }

    /// Reduces a lifted coordinate into the space. Interval points are left untouched.
    pub fn wrap(&self, x: T) -> T {
        match self.kind {
            SpaceKind::Circle => {
                let r = x - x.floor();
                // x slightly below an integer can round up to exactly 1
                if r >= T::one() {
                    T::zero()
                } else {
                    r
                }
            }
            SpaceKind::Interval => x,
        }
    }

    pub fn contains(&self, x: T) -> bool {
        match self.kind {
            SpaceKind::Circle => x.is_finite(),
            SpaceKind::Interval => x >= self.lower && x <= self.upper,
        }
    }

    /// Distance in the space; on the circle it lies in `[0, 1/2]`.
    pub fn distance(&self, x: T, y: T) -> T {
        match self.kind {
            SpaceKind::Circle => {
                let d = self.wrap(x - y);
                d.min(T::one() - d)
            }
            SpaceKind::Interval => (x - y).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NoiseKind {
    /// `g ≡ 1/2` on `[-1, 1]`.
    Uniform,
    /// `g(ω) = (15/16)(1 - ω²)²` on `[-1, 1]`.
    SmoothBump,
}

/// Noise law on the fixed support `Δ = [-1, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NoiseModel {
    pub kind: NoiseKind,
}

impl NoiseModel {
    pub const UNIFORM: NoiseModel = NoiseModel { kind: NoiseKind::Uniform };
    pub const SMOOTH_BUMP: NoiseModel = NoiseModel { kind: NoiseKind::SmoothBump };

    pub fn new(kind: NoiseKind) -> Self {
        NoiseModel { kind }
    }

    pub fn density<T: Real>(&self, w: T) -> T {
        if w < -T::one() || w > T::one() {
            return T::zero();
        }
        match self.kind {
            NoiseKind::Uniform => T::lit(0.5),
            NoiseKind::SmoothBump => {
                let s = T::one() - w * w;
                T::lit(15.0 / 16.0) * s * s
            }
        }
    }

    /// Cumulative distribution `G(ω) = ν([-1, ω])`, closed form for both kinds.
    pub fn cdf<T: Real>(&self, w: T) -> T {
        if w <= -T::one() {
            return T::zero();
        }
        if w >= T::one() {
            return T::one();
        }
        match self.kind {
            NoiseKind::Uniform => (w + T::one()) * T::lit(0.5),
            NoiseKind::SmoothBump => {
                let w2 = w * w;
                let poly = w * (T::one() - w2 * T::lit(2.0 / 3.0) + w2 * w2 * T::lit(0.2));
                T::lit(0.5) + T::lit(15.0 / 16.0) * poly
            }
        }
    }

    /// Inverse of [`NoiseModel::cdf`] on `[0, 1]`.
    pub fn quantile<T: Real>(&self, u: T) -> T {
        let u = u.max(T::zero()).min(T::one());
        match self.kind {
            NoiseKind::Uniform => T::lit(2.0) * u - T::one(),
            NoiseKind::SmoothBump => {
                let (mut lo, mut hi) = (-T::one(), T::one());
                let mut w = T::lit(2.0) * u - T::one();
                for _ in 0..200 {
                    let f = self.cdf(w) - u;
                    if f > T::zero() {
                        hi = w;
                    } else {
                        lo = w;
                    }
                    let d = self.density(w);
                    let mut next = if d > T::zero() { w - f / d } else { (lo + hi) * T::lit(0.5) };
                    if !(next > lo && next < hi) {
                        next = (lo + hi) * T::lit(0.5);
                    }
                    if (next - w).abs() <= T::epsilon() * T::lit(4.0) || hi - lo <= T::epsilon() * T::lit(4.0) {
                        return next;
                    }
                    w = next;
                }
                w
            }
        }
    }

    pub fn mean<T: Real>(&self) -> T {
        T::zero()
    }

    pub fn sample<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let u: f64 = rng.gen();
        self.quantile(T::lit(u))
    }
}

/// Parametrized family `f_a(x; ω)`. The first field of every variant except
/// `PureNoise` is the sweep parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family<T> {
    /// `x + a + σω + (ε/2π) sin 2πx (mod 1)`.
    StandardCircle { a: T, eps: T, sigma: T },
    /// `(a + σω) x (1 - x)` on `[0, 1]`.
    Logistic { a: T, sigma: T },
    /// `c + λx + σω`.
    AffineTest { c: T, lambda: T, sigma: T },
    /// `x + σω`; no parameter dependence.
    PureNoise { sigma: T },
}

impl<T: Real> Family<T> {
    pub fn sigma(&self) -> T {
        match *self {
            Family::StandardCircle { sigma, .. } | Family::Logistic { sigma, .. } | Family::AffineTest { sigma, .. } | Family::PureNoise { sigma } => sigma,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::StandardCircle { .. } => "standard-circle",
            Family::Logistic { .. } => "logistic",
            Family::AffineTest { .. } => "affine",
            Family::PureNoise { .. } => "pure-noise",
        }
    }

    fn default_space(&self) -> PhaseSpace<T> {
        match self {
            Family::StandardCircle { .. } | Family::PureNoise { .. } => PhaseSpace::circle(),
            Family::Logistic { .. } => PhaseSpace {
                kind: SpaceKind::Interval,
                lower: T::zero(),
                upper: T::one(),
            },
            Family::AffineTest { .. } => PhaseSpace {
                kind: SpaceKind::Interval,
                lower: -T::lit(2.0),
                upper: T::lit(2.0),
            },
        }
    }
}

/// Interface shared by all random maps the analysis routines accept.
///
/// `lift` returns the unreduced image (a lift on the circle); the remaining
/// derivative methods refer to the lift as well. The defaults use central
/// finite differences.
pub trait RandomMap<T: Real>: Clone + Send + Sync {
    fn space(&self) -> PhaseSpace<T>;
    fn noise(&self) -> NoiseModel;
    fn lift(&self, x: T, w: T) -> T;

    /// Current value of the sweep parameter.
    fn parameter(&self) -> T;
    /// Same map with the sweep parameter replaced; maps without a parameter return a clone.
    fn with_parameter(&self, a: T) -> Self;

    fn eval(&self, x: T, w: T) -> T {
        self.space().wrap(self.lift(x, w))
    }

    fn dx(&self, x: T, w: T) -> T {
        let h = T::lit(1e-6);
        (self.lift(x + h, w) - self.lift(x - h, w)) / (h + h)
    }

    fn dxx(&self, x: T, w: T) -> T {
        let h = T::lit(1e-4);
        (self.lift(x + h, w) - T::lit(2.0) * self.lift(x, w) + self.lift(x - h, w)) / (h * h)
    }

    fn domega(&self, x: T, w: T) -> T {
        let h = T::lit(1e-6);
        (self.lift(x, w + h) - self.lift(x, w - h)) / (h + h)
    }

    fn da(&self, x: T, w: T) -> T {
        let h = T::lit(1e-6);
        let a = self.parameter();
        (self.with_parameter(a + h).lift(x, w) - self.with_parameter(a - h).lift(x, w)) / (h + h)
    }

    /// `(A, B)` with `f(x; ω) = A + Bω`, when the map is affine in the noise.
    fn affine_in_noise(&self, _x: T) -> Option<(T, T)> {
        None
    }

    /// Critical points of `x ↦ f(x; ω)` that do not depend on `ω`.
    fn critical_points(&self) -> Vec<T> {
        Vec::new()
    }

    /// `E[f(x; ω) - x]` over the noise law (33-point Gauss–Legendre in `ω`).
    fn mean_displacement(&self, x: T) -> T {
        let gl = GaussLegendre::<T>::new(33);
        let noise = self.noise();
        gl.integrate(-T::one(), T::one(), |w| (self.lift(x, w) - x) * noise.density(w))
    }
}

/// A validated member of one of the built-in families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RandomMap1D<T> {
    family: Family<T>,
    space: PhaseSpace<T>,
    noise: NoiseModel,
}

/// Builds a map on the family's natural phase space and validates it.
pub fn make_map<T: Real>(family: Family<T>, noise: NoiseModel) -> Result<RandomMap1D<T>> {
    make_map_on(family, noise, family.default_space())
}

/// Like [`make_map`] with an explicit phase space.
pub fn make_map_on<T: Real>(family: Family<T>, noise: NoiseModel, space: PhaseSpace<T>) -> Result<RandomMap1D<T>> {
    let map = RandomMap1D { family, space, noise };
    map.validate()?;
    Ok(map)
}

impl<T: Real> RandomMap1D<T> {
    pub fn family(&self) -> Family<T> {
        self.family
    }

    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: T| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} must be finite")))
            }
        };
        let sigma = self.family.sigma();
        finite("sigma", sigma)?;
        if sigma < T::zero() {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        match self.family {
            Family::StandardCircle { a, eps, .. } => {
                finite("a", a)?;
                finite("eps", eps)?;
                if !self.space.is_circle() {
                    return Err(Error::invalid("standard circle map requires the circle"));
                }
                if eps < T::zero() || eps >= T::one() {
                    return Err(Error::invalid(format!("eps must lie in [0, 1) for a circle diffeomorphism, got {eps}")));
                }
            }
            Family::Logistic { a, .. } => {
                finite("a", a)?;
                let (lo, hi) = (a - sigma, a + sigma);
                if lo <= T::one() || hi >= T::lit(4.0) {
                    return Err(Error::invalid(format!(
                        "logistic requires a + sigma*omega in (1, 4) for all omega, got [{lo}, {hi}]"
                    )));
                }
                if self.space.is_circle() || self.space.lower() != T::zero() || self.space.upper() != T::one() {
                    return Err(Error::invalid("logistic map lives on [0, 1]"));
                }
            }
            Family::AffineTest { c, lambda, .. } => {
                finite("c", c)?;
                finite("lambda", lambda)?;
                if !self.space.is_circle() {
                    let (lo, hi) = (self.space.lower(), self.space.upper());
                    let ends = [c + lambda * lo, c + lambda * hi];
                    let (min, max) = (ends[0].min(ends[1]) - sigma, ends[0].max(ends[1]) + sigma);
                    if min < lo || max > hi {
                        return Err(Error::invalid(format!(
                            "affine map sends [{lo}, {hi}] to [{min}, {max}], outside the phase space"
                        )));
                    }
                }
            }
            Family::PureNoise { .. } => {}
        }
        if sigma > T::zero() {
            self.check_noise_monotone()?;
        }
        Ok(())
    }

    /// Strict sign check of `ω`-differences on 33 interior x-points × 65 ω-points.
    fn check_noise_monotone(&self) -> Result<()> {
        let (lo, len) = (self.space.lower(), self.space.length());
        let mut sign = 0i8;
        for i in 0..33 {
            let x = lo + len * (T::from_usize_lossy(i) + T::lit(0.5)) / T::lit(33.0);
            let mut prev = self.lift(x, -T::one());
            for j in 1..65 {
                let w = -T::one() + T::lit(2.0) * T::from_usize_lossy(j) / T::lit(64.0);
                let cur = self.lift(x, w);
                let s = if cur > prev {
                    1
                } else if cur < prev {
                    -1
                } else {
                    0
                };
                if s == 0 || (sign != 0 && s != sign) {
                    return Err(Error::invalid(format!("omega -> f(x; omega) is not strictly monotone at x = {x}")));
                }
                sign = s;
                prev = cur;
            }
        }
        Ok(())
    }
}

impl<T: Real> RandomMap<T> for RandomMap1D<T> {
    fn space(&self) -> PhaseSpace<T> {
        self.space
    }

    fn noise(&self) -> NoiseModel {
        self.noise
    }

    fn lift(&self, x: T, w: T) -> T {
        match self.family {
            Family::StandardCircle { a, eps, sigma } => x + a + sigma * w + eps / T::TAU() * (T::TAU() * x).sin(),
            Family::Logistic { a, sigma } => (a + sigma * w) * x * (T::one() - x),
            Family::AffineTest { c, lambda, sigma } => c + lambda * x + sigma * w,
            Family::PureNoise { sigma } => x + sigma * w,
        }
    }

    fn parameter(&self) -> T {
        match self.family {
            Family::StandardCircle { a, .. } | Family::Logistic { a, .. } => a,
            Family::AffineTest { c, .. } => c,
            Family::PureNoise { .. } => T::zero(),
        }
    }

    fn with_parameter(&self, a: T) -> Self {
        let family = match self.family {
            Family::StandardCircle { eps, sigma, .. } => Family::StandardCircle { a, eps, sigma },
            Family::Logistic { sigma, .. } => Family::Logistic { a, sigma },
            Family::AffineTest { lambda, sigma, .. } => Family::AffineTest { c: a, lambda, sigma },
            f @ Family::PureNoise { .. } => f,
        };
        RandomMap1D { family, ..*self }
    }

    fn dx(&self, x: T, w: T) -> T {
        match self.family {
            Family::StandardCircle { eps, .. } => T::one() + eps * (T::TAU() * x).cos(),
            Family::Logistic { a, sigma } => (a + sigma * w) * (T::one() - x - x),
            Family::AffineTest { lambda, .. } => lambda,
            Family::PureNoise { .. } => T::one(),
        }
    }

    fn dxx(&self, x: T, w: T) -> T {
        match self.family {
            Family::StandardCircle { eps, .. } => -eps * T::TAU() * (T::TAU() * x).sin(),
            Family::Logistic { a, sigma } => -T::lit(2.0) * (a + sigma * w),
            Family::AffineTest { .. } | Family::PureNoise { .. } => T::zero(),
        }
    }

    fn domega(&self, x: T, _w: T) -> T {
        match self.family {
            Family::StandardCircle { sigma, .. } | Family::AffineTest { sigma, .. } | Family::PureNoise { sigma } => sigma,
            Family::Logistic { sigma, .. } => sigma * x * (T::one() - x),
        }
    }

    fn da(&self, x: T, _w: T) -> T {
        match self.family {
            Family::StandardCircle { .. } | Family::AffineTest { .. } => T::one(),
            Family::Logistic { .. } => x * (T::one() - x),
            Family::PureNoise { .. } => T::zero(),
        }
    }

    fn affine_in_noise(&self, x: T) -> Option<(T, T)> {
        Some((self.lift(x, T::zero()), self.domega(x, T::zero())))
    }

    fn critical_points(&self) -> Vec<T> {
        match self.family {
            Family::Logistic { .. } => vec![T::lit(0.5)],
            _ => Vec::new(),
        }
    }

    fn mean_displacement(&self, x: T) -> T {
        // both noise laws are symmetric and every family is affine in ω
        self.lift(x, T::zero()) - x
    }
}

/// Orbit `x_0, x_1, …` with the noise draws that produced it.
///
/// `draws[0]` is a zero placeholder; `points[k + 1] = f(points[k]; draws[k + 1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrbitSample<T> {
    pub seed: u64,
    pub points: Vec<T>,
    pub draws: Vec<T>,
}

impl<T: Real> OrbitSample<T> {
    /// Recomputes the orbit from `points[0]` and the stored draws.
    pub fn replay<M: RandomMap<T>>(&self, map: &M) -> Vec<T> {
        let mut out = Vec::with_capacity(self.points.len());
        if let Some(&x0) = self.points.first() {
            out.push(x0);
            let mut x = x0;
            for &w in &self.draws[1..] {
                x = map.eval(x, w);
                out.push(x);
            }
        }
        out
    }
}

/// Deterministic RNG for a seed; all Monte Carlo code derives its streams here.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Samples an orbit of `n` points starting at `x0`.
pub fn sample_orbit<T: Real, M: RandomMap<T>>(map: &M, x0: T, n: usize, seed: u64) -> Result<OrbitSample<T>> {
    if n == 0 {
        return Err(Error::precondition("orbit length must be >= 1"));
    }
    let space = map.space();
    if !space.contains(x0) {
        return Err(Error::precondition(format!("x0 = {x0} is outside the phase space")));
    }
    let noise = map.noise();
    let mut rng = rng_for(seed, 0);
    let mut points = Vec::with_capacity(n);
    let mut draws = Vec::with_capacity(n);
    let mut x = space.wrap(x0);
    points.push(x);
    draws.push(T::zero());
    for _ in 1..n {
        let w: T = noise.sample(&mut rng);
        x = map.eval(x, w);
        points.push(x);
        draws.push(w);
    }
    Ok(OrbitSample { seed, points, draws })
}
