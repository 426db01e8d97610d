//! Quadrature rules and monotone interpolation.

use crate::Real;

/// Gauss–Legendre rule on `[-1, 1]`, nodes computed by Newton iteration on `P_n`.
#[derive(Debug, Clone)]
pub struct GaussLegendre<T> {
    pub nodes: Vec<T>,
    pub weights: Vec<T>,
}

impl<T: Real> GaussLegendre<T> {
    pub fn new(order: usize) -> Self {
        assert!(order >= 1, "quadrature order must be >= 1");
        let n = order;
        let mut nodes = vec![0.0f64; n];
        let mut weights = vec![0.0f64; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0f64, z);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * z * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = nf * (z * p1 - p0) / (z * z - 1.0);
                let dz = p1 / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre {
            nodes: nodes.into_iter().map(T::lit).collect(),
            weights: weights.into_iter().map(T::lit).collect(),
        }
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn scaled(&self, a: T, b: T) -> impl Iterator<Item = (T, T)> + '_ {
        let half = (b - a) * T::lit(0.5);
        let mid = (a + b) * T::lit(0.5);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<F: FnMut(T) -> T>(&self, a: T, b: T, mut f: F) -> T {
        self.scaled(a, b).map(|(x, w)| w * f(x)).sum()
    }
}

/// Adaptive Simpson integration to absolute tolerance `tol`.
pub fn adaptive_simpson<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, tol: T) -> T {
    #[allow(clippy::too_many_arguments)]
    fn step<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T, fa: T, fm: T, fb: T, whole: T, tol: T, depth: u32) -> T {
        let m = (a + b) * T::lit(0.5);
        let lm = (a + m) * T::lit(0.5);
        let rm = (m + b) * T::lit(0.5);
        let flm = f(lm);
        let frm = f(rm);
        let six = T::lit(6.0);
        let left = (m - a) / six * (fa + T::lit(4.0) * flm + fm);
        let right = (b - m) / six * (fm + T::lit(4.0) * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= T::lit(15.0) * tol {
            return left + right + delta / T::lit(15.0);
        }
        let half = tol * T::lit(0.5);
        step(f, a, m, fa, flm, fm, left, half, depth - 1) + step(f, m, b, fm, frm, fb, right, half, depth - 1)
    }
    if a == b {
        return T::zero();
    }
    let fa = f(a);
    let fb = f(b);
    let m = (a + b) * T::lit(0.5);
    let fm = f(m);
    let whole = (b - a) / T::lit(6.0) * (fa + T::lit(4.0) * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Monotone piecewise cubic Hermite interpolant (Fritsch–Carlson slopes).
#[derive(Debug, Clone)]
pub struct Pchip<T> {
    xs: Vec<T>,
    ys: Vec<T>,
    slopes: Vec<T>,
}

impl<T: Real> Pchip<T> {
    /// `xs` must be strictly increasing and `ys` monotone.
    pub fn new(xs: Vec<T>, ys: Vec<T>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n);
        let h: Vec<T> = xs.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<T> = (0..n - 1).map(|i| (ys[i + 1] - ys[i]) / h[i]).collect();
        let mut slopes = vec![T::zero(); n];
        if n == 2 {
            slopes[0] = delta[0];
            slopes[1] = delta[0];
        } else {
            for i in 1..n - 1 {
                if delta[i - 1] * delta[i] <= T::zero() {
                    slopes[i] = T::zero();
                } else {
                    let w1 = T::lit(2.0) * h[i] + h[i - 1];
                    let w2 = h[i] + T::lit(2.0) * h[i - 1];
                    slopes[i] = (w1 + w2) / (w1 / delta[i - 1] + w2 / delta[i]);
                }
            }
            slopes[0] = end_slope(h[0], h[1], delta[0], delta[1]);
            slopes[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        }
        Pchip { xs, ys, slopes }
    }

    /// Cubic Hermite interpolant with given node slopes, limited so that each
    /// piece stays monotone (Fritsch–Carlson `α² + β² ≤ 9`).
    pub fn with_slopes(xs: Vec<T>, ys: Vec<T>, mut slopes: Vec<T>) -> Self {
        let n = xs.len();
        assert!(n >= 2 && ys.len() == n && slopes.len() == n);
        for i in 0..n - 1 {
            let delta = (ys[i + 1] - ys[i]) / (xs[i + 1] - xs[i]);
            if delta == T::zero() {
                slopes[i] = T::zero();
                slopes[i + 1] = T::zero();
                continue;
            }
            for s in [i, i + 1] {
                if slopes[s] * delta < T::zero() {
                    slopes[s] = T::zero();
                }
            }
            let (a, b) = (slopes[i] / delta, slopes[i + 1] / delta);
            let r = a * a + b * b;
            if r > T::lit(9.0) {
                let t = T::lit(3.0) / r.sqrt();
                slopes[i] = t * a * delta;
                slopes[i + 1] = t * b * delta;
            }
        }
        Pchip { xs, ys, slopes }
    }

    fn locate(&self, x: T) -> usize {
        let n = self.xs.len();
        match self.xs.binary_search_by(|p| p.partial_cmp(&x).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(n - 2),
        }
    }

    pub fn eval(&self, x: T) -> T {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let t3 = t2 * t;
        let two = T::lit(2.0);
        let three = T::lit(3.0);
        let h00 = two * t3 - three * t2 + T::one();
        let h10 = t3 - two * t2 + t;
        let h01 = -two * t3 + three * t2;
        let h11 = t3 - t2;
        h00 * self.ys[i] + h10 * h * self.slopes[i] + h01 * self.ys[i + 1] + h11 * h * self.slopes[i + 1]
    }

    pub fn derivative(&self, x: T) -> T {
        let i = self.locate(x);
        let h = self.xs[i + 1] - self.xs[i];
        let t = (x - self.xs[i]) / h;
        let t2 = t * t;
        let six = T::lit(6.0);
        let d00 = (six * t2 - six * t) / h;
        let d10 = T::lit(3.0) * t2 - T::lit(4.0) * t + T::one();
        let d01 = (-six * t2 + six * t) / h;
        let d11 = T::lit(3.0) * t2 - T::lit(2.0) * t;
        d00 * self.ys[i] + d10 * self.slopes[i] + d01 * self.ys[i + 1] + d11 * self.slopes[i + 1]
    }
}

fn end_slope<T: Real>(h0: T, h1: T, d0: T, d1: T) -> T {
    let s = ((T::lit(2.0) * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
    if s * d0 <= T::zero() {
        T::zero()
    } else if d0 * d1 <= T::zero() && s.abs() > (T::lit(3.0) * d0).abs() {
        T::lit(3.0) * d0
    } else {
        s
    }
}

/// Neumaier compensated sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum<T> {
    sum: T,
    comp: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new() -> Self {
        CompensatedSum {
            sum: T::zero(),
            comp: T::zero(),
        }
    }

    pub fn add(&mut self, v: T) {
        let t = self.sum + v;
        if self.sum.abs() >= v.abs() {
            self.comp += (self.sum - t) + v;
        } else {
            self.comp += (v - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> T {
        self.sum + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_exact_for_polynomials() {
        for n in 1..=12 {
            let gl = GaussLegendre::<f64>::new(n);
            for p in 0..(2 * n) {
                let got = gl.integrate(0.0, 2.0, |x| x.powi(p as i32));
                let exact = 2f64.powi(p as i32 + 1) / (p as f64 + 1.0);
                assert!((got - exact).abs() < 1e-12 * exact.max(1.0), "n={n} p={p}");
            }
        }
    }

    #[test]
    fn simpson_matches_closed_form() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12);
        assert!((v - 2.0).abs() < 1e-10);
    }

    #[test]
    fn pchip_reproduces_lines_and_stays_monotone() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let p = Pchip::new(xs.clone(), xs.iter().map(|x| 3.0 * x + 1.0).collect());
        assert!((p.eval(4.3) - 13.9).abs() < 1e-12);
        let step = Pchip::new(xs.clone(), vec![0.0, 0.0, 0.0, 1.0, 1.0, 5.0, 5.0, 5.1, 9.0, 9.0]);
        let mut prev = f64::NEG_INFINITY;
        for i in 0..=900 {
            let v = step.eval(i as f64 / 100.0);
            assert!(v >= prev - 1e-12);
            prev = v;
        }
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn hermite_slopes_are_limited_to_stay_monotone() {
        let xs: Vec<f64> = (0..=8).map(|i| i as f64 / 8.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x * x * x).collect();
        let exact: Vec<f64> = xs.iter().map(|x| 3.0 * x * x).collect();
        let p = Pchip::with_slopes(xs.clone(), ys, exact);
        assert!((p.eval(0.55) - 0.55f64.powi(3)).abs() < 1e-12);
        // steep slopes on a step get clamped
        let ys = vec![0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let p = Pchip::with_slopes(xs, ys, vec![50.0; 9]);
        let v: Vec<f64> = (0..=400).map(|i| p.eval(i as f64 / 400.0)).collect();
        assert!(v.windows(2).all(|w| w[1] >= w[0] - 1e-15));
    }
}
