//! Dense and iterative eigenvalue routines for nonsymmetric real matrices.
//!
//! Small matrices: Householder reduction to Hessenberg form followed by the
//! shifted double QR iteration (eigenvalues only); eigenvectors by complex
//! inverse iteration. Large matrices: block power (subspace) iteration with
//! Rayleigh–Ritz acceleration.

use num_complex::Complex;
use rand::Rng;

use crate::model::rng_for;
use crate::{Error, Real, Result};

/// Row-major dense matrix helper: `a[i][j]`.
pub type Dense<T> = Vec<Vec<T>>;

fn reduce_hessenberg<T: Real>(h: &mut Dense<T>) {
    let n = h.len();
    if n < 3 {
        return;
    }
    let high = n - 1;
    let mut ort = vec![T::zero(); n];
    for m in 1..high {
        let scale: T = (m..=high).map(|i| h[i][m - 1].abs()).sum();
        if scale == T::zero() {
            continue;
        }
        let mut hh = T::zero();
        for i in (m..=high).rev() {
            ort[i] = h[i][m - 1] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > T::zero() {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;
        for j in m..n {
            let mut f = T::zero();
            for i in (m..=high).rev() {
                f += ort[i] * h[i][j];
            }
            f /= hh;
            for i in m..=high {
                h[i][j] -= f * ort[i];
            }
        }
        for row in h.iter_mut().take(high + 1) {
            let mut f = T::zero();
            for j in (m..=high).rev() {
                f += ort[j] * row[j];
            }
            f /= hh;
            for j in m..=high {
                row[j] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[m][m - 1] = scale * g;
    }
}

/// All eigenvalues of a real square matrix.
pub fn eigenvalues<T: Real>(a: &Dense<T>) -> Result<Vec<Complex<T>>> {
    let nn = a.len();
    if a.iter().any(|r| r.len() != nn) {
        return Err(Error::precondition("matrix must be square"));
    }
    if nn == 0 {
        return Ok(Vec::new());
    }
    let mut h = a.clone();
    reduce_hessenberg(&mut h);
    hessenberg_qr(h)
}

#[allow(clippy::many_single_char_names, unused_assignments)]
fn hessenberg_qr<T: Real>(mut h: Dense<T>) -> Result<Vec<Complex<T>>> {
    let nn = h.len() as isize;
    let mut d = vec![T::zero(); nn as usize];
    let mut e = vec![T::zero(); nn as usize];
    let low: isize = 0;
    let mut n = nn - 1;
    let eps = T::epsilon();
    let mut exshift = T::zero();
    let (mut p, mut q, mut r, mut s, mut z) = (T::zero(), T::zero(), T::zero(), T::zero(), T::zero());
    let (mut x, mut y, mut w);
    let two = T::lit(2.0);

    macro_rules! at {
        ($i:expr, $j:expr) => {
            h[($i) as usize][($j) as usize]
        };
    }

    let mut norm = T::zero();
    for i in 0..nn {
        for j in (i - 1).max(0)..nn {
            norm += at!(i, j).abs();
        }
    }

    let mut iter = 0usize;
    let mut total = 0usize;
    let cap = 60 * nn as usize + 100;
    while n >= low {
        let mut l = n;
        while l > low {
            s = at!(l - 1, l - 1).abs() + at!(l, l).abs();
            if s == T::zero() {
                s = norm;
            }
            // the global floor deflates nilpotent blocks whose diagonal decays with the subdiagonal
            if at!(l, l - 1).abs() < eps * s || at!(l, l - 1).abs() < eps * eps * norm {
                break;
            }
            l -= 1;
        }
        if l == n {
            at!(n, n) += exshift;
            d[n as usize] = at!(n, n);
            e[n as usize] = T::zero();
            n -= 1;
            iter = 0;
        } else if l == n - 1 {
            w = at!(n, n - 1) * at!(n - 1, n);
            p = (at!(n - 1, n - 1) - at!(n, n)) / two;
            q = p * p + w;
            z = q.abs().sqrt();
            at!(n, n) += exshift;
            at!(n - 1, n - 1) += exshift;
            x = at!(n, n);
            if q >= T::zero() {
                z = if p >= T::zero() { p + z } else { p - z };
                d[(n - 1) as usize] = x + z;
                d[n as usize] = d[(n - 1) as usize];
                if z != T::zero() {
                    d[n as usize] = x - w / z;
                }
                e[(n - 1) as usize] = T::zero();
                e[n as usize] = T::zero();
            } else {
                d[(n - 1) as usize] = x + p;
                d[n as usize] = x + p;
                e[(n - 1) as usize] = z;
                e[n as usize] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            x = at!(n, n);
            y = T::zero();
            w = T::zero();
            if l < n {
                y = at!(n - 1, n - 1);
                w = at!(n, n - 1) * at!(n - 1, n);
            }
            if iter == 10 {
                exshift += x;
                for i in low..=n {
                    at!(i, i) -= x;
                }
                s = at!(n, n - 1).abs() + at!(n - 1, n - 2).abs();
                x = T::lit(0.75) * s;
                y = x;
                w = T::lit(-0.4375) * s * s;
            }
            if iter == 30 {
                s = (y - x) / two;
                s = s * s + w;
                if s > T::zero() {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / two + s);
                    for i in low..=n {
                        at!(i, i) -= s;
                    }
                    exshift += s;
                    x = T::lit(0.964);
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total += 1;
            if total > cap {
                return Err(Error::NoConvergence {
                    iterations: total,
                    residual: at!(n, n - 1).abs().as_f64(),
                });
            }
            let mut m = n - 2;
            while m >= l {
                z = at!(m, m);
                r = x - z;
                s = y - z;
                p = (r * s - w) / at!(m + 1, m) + at!(m, m + 1);
                q = at!(m + 1, m + 1) - z - r - s;
                r = at!(m + 2, m + 1);
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if at!(m, m - 1).abs() * (q.abs() + r.abs()) < eps * (p.abs() * (at!(m - 1, m - 1).abs() + z.abs() + at!(m + 1, m + 1).abs())) {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=n {
                at!(i, i - 2) = T::zero();
                if i > m + 2 {
                    at!(i, i - 3) = T::zero();
                }
            }
            let mut k = m;
            while k < n {
                let notlast = k != n - 1;
                if k != m {
                    p = at!(k, k - 1);
                    q = at!(k + 1, k - 1);
                    r = if notlast { at!(k + 2, k - 1) } else { T::zero() };
                    x = p.abs() + q.abs() + r.abs();
                    if x == T::zero() {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < T::zero() {
                    s = -s;
                }
                if s != T::zero() {
                    if k != m {
                        at!(k, k - 1) = -s * x;
                    } else if l != m {
                        at!(k, k - 1) = -at!(k, k - 1);
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;
                    for j in k..nn {
                        p = at!(k, j) + q * at!(k + 1, j);
                        if notlast {
                            p += r * at!(k + 2, j);
                            at!(k + 2, j) -= p * z;
                        }
                        at!(k, j) -= p * x;
                        at!(k + 1, j) -= p * y;
                    }
                    for i in 0..=n.min(k + 3) {
                        p = x * at!(i, k) + y * at!(i, k + 1);
                        if notlast {
                            p += z * at!(i, k + 2);
                            at!(i, k + 2) -= p * r;
                        }
                        at!(i, k) -= p;
                        at!(i, k + 1) -= p * q;
                    }
                }
                k += 1;
            }
        }
    }
    Ok(d.into_iter().zip(e).map(|(re, im)| Complex::new(re, im)).collect())
}

/// LU factorization with partial pivoting of a complex matrix, in place.
struct ComplexLu<T> {
    lu: Vec<Vec<Complex<T>>>,
    piv: Vec<usize>,
}

impl<T: Real> ComplexLu<T> {
    fn new(mut a: Vec<Vec<Complex<T>>>, floor: T) -> Self {
        let n = a.len();
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut best, mut bv) = (k, T::zero());
            for (i, row) in a.iter().enumerate().skip(k) {
                let v = row[k].norm();
                if v > bv {
                    best = i;
                    bv = v;
                }
            }
            a.swap(k, best);
            piv.swap(k, best);
            if a[k][k].norm() < floor {
                // exactly singular shift: perturb the pivot
                a[k][k] = Complex::new(floor, T::zero());
            }
            let pivot = a[k][k];
            let (top, bottom) = a.split_at_mut(k + 1);
            let rk = &top[k];
            for row in bottom.iter_mut() {
                let f = row[k] / pivot;
                row[k] = f;
                if f != Complex::new(T::zero(), T::zero()) {
                    for j in (k + 1)..n {
                        row[j] = row[j] - f * rk[j];
                    }
                }
            }
        }
        ComplexLu { lu: a, piv }
    }

    fn solve(&self, b: &[Complex<T>]) -> Vec<Complex<T>> {
        let n = self.lu.len();
        let mut x: Vec<Complex<T>> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            for j in 0..i {
                let v = self.lu[i][j] * x[j];
                x[i] = x[i] - v;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let v = self.lu[i][j] * x[j];
                x[i] = x[i] - v;
            }
            x[i] = x[i] / self.lu[i][i];
        }
        x
    }
}

pub(crate) fn cnorm<T: Real>(v: &[Complex<T>]) -> T {
    v.iter().map(|c| c.norm_sqr()).sum::<T>().sqrt()
}

fn cdot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter().zip(b).fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

/// Orthonormalizes complex columns in place (two passes of Gram–Schmidt), dropping dependent ones.
fn orthonormalize_complex<T: Real>(cols: &mut Vec<Vec<Complex<T>>>) {
    let mut out: Vec<Vec<Complex<T>>> = Vec::with_capacity(cols.len());
    for mut v in cols.drain(..) {
        let before = cnorm(&v);
        for _ in 0..2 {
            for u in &out {
                let c = cdot(u, &v);
                for (vi, ui) in v.iter_mut().zip(u) {
                    *vi = *vi - c * ui;
                }
            }
        }
        let nv = cnorm(&v);
        if nv > T::lit(1e-10) * before && nv > T::zero() {
            v.iter_mut().for_each(|c| *c = *c / nv);
            out.push(v);
        }
    }
    *cols = out;
}

/// Eigenvectors of `a` for the given eigenvalues by (block) inverse iteration.
///
/// Eigenvalues closer than `1e-8` (relative) form a cluster; a cluster of size
/// `c` receives `c` orthonormal vectors from its invariant subspace.
pub fn eigenvectors<T: Real>(a: &Dense<T>, values: &[Complex<T>], seed: u64) -> Vec<Vec<Complex<T>>> {
    let n = a.len();
    let scale = a.iter().flatten().map(|v| v.abs()).fold(T::zero(), T::max).max(T::min_positive_value());
    let mut out: Vec<Option<Vec<Complex<T>>>> = vec![None; values.len()];
    let mut rng = rng_for(seed, 0x1);
    let cluster_tol = T::lit(1e-8);
    for i in 0..values.len() {
        if out[i].is_some() {
            continue;
        }
        let lam = values[i];
        let members: Vec<usize> = (i..values.len())
            .filter(|&j| out[j].is_none() && (values[j] - lam).norm() <= cluster_tol * T::one().max(lam.norm()))
            .collect();
        let shift = lam + Complex::new(T::epsilon().sqrt() * T::epsilon().sqrt() * scale * T::lit(16.0), T::zero());
        let shifted: Vec<Vec<Complex<T>>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| Complex::new(a[r][c], T::zero()) - if r == c { shift } else { Complex::new(T::zero(), T::zero()) })
                    .collect()
            })
            .collect();
        let lu = ComplexLu::new(shifted, T::epsilon() * scale);
        let mut block: Vec<Vec<Complex<T>>> = members
            .iter()
            .map(|_| {
                (0..n)
                    .map(|_| Complex::new(T::lit(rng.gen::<f64>() - 0.5), T::lit(rng.gen::<f64>() - 0.5)))
                    .collect()
            })
            .collect();
        for _ in 0..3 {
            let mut next: Vec<Vec<Complex<T>>> = block.iter().map(|b| lu.solve(b)).collect();
            orthonormalize_complex(&mut next);
            if next.is_empty() {
                break;
            }
            block = next;
        }
        for (slot, v) in members.iter().zip(block.into_iter().chain(std::iter::repeat_with(Vec::new))) {
            out[*slot] = Some(normalize_phase(v));
        }
    }
    out.into_iter().map(|v| v.unwrap_or_default()).collect()
}

/// Unit 2-norm, largest-modulus component real and positive.
pub(crate) fn normalize_phase<T: Real>(mut v: Vec<Complex<T>>) -> Vec<Complex<T>> {
    if v.is_empty() {
        return v;
    }
    let k = (0..v.len())
        .max_by(|&i, &j| v[i].norm().partial_cmp(&v[j].norm()).unwrap_or(std::cmp::Ordering::Equal))
        .unwrap_or(0);
    let big = v[k];
    if big.norm() == T::zero() {
        return v;
    }
    let phase = big.conj() / big.norm();
    let nv = cnorm(&v);
    v.iter_mut().for_each(|c| *c = *c * phase / nv);
    v
}

/// Options for [`eigs`].
#[derive(Debug, Clone, Copy)]
pub struct EigOptions<T> {
    /// Number of eigenvalues of largest modulus.
    pub k: usize,
    /// Residual tolerance `‖A y − θ y‖ ≤ tol · max(1, |θ|)` for unit `y`.
    pub tol: T,
    /// Cap on operator applications.
    pub max_matvecs: usize,
    /// Block size of the subspace iteration (0 = automatic).
    pub basis: usize,
    /// Seed of the random starting block.
    pub seed: u64,
}

impl<T: Real> EigOptions<T> {
    pub fn new(k: usize) -> Self {
        EigOptions {
            k,
            tol: T::lit(1e-10),
            max_matvecs: 100_000,
            basis: 0,
            seed: 0x5eed,
        }
    }
}

/// Converged eigenpairs sorted by decreasing modulus (ties: increasing argument in `[0, 2π)`).
#[derive(Debug, Clone)]
pub struct EigResult<T> {
    pub values: Vec<Complex<T>>,
    pub vectors: Vec<Vec<Complex<T>>>,
    pub residuals: Vec<T>,
    pub matvecs: usize,
}

fn phase<T: Real>(c: &Complex<T>) -> T {
    let t = c.im.atan2(c.re);
    if t < -T::lit(1e-12) {
        t + T::TAU()
    } else {
        t.max(T::zero())
    }
}

/// Permutation sorting `values` by decreasing modulus; runs of moduli equal
/// within `1e-9` (relative) are ordered by increasing phase in `[0, 2π)`.
pub fn spectral_order<T: Real>(values: &[Complex<T>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&i, &j| values[j].norm().total_cmp_real(&values[i].norm()));
    let tol = T::lit(1e-9);
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() {
            let (a, b) = (values[idx[end - 1]].norm(), values[idx[end]].norm());
            if a - b > tol * T::one().max(a) {
                break;
            }
            end += 1;
        }
        idx[start..end].sort_by(|&i, &j| phase(&values[i]).total_cmp_real(&phase(&values[j])));
        start = end;
    }
    idx
}

/// Values sorted with [`spectral_order`].
pub fn sort_spectrum<T: Real>(values: &[Complex<T>]) -> Vec<Complex<T>> {
    spectral_order(values).into_iter().map(|i| values[i]).collect()
}

trait TotalCmp {
    fn total_cmp_real(&self, other: &Self) -> std::cmp::Ordering;
}

impl<T: Real> TotalCmp for T {
    fn total_cmp_real(&self, other: &Self) -> std::cmp::Ordering {
        self.as_f64().total_cmp(&other.as_f64())
    }
}

fn select_top<T: Real>(values: &[Complex<T>], count: usize) -> Vec<usize> {
    let mut idx = spectral_order(values);
    let mut take = count.min(idx.len());
    // never split a conjugate pair
    if take > 0 && take < idx.len() {
        let last = values[idx[take - 1]];
        if last.im != T::zero() {
            let partner = idx[take..]
                .iter()
                .position(|&j| (values[j] - last.conj()).norm() <= T::lit(1e-9) * T::one().max(last.norm()));
            if let Some(p) = partner {
                idx.swap(take, take + p);
                take += 1;
            }
        }
    }
    idx.truncate(take);
    idx
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Eigenpairs of largest modulus of the linear operator `op` (`y = A x`) on `R^n`.
pub fn eigs<T, F>(n: usize, op: F, opts: EigOptions<T>) -> Result<EigResult<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
{
    if n == 0 || opts.k == 0 {
        return Err(Error::precondition("need n >= 1 and k >= 1"));
    }
    let k = opts.k.min(n);
    let p = if opts.basis > 0 { opts.basis.max(k) } else { 4 * k + 32 };
    if n <= 8 * p {
        return dense_path(n, op, k, opts.seed);
    }
    subspace_path(n, op, k, p, opts)
}

fn dense_path<T, F>(n: usize, op: F, k: usize, seed: u64) -> Result<EigResult<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
{
    let mut a = vec![vec![T::zero(); n]; n];
    let mut e = vec![T::zero(); n];
    let mut col = vec![T::zero(); n];
    for j in 0..n {
        e[j] = T::one();
        op(&e, &mut col);
        e[j] = T::zero();
        for i in 0..n {
            a[i][j] = col[i];
        }
    }
    let all = eigenvalues(&a)?;
    let idx = select_top(&all, k);
    let values: Vec<Complex<T>> = idx.iter().map(|&i| all[i]).collect();
    let vectors = eigenvectors(&a, &values, seed);
    let mut out = EigResult {
        values,
        vectors,
        residuals: Vec::new(),
        matvecs: n,
    };
    out.residuals = out.values.iter().zip(&out.vectors).map(|(l, v)| dense_residual(&a, *l, v)).collect();
    for i in 0..out.values.len() {
        let simple = out.values.iter().enumerate().all(|(j, l)| j == i || (*l - out.values[i]).norm() > T::lit(1e-8));
        if simple && out.residuals[i] > T::lit(1e-13) {
            refine_pair(&a, &mut out.values[i], &mut out.vectors[i], &mut out.residuals[i]);
        }
    }
    Ok(out)
}

/// Rayleigh quotient iteration on a simple pair; keeps the best residual seen.
/// hqr eigenvalues of strongly non-normal matrices can be off by far more
/// than machine precision, which limits plain inverse iteration.
fn refine_pair<T: Real>(a: &Dense<T>, lam: &mut Complex<T>, v: &mut Vec<Complex<T>>, res: &mut T) {
    let n = a.len();
    let scale = a.iter().flatten().map(|x| x.abs()).fold(T::zero(), T::max).max(T::min_positive_value());
    let origin = *lam;
    let reach = T::lit(1e-6) * T::one().max(origin.norm());
    let mut y = v.clone();
    for _ in 0..4 {
        let ay: Vec<Complex<T>> = a
            .iter()
            .map(|row| row.iter().zip(&y).fold(Complex::new(T::zero(), T::zero()), |acc, (aij, yj)| acc + *yj * *aij))
            .collect();
        let mut theta = cdot(&y, &ay) / cdot(&y, &y);
        if origin.im == T::zero() {
            theta.im = T::zero();
        }
        let shifted: Vec<Vec<Complex<T>>> = (0..n)
            .map(|r| {
                (0..n)
                    .map(|c| Complex::new(a[r][c], T::zero()) - if r == c { theta } else { Complex::new(T::zero(), T::zero()) })
                    .collect()
            })
            .collect();
        let lu = ComplexLu::new(shifted, T::epsilon() * scale);
        let next = lu.solve(&y);
        let nn = cnorm(&next);
        if !(nn > T::zero() && nn.is_finite()) {
            break;
        }
        y = next.into_iter().map(|c| c / nn).collect();
        let ay: Vec<Complex<T>> = a
            .iter()
            .map(|row| row.iter().zip(&y).fold(Complex::new(T::zero(), T::zero()), |acc, (aij, yj)| acc + *yj * *aij))
            .collect();
        let mut theta = cdot(&y, &ay) / cdot(&y, &y);
        if origin.im == T::zero() {
            theta.im = T::zero();
        }
        let r = dense_residual(a, theta, &y);
        if (theta - origin).norm() > reach {
            break;
        }
        if r < *res {
            *res = r;
            *lam = theta;
            *v = normalize_phase(y.clone());
        }
        if *res <= T::lit(1e-14) * scale {
            break;
        }
    }
}

fn dense_residual<T: Real>(a: &Dense<T>, lam: Complex<T>, v: &[Complex<T>]) -> T {
    if v.is_empty() {
        return T::infinity();
    }
    let r: Vec<Complex<T>> = a
        .iter()
        .zip(v)
        .map(|(row, vi)| row.iter().zip(v).fold(Complex::new(T::zero(), T::zero()), |acc, (aij, vj)| acc + *vj * *aij) - lam * vi)
        .collect();
    cnorm(&r) / cnorm(v)
}

/// Block power iteration `Q ← orth(A Q)` with Rayleigh–Ritz extraction of the
/// leading `k` pairs from `QᵀAQ`. The block doubles when a round of
/// iterations makes no progress, since strongly non-normal matrices need a
/// wide gap between the `k`-th and the `p+1`-st eigenvalue.
fn subspace_path<T, F>(n: usize, op: F, k: usize, p0: usize, opts: EigOptions<T>) -> Result<EigResult<T>>
where
    T: Real,
    F: Fn(&[T], &mut [T]),
{
    const ROUND: usize = 60;
    let mut rng = rng_for(opts.seed, 0x2);
    let mut random_vec = || -> Vec<T> { (0..n).map(|_| T::lit(rng.gen::<f64>() - 0.5)).collect() };
    let p_max = (n / 2).clamp(p0, 512);
    let mut p = p0.min(p_max);
    let mut q = orthonormalize_real((0..p).map(|_| random_vec()).collect());
    let mut matvecs = 0usize;
    let mut best_residual = T::infinity();
    let mut round_best = T::infinity();
    let mut iter = 0usize;
    let zero = Complex::new(T::zero(), T::zero());
    loop {
        let z: Vec<Vec<T>> = q
            .iter()
            .map(|v| {
                let mut w = vec![T::zero(); n];
                op(v, &mut w);
                w
            })
            .collect();
        matvecs += q.len();
        iter += 1;
        let pq = q.len();
        let b: Dense<T> = (0..pq).map(|i| (0..pq).map(|j| dot(&q[i], &z[j])).collect()).collect();
        let theta = eigenvalues(&b)?;
        let idx = select_top(&theta, k);
        let wanted: Vec<Complex<T>> = idx.iter().map(|&i| theta[i]).collect();
        let coeffs = eigenvectors(&b, &wanted, opts.seed);
        let mut ritz: Vec<(Complex<T>, Vec<Complex<T>>, T)> = Vec::with_capacity(k);
        for (lam, s) in wanted.iter().zip(&coeffs).take(k) {
            if s.is_empty() {
                ritz.push((*lam, Vec::new(), T::infinity()));
                continue;
            }
            let mut y = vec![zero; n];
            let mut r = vec![zero; n];
            for (j, sj) in s.iter().enumerate() {
                for i in 0..n {
                    y[i] = y[i] + *sj * q[j][i];
                    r[i] = r[i] + *sj * z[j][i];
                }
            }
            for i in 0..n {
                r[i] = r[i] - *lam * y[i];
            }
            let ny = cnorm(&y);
            let res = cnorm(&r) / ny;
            y.iter_mut().for_each(|c| *c = *c / ny);
            ritz.push((*lam, y, res));
        }
        let worst = ritz.iter().map(|(l, _, r)| *r / T::one().max(l.norm())).fold(T::zero(), T::max);
        best_residual = best_residual.min(worst);
        round_best = round_best.min(worst);
        if worst <= opts.tol {
            let mut out = EigResult {
                values: Vec::new(),
                vectors: Vec::new(),
                residuals: Vec::new(),
                matvecs,
            };
            for (l, y, r) in ritz {
                out.values.push(l);
                out.vectors.push(normalize_phase(y));
                out.residuals.push(r);
            }
            return Ok(out);
        }
        if matvecs >= opts.max_matvecs {
            return Err(Error::NoConvergence {
                iterations: matvecs,
                residual: best_residual.as_f64(),
            });
        }
        let mut next = z;
        if iter.is_multiple_of(ROUND) && p < p_max {
            p = (2 * p).min(p_max);
            round_best = T::infinity();
        }
        while next.len() < p {
            next.push(random_vec());
        }
        q = orthonormalize_real(next);
        while q.len() < p {
            q.push(random_vec());
            q = orthonormalize_real(q);
        }
    }
}

fn orthonormalize_real<T: Real>(cols: Vec<Vec<T>>) -> Vec<Vec<T>> {
    let mut out: Vec<Vec<T>> = Vec::with_capacity(cols.len());
    for mut v in cols {
        let before = norm(&v);
        for _ in 0..2 {
            for u in &out {
                let c = dot(u, &v);
                v.iter_mut().zip(u).for_each(|(vi, ui)| *vi -= c * *ui);
            }
        }
        let nv = norm(&v);
        if nv > T::lit(1e-10) * before && nv > T::zero() {
            v.iter_mut().for_each(|x| *x /= nv);
            out.push(v);
        }
    }
    out
}
