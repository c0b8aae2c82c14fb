//! Banded linear algebra: LU with partial pivoting, symmetric inertia counts,
//! bisection and inverse iteration for selected eigenpairs.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use num_complex::Complex64;

use crate::error::{FchError, Result};

pub trait Field:
    Copy
    + Debug
    + Send
    + Sync
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
{
    fn zero() -> Self;
    fn from_real(x: f64) -> Self;
    fn modulus(self) -> f64;
}

impl Field for f64 {
    fn zero() -> Self {
        0.0
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn modulus(self) -> f64 {
        self.abs()
    }
}

impl Field for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn modulus(self) -> f64 {
        self.norm()
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals.
/// Row `i` stores columns `i - kl ..= i + ku + kl`; the extra `kl` columns
/// hold fill-in produced by pivoting.
#[derive(Clone, Debug)]
pub struct BandMatrix<T: Field> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Field> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidths(&self) -> (usize, usize) {
        (self.kl, self.ku)
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        j + self.kl >= i && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if i < self.n && j < self.n && self.in_band(i, j) {
            self.data[self.idx(i, j)]
        } else {
            T::zero()
        }
    }

    pub fn add(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(self.in_band(i, j), "entry ({i},{j}) outside band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for (i, yi) in y.iter_mut().enumerate() {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            let mut acc = T::zero();
            for (j, xj) in x.iter().enumerate().take(hi + 1).skip(lo) {
                acc += self.data[self.idx(i, j)] * *xj;
            }
            *yi = acc;
        }
        y
    }

    pub fn norm1(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, c) in col.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *c += self.data[self.idx(i, j)].modulus();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Product of two band matrices of the same size.
    pub fn mul_band(&self, other: &BandMatrix<T>) -> BandMatrix<T> {
        let n = self.n;
        let mut out = BandMatrix::zeros(n, self.kl + other.kl, self.ku + other.ku);
        for i in 0..n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(n - 1);
            for m in lo..=hi {
                let a = self.get(i, m);
                if a == T::zero() {
                    continue;
                }
                let lo2 = m.saturating_sub(other.kl);
                let hi2 = (m + other.ku).min(n - 1);
                for j in lo2..=hi2 {
                    out.add(i, j, a * other.get(m, j));
                }
            }
        }
        out
    }

    /// Factorizes in place with row partial pivoting.
    pub fn lu(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let mut piv = vec![0usize; n];
        let mut growth_min = f64::INFINITY;
        let mut growth_max: f64 = 0.0;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).modulus();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].modulus();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(FchError::Conditioning(f64::INFINITY));
            }
            let last_col = (k + ku + kl).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let a = self.idx(k, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            growth_min = growth_min.min(pivot.modulus());
            growth_max = growth_max.max(pivot.modulus());
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == T::zero() {
                    continue;
                }
                for c in k + 1..=last_col {
                    let kc = self.data[self.idx(k, c)];
                    let ic = self.idx(i, c);
                    self.data[ic] -= l * kc;
                }
            }
        }
        Ok(BandLu {
            m: self,
            piv,
            pivot_ratio: growth_max / growth_min,
        })
    }
}

#[derive(Clone, Debug)]
pub struct BandLu<T: Field> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
    pivot_ratio: f64,
}

impl<T: Field> BandLu<T> {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    /// Ratio of the largest to smallest pivot magnitude; a cheap lower bound
    /// on the condition number.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.m.n;
        let (kl, ku) = (self.m.kl, self.m.ku);
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                b[i] -= self.m.data[self.m.idx(i, k)] * bk;
            }
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for (c, bc) in b.iter().enumerate().take((k + ku + kl).min(n - 1) + 1).skip(k + 1) {
                acc -= self.m.data[self.m.idx(k, c)] * *bc;
            }
            b[k] = acc / self.m.data[self.m.idx(k, k)];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    /// Solves with the (non-conjugated) transpose.
    pub fn solve_transpose_in_place(&self, b: &mut [T]) {
        let n = self.m.n;
        let (kl, ku) = (self.m.kl, self.m.ku);
        for k in 0..n {
            let mut acc = b[k];
            for i in k.saturating_sub(ku + kl)..k {
                acc -= self.m.data[self.m.idx(i, k)] * b[i];
            }
            b[k] = acc / self.m.data[self.m.idx(k, k)];
        }
        for k in (0..n).rev() {
            let mut acc = b[k];
            for (i, bi) in b.iter().enumerate().take((k + kl).min(n - 1) + 1).skip(k + 1) {
                acc -= self.m.data[self.m.idx(i, k)] * *bi;
            }
            b[k] = acc;
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
        }
    }
}

impl BandLu<f64> {
    /// Hager's estimate of the 1-norm of the inverse.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.m.n;
        let mut x = vec![1.0 / n as f64; n];
        let mut est = 0.0;
        for _ in 0..5 {
            let y = self.solve(&x);
            est = y.iter().map(|v| v.abs()).sum::<f64>();
            let mut z: Vec<f64> = y.iter().map(|v| if *v >= 0.0 { 1.0 } else { -1.0 }).collect();
            self.solve_transpose_in_place(&mut z);
            let (jmax, zmax) = z.iter().enumerate().fold(
                (0, 0.0f64),
                |acc, (j, v)| if v.abs() > acc.1 { (j, v.abs()) } else { acc },
            );
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| a * b).sum();
            if zmax <= ztx {
                break;
            }
            x = vec![0.0; n];
            x[jmax] = 1.0;
        }
        est
    }
}

/// Factorizes `a` and returns the factorization together with a 1-norm
/// condition estimate.
pub fn lu_with_condition(a: BandMatrix<f64>) -> Result<(BandLu<f64>, f64)> {
    let norm = a.norm1();
    let lu = a.lu()?;
    let cond = norm * lu.inverse_norm1_estimate();
    Ok((lu, cond))
}

/// Symmetric band matrix, lower triangle stored: `lower[i * (k+1) + m] = S(i, i-m)`.
#[derive(Clone, Debug)]
pub struct SymBand {
    n: usize,
    k: usize,
    lower: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, k: usize) -> Self {
        SymBand {
            n,
            k,
            lower: vec![0.0; n * (k + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.k || i >= self.n {
            0.0
        } else {
            self.lower[i * (self.k + 1) + (i - j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        assert!(i - j <= self.k);
        self.lower[i * (self.k + 1) + (i - j)] = v;
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; n];
        for i in 0..n {
            let d = self.lower[i * (self.k + 1)];
            y[i] += d * x[i];
            for m in 1..=self.k.min(i) {
                let v = self.lower[i * (self.k + 1) + m];
                y[i] += v * x[i - m];
                y[i - m] += v * x[i];
            }
        }
        y
    }

    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let mut r = 0.0;
            let lo_j = i.saturating_sub(self.k);
            let hi_j = (i + self.k).min(self.n - 1);
            for j in lo_j..=hi_j {
                if j != i {
                    r += self.get(i, j).abs();
                }
            }
            let d = self.get(i, i);
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `sigma` (Sylvester inertia of
    /// `S - sigma I` through an unpivoted banded LDL^T).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.n;
        let k = self.k;
        let w = k + 1;
        let scale = self.gershgorin().1.abs().max(self.gershgorin().0.abs()).max(1.0);
        let tiny = f64::EPSILON * scale * 1e-3;
        // l[i*w + m] = L(i, i-m) for m >= 1
        let mut l = vec![0.0; n * w];
        let mut d = vec![0.0; n];
        let mut count = 0;
        for i in 0..n {
            let jlo = i.saturating_sub(k);
            for j in jlo..i {
                let mut s = self.get(i, j);
                let mlo = jlo.max(j.saturating_sub(k));
                for m in mlo..j {
                    s -= l[i * w + (i - m)] * d[m] * l[j * w + (j - m)];
                }
                l[i * w + (i - j)] = s / d[j];
            }
            let mut s = self.get(i, i) - sigma;
            for m in jlo..i {
                let lim = l[i * w + (i - m)];
                s -= lim * lim * d[m];
            }
            if s.abs() < tiny {
                s = -tiny;
            }
            d[i] = s;
            if s < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Eigenvalue with ascending index `idx` by bisection on the inertia.
    pub fn eigenvalue_by_index(&self, idx: usize) -> f64 {
        assert!(idx < self.n);
        let (g_lo, g_hi) = self.gershgorin();
        let pad = 1e-9 * (g_hi - g_lo).abs().max(1.0);
        let mut lo = g_lo - pad;
        let mut hi = g_hi + pad;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > idx {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Eigenpair with ascending index `idx`; the vector has unit Euclidean
    /// norm and the value is the Rayleigh quotient.
    pub fn eigenpair_by_index(&self, idx: usize) -> Result<(f64, Vec<f64>)> {
        let lam = self.eigenvalue_by_index(idx);
        let (g_lo, g_hi) = self.gershgorin();
        let scale = g_lo.abs().max(g_hi.abs()).max(1.0);
        let shift = lam + 1e-10 * scale;
        let mut a = BandMatrix::zeros(self.n, self.k, self.k);
        for i in 0..self.n {
            for j in i.saturating_sub(self.k)..=(i + self.k).min(self.n - 1) {
                let mut v = self.get(i, j);
                if i == j {
                    v -= shift;
                }
                a.set(i, j, v);
            }
        }
        let lu = a.lu()?;
        let mut x: Vec<f64> = (0..self.n)
            .map(|j| 1.0 + 0.25 * ((j as f64) * 0.7548776662).sin())
            .collect();
        normalize(&mut x);
        for _ in 0..4 {
            lu.solve_in_place(&mut x);
            if x.iter().any(|v| !v.is_finite()) {
                return Err(FchError::Spectral("inverse iteration overflow".into()));
            }
            normalize(&mut x);
        }
        let sx = self.matvec(&x);
        let rq: f64 = sx.iter().zip(&x).map(|(a, b)| a * b).sum();
        let res: f64 = sx.iter().zip(&x).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt();
        if res > 1e-6 * scale {
            return Err(FchError::Spectral(format!(
                "inverse iteration residual {res:.3e} for eigenvalue {lam}"
            )));
        }
        Ok((rq, x))
    }
}

fn normalize(x: &mut [f64]) {
    let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    for v in x.iter_mut() {
        *v /= nrm;
    }
}
