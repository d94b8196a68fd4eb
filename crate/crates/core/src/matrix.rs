//! Small dense square matrices over `f64` or `Complex64`.
//!
//! Cascade weights are desk-scale (p up to ~10), so a flat row-major
//! `Vec` is all the structure we need.

use std::fmt;
use std::ops::{Add, AddAssign, Mul};

use num_complex::Complex64;
use num_traits::Zero;
use serde::{Deserialize, Serialize};

/// Entry type of a weight matrix.
pub trait Scalar:
    Copy
    + Zero
    + Add<Output = Self>
    + Mul<Output = Self>
    + AddAssign
    + PartialEq
    + fmt::Debug
    + Send
    + Sync
{
    fn modulus(self) -> f64;
    fn is_finite(self) -> bool;
    fn from_real(x: f64) -> Self;
}

impl Scalar for f64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.abs()
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        x
    }
}

impl Scalar for Complex64 {
    #[inline]
    fn modulus(self) -> f64 {
        self.norm()
    }
    #[inline]
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    #[inline]
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
}

/// A p×p matrix stored row-major.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T = f64> {
    p: usize,
    data: Vec<T>,
}

pub type CMatrix = Matrix<Complex64>;

impl<T: Scalar> Matrix<T> {
    pub fn zeros(p: usize) -> Self {
        Matrix {
            p,
            data: vec![T::zero(); p * p],
        }
    }

    pub fn identity(p: usize) -> Self {
        let mut m = Self::zeros(p);
        for i in 0..p {
            m.data[i * p + i] = T::from_real(1.0);
        }
        m
    }

    /// Builds a matrix from rows. Returns `None` if the rows are not square.
    pub fn from_rows(rows: &[Vec<T>]) -> Option<Self> {
        let p = rows.len();
        if p == 0 || rows.iter().any(|r| r.len() != p) {
            return None;
        }
        Some(Matrix {
            p,
            data: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn from_flat(p: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), p * p, "flat data must hold p*p entries");
        Matrix { p, data }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.p + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.p + j] = v;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        self.data.chunks(self.p).map(|r| r.to_vec()).collect()
    }

    pub fn map<U: Scalar>(&self, f: impl Fn(T) -> U) -> Matrix<U> {
        Matrix {
            p: self.p,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn try_map<U: Scalar, E>(&self, f: impl Fn(T) -> Result<U, E>) -> Result<Matrix<U>, E> {
        let data = self
            .data
            .iter()
            .map(|&x| f(x))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Matrix { p: self.p, data })
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|x| x * c)
    }

    /// `self * rhs`, written into `out` (no allocation).
    #[inline]
    pub fn mul_into(&self, rhs: &Self, out: &mut Self) {
        let p = self.p;
        debug_assert_eq!(rhs.p, p);
        debug_assert_eq!(out.p, p);
        for i in 0..p {
            let row = &self.data[i * p..(i + 1) * p];
            let dst = &mut out.data[i * p..(i + 1) * p];
            dst.iter_mut().for_each(|d| *d = T::zero());
            for (k, &a) in row.iter().enumerate() {
                if a == T::zero() {
                    continue;
                }
                let rrow = &rhs.data[k * p..(k + 1) * p];
                for (d, &b) in dst.iter_mut().zip(rrow) {
                    *d += a * b;
                }
            }
        }
    }

    pub fn matmul(&self, rhs: &Self) -> Self {
        let mut out = Self::zeros(self.p);
        self.mul_into(rhs, &mut out);
        out
    }

    /// Integer power by repeated multiplication.
    pub fn pow(&self, n: u32) -> Self {
        let mut acc = Self::identity(self.p);
        for _ in 0..n {
            acc = acc.matmul(self);
        }
        acc
    }

    /// Matrix-vector product `self · v`.
    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        self.data
            .chunks(self.p)
            .map(|row| row.iter().zip(v).fold(T::zero(), |s, (&a, &b)| s + a * b))
            .collect()
    }

    /// Row-vector product `u · self`.
    pub fn vec_mul(&self, u: &[T]) -> Vec<T> {
        let p = self.p;
        let mut out = vec![T::zero(); p];
        for (i, &ui) in u.iter().enumerate() {
            for (o, &a) in out.iter_mut().zip(&self.data[i * p..(i + 1) * p]) {
                *o += ui * a;
            }
        }
        out
    }

    pub fn add_assign(&mut self, rhs: &Self) {
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    /// `self += c * rhs`.
    pub fn add_scaled(&mut self, rhs: &Self, c: T) {
        for (a, &b) in self.data.iter_mut().zip(&rhs.data) {
            *a += c * b;
        }
    }

    /// Entrywise absolute sum, the matrix norm used throughout the crate.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|x| x.modulus()).sum()
    }

    /// Entrywise moduli (the "hat" matrix of a complex weight).
    pub fn abs(&self) -> Matrix<f64> {
        self.map(|x| x.modulus())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a + b * T::from_real(-1.0)).modulus())
            .fold(0.0, f64::max)
    }
}

impl Matrix<f64> {
    pub fn is_nonnegative(&self) -> bool {
        self.data.iter().all(|&x| x >= 0.0)
    }

    pub fn min_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_entry(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.data.chunks(self.p).map(|r| r.iter().sum()).collect()
    }

    pub fn transpose(&self) -> Self {
        let p = self.p;
        let mut t = Self::zeros(p);
        for i in 0..p {
            for j in 0..p {
                t.data[j * p + i] = self.data[i * p + j];
            }
        }
        t
    }

    /// True if column `j` has every entry strictly positive.
    pub fn has_positive_column(&self) -> bool {
        (0..self.p).any(|j| (0..self.p).all(|i| self.get(i, j) > 0.0))
    }

    /// Entrywise `[a_ij]^t` with `0^t = 0` for `t > 0`.
    ///
    /// `0^0` and `0^t` for `t < 0` are rejected; the returned error carries the offending
    /// position.
    pub fn entry_pow(&self, t: f64) -> Result<Self, (usize, usize)> {
        let p = self.p;
        let mut out = Self::zeros(p);
        for (idx, &a) in self.data.iter().enumerate() {
            out.data[idx] = if a == 0.0 {
                if t > 0.0 {
                    0.0
                } else {
                    return Err((idx / p, idx % p));
                }
            } else {
                a.powf(t)
            };
        }
        Ok(out)
    }

    /// Boolean support pattern.
    pub fn support(&self) -> Vec<bool> {
        self.data.iter().map(|&x| x > 0.0).collect()
    }

    /// Exact-bit key for duplicate detection.
    pub fn bit_key(&self) -> Vec<u64> {
        self.data.iter().map(|x| x.to_bits()).collect()
    }
}

impl<T: Scalar> fmt::Debug for Matrix<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.data.chunks(self.p)).finish()
    }
}

/// `out = a · b` on flat row-major p×p slices.
#[inline]
pub fn mul_flat<T: Scalar>(a: &[T], b: &[T], out: &mut [T], p: usize) {
    for i in 0..p {
        let dst = &mut out[i * p..(i + 1) * p];
        dst.iter_mut().for_each(|d| *d = T::zero());
        for (k, &x) in a[i * p..(i + 1) * p].iter().enumerate() {
            if x == T::zero() {
                continue;
            }
            for (d, &y) in dst.iter_mut().zip(&b[k * p..(k + 1) * p]) {
                *d += x * y;
            }
        }
    }
}

/// Smallest `n ≤ p² − 2p + 2` with `M^n` entrywise positive, computed on
/// the boolean support pattern. `None` means the matrix is not primitive.
pub fn primitivity_exponent(m: &Matrix<f64>) -> Option<u32> {
    let p = m.dim();
    let base = m.support();
    let bound = wielandt_bound(p);
    let mut cur = base.clone();
    for n in 1..=bound {
        if cur.iter().all(|&b| b) {
            return Some(n);
        }
        cur = bool_mul(&cur, &base, p);
    }
    None
}

/// Wielandt's bound on the primitivity exponent of a p×p matrix.
pub fn wielandt_bound(p: usize) -> u32 {
    (p * p + 2 - 2 * p) as u32
}

pub(crate) fn bool_mul(a: &[bool], b: &[bool], p: usize) -> Vec<bool> {
    let mut out = vec![false; p * p];
    for i in 0..p {
        for k in 0..p {
            if a[i * p + k] {
                for j in 0..p {
                    out[i * p + j] |= b[k * p + j];
                }
            }
        }
    }
    out
}
