//! Banded direct solvers.
//!
//! [`BandLu`] is Gaussian elimination with partial pivoting on a general band
//! matrix (row interchanges widen the upper band by `kl`, exactly as in
//! LAPACK's `gbtrf`). [`SymBandMatrix::ldlt_inertia`] is a pivot-free
//! symmetric factorization used only for Sylvester inertia counts, where the
//! signs of the pivots are all that matter.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64;

/// The field operations the banded kernels need, for `f64` and `Complex64`.
pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn zero() -> Self;
    fn one() -> Self;
    fn from_real(v: f64) -> Self;
    fn abs(self) -> f64;
    fn conj(self) -> Self;
    fn scale(self, s: f64) -> Self;
    /// `self / |self|`, or one at zero.
    fn signum(self) -> Self;
    fn re(self) -> f64;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_real(v: f64) -> Self {
        v
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn signum(self) -> Self {
        if self >= 0.0 {
            1.0
        } else {
            -1.0
        }
    }
    fn re(self) -> f64 {
        self
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_real(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn signum(self) -> Self {
        let a = self.norm();
        if a == 0.0 {
            Self::one()
        } else {
            self / a
        }
    }
    fn re(self) -> f64 {
        self.re
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals, stored with
/// `kl` extra super-diagonals of room for pivoting fill-in.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            width,
            data: vec![T::zero(); n * width],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j + self.kl >= i && j <= i + self.kl + self.ku);
        i * self.width + (j + self.kl - i)
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        if j + self.kl < i || j > i + self.ku {
            T::zero()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(
            j + self.kl >= i && j <= i + self.ku,
            "({i},{j}) outside band kl={} ku={}",
            self.kl,
            self.ku
        );
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    /// 1-norm (maximum absolute column sum).
    pub fn norm_one(&self) -> f64 {
        let mut col = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku).min(self.n - 1);
            for (j, c) in col.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *c += self.get(i, j).abs();
            }
        }
        col.into_iter().fold(0.0, f64::max)
    }

    /// Factorizes in place. Returns `None` if an exactly zero pivot column
    /// is met (the matrix is singular).
    pub fn lu(mut self) -> Option<BandLu<T>> {
        let n = self.n;
        let (kl, ku) = (self.kl, self.ku);
        let anorm = self.norm_one();
        let mut piv = vec![0usize; n];
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let last_col = (k + kl + ku).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].abs();
            for i in k + 1..=last_row {
                let v = self.data[self.idx(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 {
                return None;
            }
            piv[k] = p;
            if p != k {
                for j in k..=last_col {
                    let a = self.idx(k, j);
                    let b = self.idx(p, j);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                if l == T::zero() {
                    continue;
                }
                let rk = self.idx(k, k + 1);
                let ri = self.idx(i, k + 1);
                let len = last_col - k;
                for t in 0..len {
                    let u = self.data[rk + t];
                    self.data[ri + t] -= l * u;
                }
            }
        }
        Some(BandLu {
            band: self,
            piv,
            anorm,
        })
    }
}

/// Pivoted LU factors of a [`BandMatrix`].
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    band: BandMatrix<T>,
    piv: Vec<usize>,
    anorm: f64,
}

impl<T: Scalar> BandLu<T> {
    pub fn n(&self) -> usize {
        self.band.n
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let a = &self.band;
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.piv[k]);
            let xk = x[k];
            if xk == T::zero() {
                continue;
            }
            for i in k + 1..=(k + kl).min(n - 1) {
                x[i] -= a.data[a.idx(i, k)] * xk;
            }
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            let last = (i + kl + ku).min(n - 1);
            let base = a.idx(i, i);
            for j in i + 1..=last {
                s -= a.data[base + (j - i)] * x[j];
            }
            x[i] = s / a.data[base];
        }
        x
    }

    /// Solves `Aᵀ x = b` (plain transpose, no conjugation).
    pub fn solve_transpose(&self, b: &[T]) -> Vec<T> {
        let a = &self.band;
        let n = a.n;
        let (kl, ku) = (a.kl, a.ku);
        let mut x = b.to_vec();
        // Uᵀ y = b
        for j in 0..n {
            let base = a.idx(j, j);
            let yj = x[j] / a.data[base];
            x[j] = yj;
            for i in j + 1..=(j + kl + ku).min(n - 1) {
                x[i] -= a.data[base + (i - j)] * yj;
            }
        }
        // (P_k L_k)ᵀ in reverse order
        for k in (0..n).rev() {
            let mut s = x[k];
            for i in k + 1..=(k + kl).min(n - 1) {
                s -= a.data[a.idx(i, k)] * x[i];
            }
            x[k] = s;
            x.swap(k, self.piv[k]);
        }
        x
    }

    /// Solves `Aᴴ x = b`.
    pub fn solve_adjoint(&self, b: &[T]) -> Vec<T> {
        let bc: Vec<T> = b.iter().map(|v| v.conj()).collect();
        self.solve_transpose(&bc)
            .into_iter()
            .map(|v| v.conj())
            .collect()
    }

    /// Hager/Higham estimate of `‖A⁻¹‖₁`.
    pub fn inv_norm_one_estimate(&self) -> f64 {
        let n = self.n();
        if n == 0 {
            return 0.0;
        }
        let norm1 = |v: &[T]| v.iter().map(|x| x.abs()).sum::<f64>();
        let mut x = vec![T::from_real(1.0 / n as f64); n];
        let mut est = 0.0;
        let mut last_j = usize::MAX;
        for _ in 0..5 {
            let y = self.solve(&x);
            let new_est = norm1(&y);
            if new_est <= est && last_j != usize::MAX {
                break;
            }
            est = new_est;
            let xi: Vec<T> = y.iter().map(|v| v.signum()).collect();
            let z = self.solve_adjoint(&xi);
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(j, v)| (j, v.abs()))
                .fold((0, -1.0), |acc, c| if c.1 > acc.1 { c } else { acc });
            let ztx: f64 = z.iter().zip(&x).map(|(a, b)| (a.conj() * *b).re()).sum();
            if zmax <= ztx || j == last_j {
                break;
            }
            last_j = j;
            x = vec![T::zero(); n];
            x[j] = T::one();
        }
        // alternating-sign safeguard vector
        let alt: Vec<T> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                let t = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.0 };
                T::from_real(s * (1.0 + t))
            })
            .collect();
        let alt_est = 2.0 * norm1(&self.solve(&alt)) / (3.0 * n as f64);
        est.max(alt_est)
    }

    /// Estimated 1-norm condition number.
    pub fn condition_estimate(&self) -> f64 {
        self.anorm * self.inv_norm_one_estimate()
    }
}

/// Real symmetric band matrix, lower triangle stored row-major.
#[derive(Debug, Clone)]
pub struct SymBandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl SymBandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Sets entry `(i, j)` with `j ≤ i`.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(j <= i && i - j <= self.bw);
        self.data[i * (self.bw + 1) + (j + self.bw - i)] = v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[i * (self.bw + 1) + (j + self.bw - i)]
        }
    }

    /// Gershgorin interval containing the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let from = i.saturating_sub(self.bw);
            let to = (i + self.bw).min(self.n - 1);
            let radius: f64 = (from..=to)
                .filter(|&j| j != i)
                .map(|j| self.get(i, j).abs())
                .sum();
            let d = self.get(i, i);
            lo = lo.min(d - radius);
            hi = hi.max(d + radius);
        }
        (lo, hi)
    }

    /// Number of negative, zero and positive eigenvalues of `self - shift·I`
    /// via a pivot-free `LDLᵀ`. Exactly zero pivots are replaced by
    /// `zero_pivot` (callers pass a tiny multiple of `‖K‖`) and counted in
    /// the middle slot.
    pub fn ldlt_inertia(&self, shift: f64, zero_pivot: f64) -> (usize, usize, usize) {
        let n = self.n;
        let bw = self.bw;
        let w = bw + 1;
        // l[i*w + (j + bw - i)] = L_ij for j < i; slot bw holds d_i
        let mut l = self.data.clone();
        for i in 0..n {
            l[i * w + bw] -= shift;
        }
        let mut neg = 0;
        let mut zero = 0;
        let mut pos = 0;
        // work row: c_k = L_ik d_k
        let mut c = vec![0.0; w];
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let row = i * w;
            for j in j0..i {
                // s = a_ij - Σ_{k<j} L_ik d_k L_jk, over k ≥ max(j0, j - bw) = j0 since j ≤ i
                let mut s = l[row + (j + bw - i)];
                let jrow = j * w;
                let k0 = j0.max(j.saturating_sub(bw));
                for k in k0..j {
                    s -= c[k - j0] * l[jrow + (k + bw - j)];
                }
                let dj = l[jrow + bw];
                c[j - j0] = s;
                l[row + (j + bw - i)] = s / dj;
            }
            let mut d = l[row + bw];
            for j in j0..i {
                d -= c[j - j0] * l[row + (j + bw - i)];
            }
            if d == 0.0 {
                zero += 1;
                d = zero_pivot;
            } else if d < 0.0 {
                neg += 1;
            } else {
                pos += 1;
            }
            l[row + bw] = d;
        }
        (neg, zero, pos)
    }

    /// Number of eigenvalues strictly below `x` (zero pivots counted as
    /// negative, which only matters exactly at an eigenvalue).
    pub fn count_below(&self, x: f64) -> usize {
        let (neg, zero, _) = self.ldlt_inertia(x, -f64::MIN_POSITIVE);
        neg + zero
    }

    /// The `k`-th smallest eigenvalue (0-based) by Sturm bisection, to
    /// absolute accuracy `tol`.
    pub fn eigenvalue_bisect(&self, k: usize, tol: f64) -> f64 {
        assert!(k < self.n);
        let (mut lo, mut hi) = self.gershgorin();
        let pad = 1e-12 * (lo.abs().max(hi.abs()) + 1.0);
        lo -= pad;
        hi += pad;
        while hi - lo > tol {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }
}
