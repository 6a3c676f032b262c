//! Dense row-major kernels over `f32` or `f64`.
//!
//! All products go through single-threaded `matrixmultiply`, whose per-entry
//! accumulation order depends only on the inner dimension, so results are
//! bit-stable across calls and row blockings.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Sub};

/// Floating-point storage type of the large tables.
pub trait Real:
    Copy
    + Send
    + Sync
    + Default
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + 'static
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn abs(self) -> Self;
    fn max(self, other: Self) -> Self;

    /// `max_i |a_i − b_i|` over equal-length slices, ignoring NaN.
    fn max_abs_diff(a: &[Self], b: &[Self]) -> Self;

    /// `C = alpha·A·B + beta·C` with explicit strides.
    ///
    /// # Safety
    /// Pointers and strides must describe valid, non-aliasing (for `C`) matrices.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        f64::max(self, other)
    }
    #[inline]
    fn max_abs_diff(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len());
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 was detected and the lengths match.
            return unsafe { avx2::max_abs_diff_f64(a, b) };
        }
        max_abs_diff_lanes(a, b)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn abs(self) -> Self {
        f32::abs(self)
    }
    #[inline]
    fn max(self, other: Self) -> Self {
        f32::max(self, other)
    }
    #[inline]
    fn max_abs_diff(a: &[Self], b: &[Self]) -> Self {
        assert_eq!(a.len(), b.len());
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: AVX2 was detected and the lengths match.
            return unsafe { avx2::max_abs_diff_f32(a, b) };
        }
        max_abs_diff_lanes(a, b)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<T>,
}

impl<T: Real> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![T::ZERO; rows * cols] }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    /// Copy of rows `r0..r1`.
    pub fn rows_range(&self, r0: usize, r1: usize) -> Matrix<T> {
        Matrix { rows: r1 - r0, cols: self.cols, data: self.data[r0 * self.cols..r1 * self.cols].to_vec() }
    }
}

/// `alpha·A[r0..r1]·Bᵀ` where `A` and `B` share their column count.
pub fn gemm_abt_rows<T: Real>(a: &Matrix<T>, r0: usize, r1: usize, b: &Matrix<T>, alpha: T) -> Matrix<T> {
    assert_eq!(a.cols, b.cols, "inner dimensions differ");
    assert!(r0 <= r1 && r1 <= a.rows);
    let m = r1 - r0;
    let mut c = Matrix::zeros(m, b.rows);
    if m == 0 || b.rows == 0 {
        return c;
    }
    let k = a.cols;
    // SAFETY: A rows r0..r1 form an m×k row-major block; Bᵀ is addressed with
    // swapped strides; C is freshly allocated m×n.
    unsafe {
        T::gemm_raw(
            m,
            k,
            b.rows,
            alpha,
            a.data.as_ptr().add(r0 * k),
            k as isize,
            1,
            b.data.as_ptr(),
            1,
            k as isize,
            T::ZERO,
            c.data.as_mut_ptr(),
            b.rows as isize,
            1,
        );
    }
    c
}

/// `A·B` for row-major `A` (m×k) and `B` (k×n).
pub fn gemm_ab<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    assert_eq!(a.cols, b.rows, "inner dimensions differ");
    let mut c = Matrix::zeros(a.rows, b.cols);
    if a.rows == 0 || b.cols == 0 {
        return c;
    }
    // SAFETY: all three buffers are contiguous row-major with the stated shapes.
    unsafe {
        T::gemm_raw(
            a.rows,
            a.cols,
            b.cols,
            T::ONE,
            a.data.as_ptr(),
            a.cols as isize,
            1,
            b.data.as_ptr(),
            b.cols as isize,
            1,
            T::ZERO,
            c.data.as_mut_ptr(),
            b.cols as isize,
            1,
        );
    }
    c
}

/// `max_i |a_i − b_i|`, ignoring NaN; exact, so independent of the reduction order.
#[inline]
pub fn max_abs_diff<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    T::max_abs_diff(a, b)
}

/// Portable 16-lane reduction.
#[inline(always)]
fn max_abs_diff_lanes<T: Real>(a: &[T], b: &[T]) -> T {
    let mut lanes = [T::ZERO; 16];
    let ca = a.chunks_exact(16);
    let cb = b.chunks_exact(16);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..16 {
            lanes[l] = lanes[l].max((x[l] - y[l]).abs());
        }
    }
    let mut m = T::ZERO;
    for v in lanes {
        m = m.max(v);
    }
    for (x, y) in ra.iter().zip(rb) {
        m = m.max((*x - *y).abs());
    }
    m
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use std::arch::x86_64::*;

    /// # Safety
    /// AVX2 must be available and `a.len() == b.len()`.
    #[target_feature(enable = "avx2")]
    pub unsafe fn max_abs_diff_f32(a: &[f32], b: &[f32]) -> f32 {
        let n = a.len();
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mask = _mm256_castsi256_ps(_mm256_set1_epi32(0x7fff_ffff));
        let mut acc = [_mm256_setzero_ps(); 4];
        let mut i = 0;
        while i + 32 <= n {
            for (k, m) in acc.iter_mut().enumerate() {
                let d = _mm256_sub_ps(_mm256_loadu_ps(pa.add(i + 8 * k)), _mm256_loadu_ps(pb.add(i + 8 * k)));
                // Second operand wins on NaN, so NaN differences are skipped.
                *m = _mm256_max_ps(_mm256_and_ps(d, mask), *m);
            }
            i += 32;
        }
        let m = _mm256_max_ps(_mm256_max_ps(acc[0], acc[1]), _mm256_max_ps(acc[2], acc[3]));
        let mut lanes = [0.0f32; 8];
        _mm256_storeu_ps(lanes.as_mut_ptr(), m);
        let mut r = lanes.iter().copied().fold(0.0f32, f32::max);
        while i < n {
            r = r.max((*pa.add(i) - *pb.add(i)).abs());
            i += 1;
        }
        r
    }

    /// # Safety
    /// AVX2 must be available and `a.len() == b.len()`.
    #[target_feature(enable = "avx2")]
    pub unsafe fn max_abs_diff_f64(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let (pa, pb) = (a.as_ptr(), b.as_ptr());
        let mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fff_ffff_ffff_ffff));
        let mut acc = [_mm256_setzero_pd(); 4];
        let mut i = 0;
        while i + 16 <= n {
            for (k, m) in acc.iter_mut().enumerate() {
                let d = _mm256_sub_pd(_mm256_loadu_pd(pa.add(i + 4 * k)), _mm256_loadu_pd(pb.add(i + 4 * k)));
                *m = _mm256_max_pd(_mm256_and_pd(d, mask), *m);
            }
            i += 16;
        }
        let m = _mm256_max_pd(_mm256_max_pd(acc[0], acc[1]), _mm256_max_pd(acc[2], acc[3]));
        let mut lanes = [0.0f64; 4];
        _mm256_storeu_pd(lanes.as_mut_ptr(), m);
        let mut r = lanes.iter().copied().fold(0.0f64, f64::max);
        while i < n {
            r = r.max((*pa.add(i) - *pb.add(i)).abs());
            i += 1;
        }
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abt_matches_naive_and_is_row_block_invariant() {
        let a = Matrix::<f64>::from_fn(7, 5, |i, j| ((i * 5 + j) as f64 * 0.37).sin());
        let full = gemm_abt_rows(&a, 0, 7, &a, 0.2);
        for i in 0..7 {
            for j in 0..7 {
                let naive: f64 = (0..5).map(|k| a.get(i, k) * a.get(j, k)).sum::<f64>() * 0.2;
                assert!((full.get(i, j) - naive).abs() < 1e-14);
                assert_eq!(full.get(i, j), full.get(j, i));
            }
        }
        let block = gemm_abt_rows(&a, 2, 5, &a, 0.2);
        for i in 0..3 {
            assert_eq!(block.row(i), full.row(i + 2));
        }
    }

    #[test]
    fn max_abs_diff_handles_remainders() {
        let a: Vec<f32> = (0..37).map(|i| i as f32).collect();
        let mut b = a.clone();
        b[36] += 2.5;
        b[3] -= 1.0;
        assert_eq!(max_abs_diff(&a, &b), 2.5);
    }

    #[test]
    fn dispatched_kernel_matches_portable_lanes() {
        for len in [0usize, 1, 7, 15, 16, 17, 31, 32, 33, 100, 1000] {
            let a: Vec<f64> = (0..len).map(|i| ((i * 37) as f64 * 0.011).sin()).collect();
            let mut b: Vec<f64> = (0..len).map(|i| ((i * 13) as f64 * 0.007).cos()).collect();
            if len > 3 {
                b[len / 2] = f64::NAN;
            }
            assert_eq!(max_abs_diff(&a, &b), max_abs_diff_lanes(&a, &b), "f64 len {len}");
            let a32: Vec<f32> = a.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.iter().map(|&v| v as f32).collect();
            assert_eq!(max_abs_diff(&a32, &b32), max_abs_diff_lanes(&a32, &b32), "f32 len {len}");
        }
    }
}
