//! Small dense vector helpers on `&[f64]` slices.
//!
//! Problem dimensions in this crate are tiny (n ≤ 6 in practice), so plain
//! slice loops beat any matrix library. All functions assume equal lengths and
//! panic via slice indexing otherwise.

use alloc::vec::Vec;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    libm::sqrt(dot(a, a))
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| if libm::fabs(*x) > m { libm::fabs(*x) } else { m })
}

#[inline]
pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[inline]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

#[inline]
pub fn scale(a: &[f64], s: f64) -> Vec<f64> {
    a.iter().map(|x| x * s).collect()
}

/// `a + s * b` as a new vector.
#[inline]
pub fn axpy(a: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + s * y).collect()
}

#[inline]
pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    norm2(&sub(a, b))
}

/// Unit vector in the direction of `a`, or `None` when `‖a‖` is zero.
pub fn normalize(a: &[f64]) -> Option<Vec<f64>> {
    let n = norm2(a);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some(scale(a, 1.0 / n))
}

pub fn zeros(n: usize) -> Vec<f64> {
    let mut v = Vec::with_capacity(n);
    v.resize(n, 0.0);
    v
}

/// Standard basis vector `e_i` of length `n`.
pub fn basis(n: usize, i: usize) -> Vec<f64> {
    let mut v = zeros(n);
    v[i] = 1.0;
    v
}
