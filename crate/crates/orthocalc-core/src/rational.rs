//! Exact rational arithmetic over f64 inputs.
//!
//! Every finite f64 is a dyadic rational, so numeric data entering the
//! feasibility subproblems converts losslessly to `BigRational`. All
//! stationarity and constraint-qualification decisions in this crate run on
//! these exact representations; floating point reappears only in reports.

use alloc::vec::Vec;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

/// Exact conversion of a finite f64 into a rational. Panics on NaN or
/// infinity, which never reach the exact layer (membership tests filter
/// unbounded interval endpoints beforehand).
pub fn rat_from_f64(x: f64) -> BigRational {
    assert!(x.is_finite(), "only finite values convert to rationals");
    if x == 0.0 {
        return BigRational::zero();
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { -1 } else { 1 };
    let exponent = ((bits >> 52) & 0x7ff) as i64;
    let fraction = bits & 0xf_ffff_ffff_ffff;
    let (mantissa, exp) = if exponent == 0 {
        (fraction, -1074i64)
    } else {
        (fraction | (1u64 << 52), exponent - 1075)
    };
    let mut num = BigInt::from(mantissa) * BigInt::from(sign);
    let mut den = BigInt::one();
    if exp >= 0 {
        num <<= exp as usize;
    } else {
        den <<= (-exp) as usize;
    }
    BigRational::new(num, den)
}

/// Rounded conversion back to f64 for reporting. Values that are exactly
/// representable, which includes everything produced by `rat_from_f64`, come
/// back bit-identical; others round to nearest.
pub fn rat_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn rvec_from_f64(xs: &[f64]) -> Vec<BigRational> {
    xs.iter().map(|x| rat_from_f64(*x)).collect()
}

pub fn rvec_to_f64(xs: &[BigRational]) -> Vec<f64> {
    xs.iter().map(rat_to_f64).collect()
}

pub fn rdot(a: &[BigRational], b: &[BigRational]) -> BigRational {
    a.iter().zip(b).map(|(x, y)| x * y).fold(BigRational::zero(), |acc, t| acc + t)
}

/// Solves the square system `A y = b` by exact Gaussian elimination.
/// Returns `None` when `A` is singular.
pub fn solve_linear(a: &[Vec<BigRational>], b: &[BigRational]) -> Option<Vec<BigRational>> {
    let n = b.len();
    let mut m: Vec<Vec<BigRational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).find(|r| !m[*r][col].is_zero())?;
        m.swap(col, pivot);
        let p = m[col][col].clone();
        for entry in m[col].iter_mut() {
            *entry /= p.clone();
        }
        for row in 0..n {
            if row != col && !m[row][col].is_zero() {
                let factor = m[row][col].clone();
                for k in col..=n {
                    let delta = &factor * &m[col][k];
                    m[row][k] -= delta;
                }
            }
        }
    }
    Some(m.into_iter().map(|row| row[n].clone()).collect())
}
