//! Scalar abstraction over `f64` and 256-bit software floats, plus a
//! subtraction-free stationary solver usable with either.

use std::fmt::{Debug, Display};
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub use f256::f256;

pub trait Real:
    Copy
    + Debug
    + Display
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    /// Significant decimal digits carried.
    const DIGITS: u32;
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn abs(self) -> Self {
        if self < Self::zero() {
            -self
        } else {
            self
        }
    }

    fn powu(self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self;
        let mut k = n;
        while k > 0 {
            if k & 1 == 1 {
                acc *= base;
            }
            base *= base;
            k >>= 1;
        }
        acc
    }
}

impl Real for f64 {
    const DIGITS: u32 = 15;
    const NAME: &'static str = "double";

    fn from_f64(x: f64) -> Self {
        x
    }

    fn to_f64(self) -> f64 {
        self
    }
}

impl Real for f256 {
    const DIGITS: u32 = 71;
    const NAME: &'static str = "extended";

    fn from_f64(x: f64) -> Self {
        f256::from(x)
    }

    fn to_f64(self) -> f64 {
        if self.is_nan() {
            return f64::NAN;
        }
        if self.is_infinite() {
            return if self.is_sign_negative() { f64::NEG_INFINITY } else { f64::INFINITY };
        }
        let (sign, exp, (hi, lo)) = self.as_sign_exp_signif();
        if hi == 0 && lo == 0 {
            return 0.0;
        }
        // Keep the leading 64 bits of the 256-bit significand.
        let bits = if hi != 0 { 256 - hi.leading_zeros() } else { 128 - lo.leading_zeros() };
        let shift = bits.saturating_sub(64);
        let top: u64 = if shift >= 128 {
            (hi >> (shift - 128)) as u64
        } else if shift == 0 {
            lo as u64
        } else {
            ((hi << (128 - shift)) | (lo >> shift)) as u64
        };
        let v = scale2(top as f64, exp + shift as i32);
        if sign == 1 {
            -v
        } else {
            v
        }
    }
}

fn scale2(mut x: f64, mut e: i32) -> f64 {
    while e > 1000 {
        x *= 2f64.powi(1000);
        e -= 1000;
    }
    while e < -1000 {
        x *= 2f64.powi(-1000);
        e += 1000;
    }
    x * 2f64.powi(e)
}

/// Stationary vector of a dense stochastic matrix by Grassmann–Taksar–Heyman
/// elimination. Rows of `a` need not be normalized.
pub fn gth<R: Real>(mut a: Vec<Vec<R>>) -> Option<Vec<R>> {
    let n = a.len();
    let zero = R::zero();
    for k in (1..n).rev() {
        let mut s = zero;
        for v in &a[k][..k] {
            s += *v;
        }
        if !(s > zero) {
            return None;
        }
        let (top, bottom) = a.split_at_mut(k);
        let pivot = &bottom[0];
        for row in top.iter_mut() {
            let f = row[k] / s;
            if f != zero {
                for (x, y) in row[..k].iter_mut().zip(&pivot[..k]) {
                    *x += f * *y;
                }
            }
        }
    }
    let mut pi = vec![zero; n];
    if n == 0 {
        return Some(pi);
    }
    pi[0] = R::one();
    for j in 1..n {
        let mut num = zero;
        let mut den = zero;
        for i in 0..j {
            num += pi[i] * a[i][j];
            den += a[j][i];
        }
        pi[j] = num / den;
    }
    let mut total = zero;
    for p in &pi {
        total += *p;
    }
    for p in pi.iter_mut() {
        *p = *p / total;
    }
    Some(pi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f256_round_trips_doubles() {
        for x in [1.0, -2.5, 0.4999, 1e-300, 3.7e250, 138240.92, -0.0312, 5e-324] {
            assert_eq!(f256::from_f64(x).to_f64(), x, "{x}");
        }
        assert_eq!(f256::zero().to_f64(), 0.0);
    }

    #[test]
    fn f256_keeps_digits_doubles_lose() {
        let big = f256::from_f64(1e40);
        let tiny = f256::from_f64(1.0);
        assert_eq!(((big + tiny) - big).to_f64(), 1.0);
        assert_eq!((1e40f64 + 1.0) - 1e40, 0.0);
    }

    #[test]
    fn powers() {
        assert_eq!(0.5f64.powu(10), 0.5f64.powi(10));
        assert_eq!(f256::from_f64(0.5).powu(3).to_f64(), 0.125);
        assert_eq!(7.0f64.powu(0), 1.0);
    }

    #[test]
    fn gth_birth_death_both_precisions() {
        let rows = [[0.5, 0.5, 0.0], [0.25, 0.5, 0.25], [0.0, 0.25, 0.75]];
        let a: Vec<Vec<f64>> = rows.iter().map(|r| r.to_vec()).collect();
        let pi = gth(a).unwrap();
        for (p, q) in pi.iter().zip([0.2, 0.4, 0.4]) {
            assert!((p - q).abs() < 1e-15);
        }
        let b: Vec<Vec<f256>> = rows.iter().map(|r| r.iter().map(|&v| f256::from_f64(v)).collect()).collect();
        let pi = gth(b).unwrap();
        assert!((pi[0] - f256::one() / f256::from_f64(5.0)).abs().to_f64() < 1e-60);
    }

    #[test]
    fn gth_reports_reducible() {
        assert!(gth(vec![vec![1.0, 0.0], vec![0.0, 1.0]]).is_none());
    }
}
