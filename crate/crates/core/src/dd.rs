//! Double-double arithmetic: an unevaluated sum `hi + lo` with `|lo| ≤ ulp(hi)/2`.

use std::ops::{Add, Mul};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let err = (a - (s - bb)) + (b - bb);
    (s, err)
}

#[inline]
fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: Self = Self { hi: 0.0, lo: 0.0 };
    pub const ONE: Self = Self { hi: 1.0, lo: 0.0 };

    pub fn from_f64(x: f64) -> Self {
        Self { hi: x, lo: 0.0 }
    }

    /// Exact representation of any `u64` (64 bits fit in 106).
    pub fn from_u64(n: u64) -> Self {
        let hi = n as f64;
        // hi is within 2^11 of n, so the difference is exact in f64.
        let lo = (n as i128 - hi as i128) as f64;
        let (hi, lo) = fast_two_sum(hi, lo);
        Self { hi, lo }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    pub fn mul_f64(self, b: f64) -> Self {
        let (p, e) = two_prod(self.hi, b);
        let e = e + self.lo * b;
        let (hi, lo) = fast_two_sum(p, e);
        Self { hi, lo }
    }

    /// Largest integer not exceeding the represented value.
    ///
    /// Returns `None` for non-finite values or magnitudes beyond `i128`.
    pub fn floor(self) -> Option<i128> {
        if !self.hi.is_finite() || self.hi.abs() >= 1.0e37 {
            return None;
        }
        let fh = self.hi.floor();
        if fh != self.hi {
            // hi is not an integer, so |lo| < the distance to either neighbour.
            return Some(fh as i128);
        }
        Some(fh as i128 + self.lo.floor() as i128)
    }

    /// Signed distance from the represented value to the nearest integer.
    pub fn distance_to_nearest_integer(self) -> f64 {
        let r = self.hi.round();
        let (d, e) = two_sum(self.hi - r, self.lo);
        let d = d + e;
        if d > 0.5 {
            d - 1.0
        } else if d < -0.5 {
            d + 1.0
        } else {
            d
        }
    }
}

impl Add for DoubleDouble {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        let (s, e) = two_sum(self.hi, rhs.hi);
        let (t, f) = two_sum(self.lo, rhs.lo);
        let (s, e) = fast_two_sum(s, e + t);
        let (hi, lo) = fast_two_sum(s, e + f);
        Self { hi, lo }
    }
}

impl Mul for DoubleDouble {
    type Output = Self;
    fn mul(self, rhs: Self) -> Self {
        let (p, e) = two_prod(self.hi, rhs.hi);
        let e = e + (self.hi * rhs.lo + self.lo * rhs.hi);
        let (hi, lo) = fast_two_sum(p, e);
        Self { hi, lo }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn u64_round_trip_is_exact() {
        for n in [0_u64, 1, (1 << 53) + 1, u64::MAX, 9_007_199_254_740_993, 12_345_678_901_234_567_891] {
            let d = DoubleDouble::from_u64(n);
            assert_eq!(d.floor(), Some(n as i128));
            assert_eq!(d.hi as i128 + d.lo as i128, n as i128);
        }
    }

    #[test]
    fn product_keeps_low_bits() {
        // (2^53 + 1) * 3 is not representable in f64 but is in double-double
        let d = DoubleDouble::from_u64((1 << 53) + 1).mul_f64(3.0);
        assert_eq!(d.floor(), Some(3 * ((1_i128 << 53) + 1)));
    }

    #[test]
    fn floor_handles_negative_low_part() {
        let d = DoubleDouble { hi: 5.0, lo: -1e-20 };
        assert_eq!(d.floor(), Some(4));
        let d = DoubleDouble { hi: 5.0, lo: 1e-20 };
        assert_eq!(d.floor(), Some(5));
        let d = DoubleDouble { hi: 4.5, lo: 1e-17 };
        assert_eq!(d.floor(), Some(4));
    }

    #[test]
    fn nearest_integer_distance() {
        let d = DoubleDouble { hi: 7.0, lo: -3e-18 };
        assert_eq!(d.distance_to_nearest_integer(), -3e-18);
        assert!((DoubleDouble::from_f64(2.25).distance_to_nearest_integer() - 0.25).abs() < 1e-16);
    }

    #[test]
    fn add_and_mul_agree_with_f64_on_easy_inputs() {
        let a = DoubleDouble::from_f64(1.5);
        let b = DoubleDouble::from_f64(2.25);
        assert_eq!((a + b).to_f64(), 3.75);
        assert_eq!((a * b).to_f64(), 3.375);
        assert_eq!((DoubleDouble::ONE * a).to_f64(), 1.5);
        assert_eq!((DoubleDouble::ZERO + a).to_f64(), 1.5);
    }
}
