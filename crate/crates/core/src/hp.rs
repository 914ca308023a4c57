//! Fixed-point high-precision evaluation of Gaussian cell probabilities.
//!
//! Values are `BigInt / 2^FRAC_BITS` with 320 fractional bits (about 96
//! decimal digits). Only what the exact-floor policy of the lattice module
//! needs is provided: `exp` of non-positive arguments, `π`, square roots and
//! the standard normal CDF.

use std::sync::OnceLock;

use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};

pub const FRAC_BITS: u32 = 320;

/// Beyond this many standard deviations the CDF is 0 or 1 to all carried bits.
const SATURATION: f64 = 38.0;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Fixed(BigInt);

impl Fixed {
    pub fn zero() -> Self {
        Fixed(BigInt::zero())
    }

    pub fn one() -> Self {
        Fixed(BigInt::one() << FRAC_BITS)
    }

    pub fn from_int(n: i64) -> Self {
        Fixed(BigInt::from(n) << FRAC_BITS)
    }

    /// Exact conversion of a finite double (bits below `2^-FRAC_BITS` are
    /// truncated toward zero).
    pub fn from_f64(x: f64) -> Self {
        assert!(x.is_finite(), "non-finite input to Fixed::from_f64");
        if x == 0.0 {
            return Self::zero();
        }
        let bits = x.to_bits();
        let negative = bits >> 63 == 1;
        let exponent = ((bits >> 52) & 0x7ff) as i64;
        let fraction = bits & ((1_u64 << 52) - 1);
        let (mantissa, exp) = if exponent == 0 {
            (fraction, -1074_i64)
        } else {
            (fraction | (1_u64 << 52), exponent - 1075)
        };
        let shift = exp + FRAC_BITS as i64;
        let mut v = BigInt::from(mantissa);
        if shift >= 0 {
            v <<= shift as usize;
        } else {
            v >>= (-shift) as usize;
        }
        if negative {
            v = -v;
        }
        Fixed(v)
    }

    pub fn to_f64(&self) -> f64 {
        let mag = self.0.magnitude();
        let bits = mag.bits() as i64;
        if bits == 0 {
            return 0.0;
        }
        // Keep the top 64 bits; the remaining scale is applied as a power of two.
        let drop = (bits - 64).max(0);
        let top = (mag >> drop as usize).to_u64().unwrap_or(u64::MAX) as f64;
        let v = top * 2f64.powi((drop - FRAC_BITS as i64) as i32);
        if self.is_negative() {
            -v
        } else {
            v
        }
    }

    pub fn add(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 + &o.0)
    }

    pub fn sub(&self, o: &Fixed) -> Fixed {
        Fixed(&self.0 - &o.0)
    }

    pub fn mul(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 * &o.0) >> FRAC_BITS)
    }

    pub fn div(&self, o: &Fixed) -> Fixed {
        Fixed((&self.0 << FRAC_BITS) / &o.0)
    }

    pub fn div_int(&self, d: i64) -> Fixed {
        Fixed(&self.0 / d)
    }

    pub fn half(&self) -> Fixed {
        Fixed(&self.0 >> 1)
    }

    pub fn is_negative(&self) -> bool {
        self.0.sign() == Sign::Minus
    }

    pub fn abs(&self) -> Fixed {
        Fixed(self.0.abs())
    }

    /// `floor(self * n)` as an integer.
    pub fn floor_times(&self, n: u64) -> BigInt {
        let prod = &self.0 * BigInt::from(n);
        // Arithmetic shift floors toward negative infinity.
        prod >> FRAC_BITS
    }

    pub fn sqrt(&self) -> Fixed {
        assert!(!self.is_negative(), "sqrt of a negative fixed-point value");
        Fixed((&self.0 << FRAC_BITS).sqrt())
    }

    /// `e^x` for `x ≤ 0`.
    pub fn exp_nonpositive(&self) -> Fixed {
        assert!(!self.0.is_positive(), "exp_nonpositive needs x <= 0");
        // Halve until |x| < 2^-8, sum the Taylor series, then square back.
        let mut r = self.clone();
        let mut squarings = 0_u32;
        let threshold = Fixed::one().0 >> 8;
        while r.0.abs() > threshold {
            r = Fixed(&r.0 >> 1_u32);
            // Arithmetic shift of a negative number rounds toward -inf; the
            // induced error is below 2^-FRAC_BITS and absorbed by guard bits.
            squarings += 1;
        }
        let mut sum = Fixed::one();
        let mut term = Fixed::one();
        let mut k = 1_i64;
        loop {
            term = term.mul(&r).div_int(k);
            if term.0.is_zero() {
                break;
            }
            sum = sum.add(&term);
            k += 1;
        }
        for _ in 0..squarings {
            sum = sum.mul(&sum);
        }
        sum
    }
}

fn atan_inv(x: i64) -> Fixed {
    // atan(1/x) = Σ (-1)^k / ((2k+1) x^{2k+1})
    let x2 = BigInt::from(x * x);
    let mut power = Fixed::one().div_int(x);
    let mut sum = power.clone();
    let mut k = 1_i64;
    loop {
        power = Fixed(&power.0 / &x2);
        if power.0.is_zero() {
            break;
        }
        let term = power.div_int(2 * k + 1);
        if k % 2 == 1 {
            sum = sum.sub(&term);
        } else {
            sum = sum.add(&term);
        }
        k += 1;
    }
    sum
}

/// π by Machin's formula.
pub fn pi() -> &'static Fixed {
    static PI: OnceLock<Fixed> = OnceLock::new();
    PI.get_or_init(|| {
        let a = atan_inv(5);
        let b = atan_inv(239);
        Fixed(a.0 * 16 - b.0 * 4)
    })
}

fn inv_sqrt_2pi() -> &'static Fixed {
    static V: OnceLock<Fixed> = OnceLock::new();
    V.get_or_init(|| {
        let two_pi = Fixed(&pi().0 << 1_u32);
        Fixed::one().div(&two_pi.sqrt())
    })
}

/// Standard normal CDF in fixed point.
///
/// Uses `Φ(u) = ½ + φ(u) Σ_{k≥0} u^{2k+1} / (1·3·…·(2k+1))`, whose terms are
/// all of one sign, so there is no cancellation.
pub fn normal_cdf(u: &Fixed) -> Fixed {
    let approx = u.to_f64();
    if approx >= SATURATION {
        return Fixed::one();
    }
    if approx <= -SATURATION {
        return Fixed::zero();
    }
    let u2 = u.mul(u);
    let density = u2.half();
    let density = Fixed(-density.0).exp_nonpositive().mul(inv_sqrt_2pi());
    let mut term = u.clone();
    let mut sum = u.clone();
    let mut k = 1_i64;
    loop {
        term = term.mul(&u2).div_int(2 * k + 1);
        if term.0.is_zero() {
            break;
        }
        sum = sum.add(&term);
        k += 1;
    }
    Fixed::one().half().add(&density.mul(&sum))
}

/// `Φ((x+½)/σ) - Φ((x-½)/σ)` in fixed point, using the tail on the far side
/// of zero so both terms stay small.
pub fn cell_factor(x: i64, sigma: f64) -> Fixed {
    let s = Fixed::from_f64(sigma);
    let x = x.abs();
    let hi = Fixed::from_int(2 * x + 1).half().div(&s);
    let lo = Fixed::from_int(2 * x - 1).half().div(&s);
    // For x ≥ 1 both endpoints are positive: use Φ(-lo) - Φ(-hi).
    if x == 0 {
        normal_cdf(&hi).sub(&normal_cdf(&lo))
    } else {
        normal_cdf(&Fixed(-lo.0)).sub(&normal_cdf(&Fixed(-hi.0)))
    }
}

/// High-precision cell probability `∏ᵢ cell_factor(xᵢ, σ)`.
pub fn cell_probability(point: &[i64], sigma: f64) -> Fixed {
    point.iter().fold(Fixed::one(), |acc, &x| acc.mul(&cell_factor(x, sigma)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_digits() {
        // 3.14159265358979323846264338327950288419716939937510...
        let scaled = pi().floor_times(10_u64.pow(18));
        assert_eq!(scaled.to_string(), "3141592653589793238");
    }

    #[test]
    fn exp_matches_f64() {
        for &x in &[0.0, -1e-5, -0.5, -1.0, -7.25, -50.0] {
            let v = Fixed::from_f64(x).exp_nonpositive().to_f64();
            assert!((v - f64::exp(x)).abs() <= 4.0 * f64::EPSILON * f64::exp(x), "x={x}: {v}");
        }
    }

    #[test]
    fn normal_cdf_reference() {
        // Φ(1) = 0.84134474606854294858523254563203792247791296672660...
        let v = normal_cdf(&Fixed::one());
        assert_eq!(v.floor_times(10_u64.pow(19)).to_string(), "8413447460685429485");
        let half = normal_cdf(&Fixed::zero());
        assert_eq!(half, Fixed::one().half());
    }

    #[test]
    fn cell_factor_reference() {
        // 2Φ(½) - 1 = 0.38292492254802620727540922121667547976720435110916...
        let v = cell_factor(0, 1.0);
        assert_eq!(v.floor_times(10_u64.pow(19)).to_string(), "3829249225480262072");
        assert_eq!(cell_factor(3, 2.0), cell_factor(-3, 2.0));
    }

    #[test]
    fn saturation() {
        assert_eq!(normal_cdf(&Fixed::from_int(40)), Fixed::one());
        assert_eq!(normal_cdf(&Fixed::from_int(-40)), Fixed::zero());
    }

    #[test]
    fn from_f64_is_exact_for_dyadics() {
        assert_eq!(Fixed::from_f64(0.375).to_f64(), 0.375);
        assert_eq!(Fixed::from_f64(-2.5), Fixed(-(BigInt::from(5) << (FRAC_BITS - 1))));
    }
}
