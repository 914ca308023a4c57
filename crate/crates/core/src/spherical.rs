//! Marginal distribution of one coordinate of a uniform point on `√n·S^{n-1}`.
//!
//! The density is `φₙ(t) = λₙ (1 - t²/n)^{(n-3)/2}` on `[-√n, √n]`. The CDF
//! is evaluated through the incomplete beta function: `X₁²/|X|²` follows
//! `Beta(1/2, (n-1)/2)`, so for `t ≥ 0`
//!
//! ```text
//! 1 - Φₙ(t) = ½ · I_{1 - t²/n}((n-1)/2, 1/2)
//! ```
//!
//! An independent quadrature route (after the substitution `t = √n sin u`,
//! which turns the integrand into `cos^{n-2} u`) is kept alongside for
//! cross-checking and for the reciprocal-integral form of `λₙ`.

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::scalar::Real;
use crate::special::{beta_inc_split, ln_beta};

/// Default absolute error budget for CDF evaluation.
pub const DEFAULT_QUAD_TOLERANCE: f64 = 1e-12;

/// Iteration cap for the inverse CDF.
pub const MAX_INVERSE_STEPS: usize = 200;

/// Target accuracy of the inverse CDF, `|Φₙ(t) - s|`.
pub const INVERSE_TOLERANCE: f64 = 1e-12;

/// `λₙ = (n-1) Γ(1+n/2) / (n^{3/2} √π Γ(1/2+n/2))`, via log-gamma.
///
/// `λ₁ = 0`: for `n = 1` the marginal is the two-point law on `{-1, 1}` and
/// has no density.
pub fn lambda_n<T: Real>(n: usize) -> T {
    if n <= 1 {
        return T::zero();
    }
    let nf = T::from_count(n as u64);
    let half = T::lit(0.5);
    let ratio = ((T::one() + half * nf).log_gamma() - (half + half * nf).log_gamma()).exp();
    (nf - T::one()) * ratio / (nf * nf.sqrt() * T::PI().sqrt())
}

/// `λₙ` through its reciprocal-integral representation, by quadrature.
pub fn lambda_n_by_quadrature<T: Real>(n: usize, tol: T) -> T {
    if n <= 1 {
        return T::zero();
    }
    let nf = T::from_count(n as u64);
    let power = T::from_count(n as u64 - 2);
    let half_pi = T::FRAC_PI_2();
    let q = quad::integrate(|u: T| u.cos().powf(power), -half_pi, half_pi, tol, tol);
    T::one() / (nf.sqrt() * q.value)
}

/// Volume of the Euclidean unit ball in `ℝⁿ` and the `ωₙ` with
/// `vol = (2πe ωₙ / n)^{n/2}`.
pub fn ball_volume<T: Real>(n: usize) -> Result<(T, T)> {
    if n == 0 {
        return Err(domain("ball_volume requires n >= 1"));
    }
    let nf = T::from_count(n as u64);
    let half = T::lit(0.5);
    let ln_vol = half * nf * T::PI().ln() - (T::one() + half * nf).log_gamma();
    let two_pi_e = T::lit(2.0) * T::PI() * T::E();
    let ln_omega = (nf / two_pi_e).ln() + T::lit(2.0) * ln_vol / nf;
    Ok((ln_vol.exp(), ln_omega.exp()))
}

/// Evaluator bundle for `φₙ`, `Φₙ`, `Φₙ⁻¹`, `λₙ` and `ψₙ` at a fixed `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalMarginal<T> {
    n: usize,
    lambda_n: T,
    quad_tolerance: T,
    sqrt_n: T,
    // (n-1)/2, the second beta shape parameter.
    shape: T,
    ln_beta: T,
}

impl<T: Real> SphericalMarginal<T> {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(domain("spherical marginal requires n >= 1"));
        }
        let nf = T::from_count(n as u64);
        let shape = (nf - T::one()) * T::lit(0.5);
        let ln_beta = if n > 1 { ln_beta(T::lit(0.5), shape) } else { T::infinity() };
        Ok(Self {
            n,
            lambda_n: lambda_n(n),
            quad_tolerance: T::lit(DEFAULT_QUAD_TOLERANCE),
            sqrt_n: nf.sqrt(),
            shape,
            ln_beta,
        })
    }

    pub fn with_quad_tolerance(mut self, tol: T) -> Self {
        self.quad_tolerance = tol;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn lambda_n(&self) -> T {
        self.lambda_n
    }

    pub fn quad_tolerance(&self) -> T {
        self.quad_tolerance
    }

    /// Half-width of the support, `√n`.
    pub fn support_radius(&self) -> T {
        self.sqrt_n
    }

    /// `(1 - t/√n)(1 + t/√n)`, i.e. `1 - t²/n` without cancellation near the edge.
    fn one_minus_sq(&self, t: T) -> T {
        let r = t / self.sqrt_n;
        (T::one() - r) * (T::one() + r)
    }

    /// Density `φₙ(t)`.
    ///
    /// For `n ≤ 2` the density diverges at `|t| = √n`; that point yields
    /// [`Error::UnboundedDensity`] instead of an infinite value. For `n = 1`
    /// the law is atomic, so the density is zero away from `±1`.
    pub fn phi_n(&self, t: T) -> Result<T> {
        let at = t.abs();
        if at > self.sqrt_n {
            return Ok(T::zero());
        }
        if at == self.sqrt_n {
            return match self.n {
                1 | 2 => Err(Error::UnboundedDensity { n: self.n, t: t.to_f64_exact() }),
                3 => Ok(self.lambda_n),
                _ => Ok(T::zero()),
            };
        }
        if self.n == 3 {
            return Ok(self.lambda_n);
        }
        let exponent = (T::from_count(self.n as u64) - T::lit(3.0)) * T::lit(0.5);
        Ok(self.lambda_n * (exponent * self.one_minus_sq(t).ln()).exp())
    }

    /// Upper tail `1 - Φₙ(t)`, accurate in relative terms for large `t`.
    pub fn sf(&self, t: T) -> T {
        let zero = T::zero();
        let one = T::one();
        let half = T::lit(0.5);
        if t.is_nan() {
            return t;
        }
        if t < zero {
            return one - self.sf(-t);
        }
        if t >= self.sqrt_n {
            return zero;
        }
        match self.n {
            // Two atoms at ±1 with mass ½ each.
            1 => {
                if t < one {
                    half
                } else {
                    zero
                }
            }
            3 => half * (self.sqrt_n - t) / self.sqrt_n,
            _ => {
                let r = t / self.sqrt_n;
                let x = r * r;
                let y = self.one_minus_sq(t);
                // 1 - Φₙ(t) = ½·I_y((n-1)/2, ½)
                let v = beta_inc_split(self.shape, half, y, x).unwrap_or(zero);
                (half * v).max(zero).min(half)
            }
        }
    }

    /// Cumulative distribution `Φₙ(t)`, clamped to `[0, 1]`.
    pub fn cdf(&self, t: T) -> T {
        let zero = T::zero();
        let one = T::one();
        if t.is_nan() {
            return t;
        }
        if self.n == 3 {
            // Uniform on [-√3, √3].
            let v = (t + self.sqrt_n) / (T::lit(2.0) * self.sqrt_n);
            return v.max(zero).min(one);
        }
        if self.n == 1 {
            return if t < -one {
                zero
            } else if t < one {
                T::lit(0.5)
            } else {
                one
            };
        }
        if t < zero {
            self.sf(-t)
        } else {
            (one - self.sf(t)).max(zero).min(one)
        }
    }

    /// `Φₙ(t)` by adaptive quadrature of the density (independent of the beta route).
    pub fn cdf_quadrature(&self, t: T) -> T {
        if t < T::zero() {
            self.sf_quadrature(-t)
        } else {
            T::one() - self.sf_quadrature(t)
        }
    }

    /// `1 - Φₙ(t)` by quadrature, integrating the tail directly so the result
    /// keeps relative accuracy.
    pub fn sf_quadrature(&self, t: T) -> T {
        let zero = T::zero();
        let one = T::one();
        let half = T::lit(0.5);
        if t < zero {
            return one - self.sf_quadrature(-t);
        }
        if t >= self.sqrt_n {
            return zero;
        }
        if self.n == 1 {
            return if t < one { half } else { zero };
        }
        let start = (t / self.sqrt_n).asin();
        let power = T::from_count(self.n as u64 - 2);
        let q = quad::integrate(
            |u: T| u.cos().powf(power),
            start,
            T::FRAC_PI_2(),
            self.quad_tolerance * T::lit(1e-3),
            self.quad_tolerance,
        );
        (self.lambda_n * self.sqrt_n * q.value).max(zero)
    }

    /// Generalized inverse `Φₙ⁻¹(s)` for `0 < s < 1`.
    ///
    /// Safeguarded Newton iteration on the tail `1 - Φₙ`, bracketed in
    /// `[0, √n]`, at most [`MAX_INVERSE_STEPS`] steps.
    pub fn inverse_cdf(&self, s: T) -> Result<T> {
        let zero = T::zero();
        let one = T::one();
        let half = T::lit(0.5);
        if !(s > zero && s < one) {
            return Err(domain(format!("inverse CDF needs 0 < s < 1, got {s}")));
        }
        if s == half {
            return Ok(zero);
        }
        match self.n {
            1 => return Ok(if s <= half { -one } else { one }),
            3 => {
                let two = T::lit(2.0);
                return Ok((two * self.sqrt_n * s - self.sqrt_n).max(-self.sqrt_n).min(self.sqrt_n));
            }
            _ => {}
        }
        if s < half {
            Ok(-self.upper_tail_inverse(s))
        } else {
            Ok(self.upper_tail_inverse(one - s))
        }
    }

    /// Solve `1 - Φₙ(u) = q` for `u ∈ [0, √n]`, `0 < q < ½`.
    fn upper_tail_inverse(&self, q: T) -> T {
        let zero = T::zero();
        let mut lo = zero;
        let mut hi = self.sqrt_n;
        // Gaussian-tail starting guess, clamped into the bracket.
        let guess = (T::lit(-2.0) * q.ln()).sqrt() * T::lit(0.8);
        let mut u = guess.max(zero).min(self.sqrt_n * T::lit(0.999));
        let rel = T::epsilon() * T::lit(16.0);
        for _ in 0..MAX_INVERSE_STEPS {
            let f = self.sf(u) - q;
            if f.abs() <= q * rel {
                return u;
            }
            if f > zero {
                lo = u;
            } else {
                hi = u;
            }
            if hi - lo <= T::lit(2.0) * T::epsilon() * hi {
                return T::lit(0.5) * (lo + hi);
            }
            let dens = self.phi_n(u).unwrap_or(zero);
            let mut next = if dens > zero { u + f / dens } else { T::nan() };
            if !(next > lo && next < hi) {
                next = T::lit(0.5) * (lo + hi);
            }
            u = next;
        }
        u
    }

    /// `ψₙ(s) = φₙ(Φₙ⁻¹(s))`.
    pub fn psi_n(&self, s: T) -> Result<T> {
        let t = self.inverse_cdf(s)?;
        self.phi_n(t)
    }

    /// Lower and upper bounds on `1 - Φₙ(t)` valid for `n ≥ 5` and
    /// `t ≥ √(n/(n-4))`:
    ///
    /// ```text
    /// n/(2(n-3)t)·(1-t²/n)·φₙ(t)  ≤  1 - Φₙ(t)  ≤  n/((n-3)t)·(1-t²/n)·φₙ(t)
    /// ```
    pub fn tail_sandwich(&self, t: T) -> Result<(T, T)> {
        if self.n < 5 {
            return Err(domain(format!("tail sandwich needs n >= 5, got {}", self.n)));
        }
        let nf = T::from_count(self.n as u64);
        let threshold = (nf / (nf - T::lit(4.0))).sqrt();
        if !(t >= threshold) {
            return Err(domain(format!("tail sandwich needs t >= {threshold}, got {t}")));
        }
        if t >= self.sqrt_n {
            return Ok((T::zero(), T::zero()));
        }
        let upper = nf / ((nf - T::lit(3.0)) * t) * self.one_minus_sq(t) * self.phi_n(t)?;
        Ok((upper * T::lit(0.5), upper))
    }

    /// The log of `B(1/2, (n-1)/2)`; `λₙ = 1/(√n·B)`.
    pub fn ln_beta_constant(&self) -> T {
        self.ln_beta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(n: usize) -> SphericalMarginal<f64> {
        SphericalMarginal::new(n).unwrap()
    }

    #[test]
    fn lambda_closed_forms() {
        assert!((lambda_n::<f64>(3) - 0.288_675_134_594_812_9).abs() < 1e-15);
        assert!((lambda_n::<f64>(2) - 0.225_079_079_039_276_5).abs() < 1e-15);
        assert!((lambda_n::<f64>(10) - 0.368_122_237_107_105_2).abs() < 1e-14);
        assert_eq!(lambda_n::<f64>(1), 0.0);
    }

    #[test]
    fn lambda_agrees_with_reciprocal_integral_and_beta() {
        for n in 2..60 {
            let direct = lambda_n::<f64>(n);
            let by_quad = lambda_n_by_quadrature::<f64>(n, 1e-13);
            assert!((direct - by_quad).abs() < 1e-12, "n={n}: {direct} vs {by_quad}");
            let mm = m(n);
            let via_beta = 1.0 / ((n as f64).sqrt() * mm.ln_beta_constant().exp());
            assert!((direct - via_beta).abs() < 1e-13 * direct, "n={n}");
        }
    }

    #[test]
    fn density_examples() {
        let c = 1.0 / (2.0 * 3.0_f64.sqrt());
        assert!((m(3).phi_n(0.7).unwrap() - c).abs() < 1e-15);
        assert_eq!(m(10).phi_n(0.0).unwrap(), lambda_n::<f64>(10));
        assert_eq!(m(10).phi_n(4.0).unwrap(), 0.0);
        assert_eq!(m(10).phi_n(10.0_f64.sqrt()).unwrap(), 0.0);
        assert!((m(3).phi_n(3.0_f64.sqrt()).unwrap() - c).abs() < 1e-15);
    }

    #[test]
    fn density_unbounded_at_edge_for_small_n() {
        for n in [1, 2] {
            let edge = (n as f64).sqrt();
            assert!(matches!(m(n).phi_n(edge), Err(Error::UnboundedDensity { .. })));
            assert!(matches!(m(n).phi_n(-edge), Err(Error::UnboundedDensity { .. })));
        }
        assert_eq!(m(1).phi_n(0.3).unwrap(), 0.0);
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(m(7).cdf(0.0), 0.5);
        assert!((m(3).cdf(1.0) - 0.788_675_134_594_812_9).abs() < 1e-15);
        assert_eq!(m(5).cdf(5.0_f64.sqrt()), 1.0);
        assert_eq!(m(5).cdf(-5.0_f64.sqrt()), 0.0);
        assert_eq!(m(5).cdf(-10.0), 0.0);
        // n = 2 is the arcsine law: ½ + asin(t/√2)/π
        for &t in &[-1.3, -0.2, 0.4, 1.1] {
            let exact = 0.5 + (t / 2.0_f64.sqrt()).asin() / std::f64::consts::PI;
            assert!((m(2).cdf(t) - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn beta_route_agrees_with_quadrature() {
        for n in [2, 4, 5, 6, 9, 17, 40, 120] {
            let mm = m(n);
            let r = (n as f64).sqrt();
            for i in 0..=40 {
                let t = -r + 2.0 * r * i as f64 / 40.0;
                let a = mm.cdf(t);
                let b = mm.cdf_quadrature(t);
                assert!((a - b).abs() < 1e-12, "n={n} t={t}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn n1_is_two_atoms() {
        let mm = m(1);
        assert_eq!(mm.cdf(-1.5), 0.0);
        assert_eq!(mm.cdf(-1.0), 0.5);
        assert_eq!(mm.cdf(0.99), 0.5);
        assert_eq!(mm.cdf(1.0), 1.0);
        assert_eq!(mm.inverse_cdf(0.5).unwrap(), 0.0);
        assert_eq!(mm.inverse_cdf(0.3).unwrap(), -1.0);
        assert_eq!(mm.inverse_cdf(0.7).unwrap(), 1.0);
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(m(9).inverse_cdf(0.5).unwrap(), 0.0);
        assert!((m(3).inverse_cdf(0.75).unwrap() - 0.866_025_403_784_438_6).abs() < 1e-15);
        let t = m(6).inverse_cdf(0.9).unwrap();
        assert!((m(6).cdf(t) - 0.9).abs() <= 1e-11);
        assert!((t - 1.349_332_766_472_534).abs() < 1e-12);
        let t = m(6).inverse_cdf(0.4995).unwrap();
        assert!((t + 0.001_442_868_809_254_239_6).abs() < 1e-14);
        for s in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(m(6).inverse_cdf(s).is_err());
        }
    }

    #[test]
    fn inverse_round_trips_deep_tail() {
        for n in [4, 6, 12, 50] {
            let mm = m(n);
            for &s in &[1e-14, 1e-9, 1e-4, 0.01, 0.3, 0.7, 0.99, 1.0 - 1e-9] {
                let t = mm.inverse_cdf(s).unwrap();
                assert!((mm.cdf(t) - s).abs() <= 1e-12, "n={n} s={s}");
                if s < 0.5 {
                    // limited by the spacing of doubles near the support edge
                    assert!((mm.cdf(t) - s).abs() <= 1e-6 * s, "relative, n={n} s={s}");
                }
            }
        }
    }

    #[test]
    fn tail_sandwich_examples() {
        let (lo, hi) = m(10).tail_sandwich(2.0).unwrap();
        assert!((lo - 0.013_198_198_261_535_92).abs() < 1e-14);
        assert!((hi - 0.026_396_396_523_071_85).abs() < 1e-14);
        let tail = m(10).sf(2.0);
        assert!((tail - 0.018_393_748_939_893_08).abs() < 1e-14);
        assert!(lo <= tail && tail <= hi);

        let t = 20.0_f64.sqrt() * 0.99;
        let (lo, hi) = m(20).tail_sandwich(t).unwrap();
        let tail = m(20).sf(t);
        assert!((tail / 6.293_199_925_169_132e-18 - 1.0).abs() < 1e-9);
        assert!(lo <= tail && tail <= hi);

        assert!(m(5).tail_sandwich(2.0).is_err());
        assert!(m(4).tail_sandwich(3.0).is_err());
    }

    #[test]
    fn psi_examples() {
        assert!((m(8).psi_n(0.5).unwrap() - lambda_n::<f64>(8)).abs() < 1e-15);
        assert!((m(3).psi_n(0.25).unwrap() - 1.0 / (2.0 * 3.0_f64.sqrt())).abs() < 1e-15);
        // ψ₈(s) decays like s^{5/7}
        let tiny = m(8).psi_n(1e-30).unwrap();
        assert!(tiny < 1e-15);
        assert!(m(8).psi_n(1e-12).unwrap() < m(8).psi_n(1e-6).unwrap());
        assert!(m(8).psi_n(0.0).is_err());
    }

    #[test]
    fn ball_volume_examples() {
        let (v1, _) = ball_volume::<f64>(1).unwrap();
        let (v2, _) = ball_volume::<f64>(2).unwrap();
        assert!((v1 - 2.0).abs() < 1e-14);
        assert!((v2 - std::f64::consts::PI).abs() < 1e-14);
        let (_, w5) = ball_volume::<f64>(5).unwrap();
        let (_, w50) = ball_volume::<f64>(50).unwrap();
        assert!(0.0 < w50 && w50 < 1.0 && 0.0 < w5 && w5 < 1.0);
        assert!(1.0 - w50 < 1.0 - w5);
        assert!(ball_volume::<f64>(0).is_err());
    }

    #[test]
    fn f32_marginal_smoke() {
        let mm = SphericalMarginal::<f32>::new(6).unwrap();
        let t = mm.inverse_cdf(0.9).unwrap();
        assert!((mm.cdf(t) - 0.9).abs() < 1e-5);
        assert!((mm.cdf(0.0) - 0.5).abs() < 1e-7);
    }
}
