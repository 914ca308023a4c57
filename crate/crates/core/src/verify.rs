//! Empirical checks of a built matrix: projected distributions against `Φₙ`,
//! quantile bands, distortion sweeps over the sphere, and the exact
//! `ℓ₂⁴ → ℓ₄¹²` isometry used as an end-to-end oracle.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::RowGroupMatrix;
use crate::error::{domain, Error, Result};
use crate::norms::{PermInvariantNorm, WeightedMultiset};
use crate::scalar::Real;
use crate::spherical::SphericalMarginal;

/// Directions further than this from unit length are normalized (projection)
/// or flagged (sweeps).
pub const UNIT_TOLERANCE: f64 = 1e-9;

pub const HISTOGRAM_BINS: usize = 64;

/// Grid points closer than this to a regime boundary are flagged.
pub const BOUNDARY_TOLERANCE: f64 = 1e-12;

/// Largest `δ` considered by [`QuantileComparison::effective_delta`]; above it
/// `(1-17δ)√n` is no longer positive enough for the regimes to make sense.
pub const MAX_EFFECTIVE_DELTA: f64 = 1.0 / 17.0;

/// Projected values `{⟨θ, θᵢ⟩}` sorted ascending, with cumulative counts.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalProjection<T> {
    theta: Vec<T>,
    values: WeightedMultiset<T>,
    cumulative: Vec<u64>,
    renormalized: bool,
}

impl<T: Real> EmpiricalProjection<T> {
    /// Build from an arbitrary multiset (used by tests and oracles).
    pub fn from_multiset(theta: Vec<T>, values: &WeightedMultiset<T>) -> Self {
        let values = values.sorted();
        let cumulative = values
            .items()
            .iter()
            .scan(0_u64, |acc, &(_, c)| {
                *acc += c;
                Some(*acc)
            })
            .collect();
        Self { theta, values, cumulative, renormalized: false }
    }

    pub fn theta(&self) -> &[T] {
        &self.theta
    }

    pub fn values(&self) -> &WeightedMultiset<T> {
        &self.values
    }

    pub fn total(&self) -> u64 {
        self.values.total()
    }

    /// Whether `θ` had to be rescaled to unit length.
    pub fn renormalized(&self) -> bool {
        self.renormalized
    }

    fn fraction(&self, count: u64) -> T {
        T::from_count(count) / T::from_count(self.total())
    }

    /// `F_θ(t)`: share of values `≤ t`.
    pub fn cdf(&self, t: T) -> T {
        let idx = self.values.items().partition_point(|&(v, _)| v <= t);
        if idx == 0 {
            T::zero()
        } else {
            self.fraction(self.cumulative[idx - 1])
        }
    }

    /// `F_θ⁻¹(s) = inf{t : F_θ(t) ≥ s}` for `0 < s ≤ 1`.
    pub fn quantile(&self, s: T) -> Result<T> {
        if !(s > T::zero() && s <= T::one()) {
            return Err(domain(format!("quantile level must lie in (0, 1], got {s}")));
        }
        let idx = self.cumulative.partition_point(|&c| self.fraction(c) < s);
        match self.values.items().get(idx) {
            Some(&(v, _)) => Ok(v),
            None => Err(domain("quantile of an empty projection")),
        }
    }
}

/// Project the rows of `matrix` onto `theta`.
pub fn project<T: Real>(matrix: &RowGroupMatrix<T>, theta: &[T]) -> Result<EmpiricalProjection<T>> {
    if theta.len() != matrix.width() {
        return Err(Error::DimensionMismatch { expected: matrix.width(), got: theta.len() });
    }
    let norm = euclidean_norm(theta);
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(domain("projection direction must be nonzero and finite"));
    }
    let renormalized = (norm - T::one()).abs() > T::lit(UNIT_TOLERANCE);
    let theta: Vec<T> = if renormalized { theta.iter().map(|&x| x / norm).collect() } else { theta.to_vec() };
    let image = matrix.apply(&theta)?;
    let mut p = EmpiricalProjection::from_multiset(theta, &image);
    p.renormalized = renormalized;
    Ok(p)
}

pub fn empirical_cdf<T: Real>(proj: &EmpiricalProjection<T>, t: T) -> T {
    proj.cdf(t)
}

pub fn empirical_quantile<T: Real>(proj: &EmpiricalProjection<T>, s: T) -> Result<T> {
    proj.quantile(s)
}

fn euclidean_norm<T: Real>(x: &[T]) -> T {
    let peak = x.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    if peak == T::zero() {
        return peak;
    }
    peak * x.iter().map(|&v| (v / peak) * (v / peak)).sum::<T>().sqrt()
}

/// Which allowance applies at a quantile level `s`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `s < 1-b`: `|F⁻¹(s) + √n| ≤ 29δ√n`.
    LowerTail,
    /// `1-b ≤ s ≤ 1-a`: `|F⁻¹(s) - Φₙ⁻¹(s)| ≤ 20δ|Φₙ⁻¹(s)|`.
    LowerShoulder,
    /// `1-a < s < a`: `|F⁻¹(s) - Φₙ⁻¹(s)| ≤ 7δ`.
    Center,
    /// `a ≤ s ≤ b`: as the lower shoulder.
    UpperShoulder,
    /// `s > b`: `|F⁻¹(s) - √n| ≤ 29δ√n`.
    UpperTail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandRow {
    pub s: f64,
    pub empirical: f64,
    pub reference: f64,
    pub regime: Regime,
    pub deviation: f64,
    pub band: f64,
    pub pass: bool,
    /// `s` lies within [`BOUNDARY_TOLERANCE`] of `a`, `1-a`, `b` or `1-b`.
    pub boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBandReport {
    pub n: usize,
    pub delta: f64,
    pub a: f64,
    pub b: f64,
    pub rows: Vec<BandRow>,
    pub max_ratio: f64,
    pub pass: bool,
}

impl QuantileBandReport {
    /// CSV with columns `s,deviation,band,pass`.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "s,deviation,band,pass")?;
        for r in &self.rows {
            writeln!(w, "{},{},{},{}", r.s, r.deviation, r.band, r.pass)?;
        }
        Ok(())
    }
}

/// `F_θ⁻¹` and `Φₙ⁻¹` on the grid `sⱼ = (j-½)/G`, ready to be scored for any `δ`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantileComparison {
    n: usize,
    sqrt_n: f64,
    grid: Vec<f64>,
    empirical: Vec<f64>,
    reference: Vec<f64>,
    one_minus_a: f64,
    marginal: SphericalMarginal<f64>,
}

impl QuantileComparison {
    pub fn new<T: Real>(proj: &EmpiricalProjection<T>, n: usize, grid_size: usize) -> Result<Self> {
        if grid_size == 0 {
            return Err(domain("grid size must be >= 1"));
        }
        let marginal = SphericalMarginal::<f64>::new(n)?;
        let grid: Vec<f64> = (1..=grid_size).map(|j| (j as f64 - 0.5) / grid_size as f64).collect();
        let empirical = grid
            .iter()
            .map(|&s| proj.quantile(T::from_f64_lossy(s)).map(|v| v.to_f64_exact()))
            .collect::<Result<_>>()?;
        let reference = grid.iter().map(|&s| marginal.inverse_cdf(s)).collect::<Result<_>>()?;
        Ok(Self {
            n,
            sqrt_n: marginal.support_radius(),
            grid,
            empirical,
            reference,
            one_minus_a: marginal.sf(1.5),
            marginal,
        })
    }

    /// Score every grid point against the bands for `delta`.
    pub fn report(&self, delta: f64) -> QuantileBandReport {
        let edge = (1.0 - 17.0 * delta) * self.sqrt_n;
        let one_minus_b = self.marginal.sf(edge);
        let (a, b) = (1.0 - self.one_minus_a, self.marginal.cdf(edge));
        let near = |s: f64, x: f64| (s - x).abs() <= BOUNDARY_TOLERANCE;
        let tail_band = 29.0 * delta * self.sqrt_n;
        let mut max_ratio = 0.0_f64;
        let rows: Vec<BandRow> = self
            .grid
            .iter()
            .zip(self.empirical.iter().zip(&self.reference))
            .map(|(&s, (&emp, &r))| {
                // When b < a the tail and center ranges overlap; tails win.
                let regime = if s < one_minus_b {
                    Regime::LowerTail
                } else if s > b {
                    Regime::UpperTail
                } else if s <= self.one_minus_a {
                    Regime::LowerShoulder
                } else if s < a {
                    Regime::Center
                } else {
                    Regime::UpperShoulder
                };
                let (deviation, band) = match regime {
                    Regime::LowerTail => ((emp + self.sqrt_n).abs(), tail_band),
                    Regime::UpperTail => ((emp - self.sqrt_n).abs(), tail_band),
                    Regime::Center => ((emp - r).abs(), 7.0 * delta),
                    Regime::LowerShoulder | Regime::UpperShoulder => ((emp - r).abs(), 20.0 * delta * r.abs()),
                };
                let ratio = if band > 0.0 { deviation / band } else if deviation > 0.0 { f64::INFINITY } else { 0.0 };
                max_ratio = max_ratio.max(ratio);
                BandRow {
                    s,
                    empirical: emp,
                    reference: r,
                    regime,
                    deviation,
                    band,
                    pass: deviation <= band,
                    boundary: near(s, a) || near(s, self.one_minus_a) || near(s, b) || near(s, one_minus_b),
                }
            })
            .collect();
        let pass = rows.iter().all(|r| r.pass);
        QuantileBandReport { n: self.n, delta, a, b, rows, max_ratio, pass }
    }

    /// Smallest `δ ∈ (0, 1/17)` for which every band passes, or `None`.
    ///
    /// Pass/fail need not be monotone in `δ` (the regimes move with `b`), so
    /// the first passing value on a 400-point log grid starting at `1e-9` is
    /// refined by bisection against the preceding failing grid value.
    pub fn effective_delta(&self) -> Option<f64> {
        const STEPS: usize = 400;
        let (lo_exp, hi_exp) = (-9.0_f64, MAX_EFFECTIVE_DELTA.log10());
        let at = |k: usize| 10f64.powf(lo_exp + (hi_exp - lo_exp) * k as f64 / STEPS as f64).min(MAX_EFFECTIVE_DELTA * (1.0 - 1e-12));
        let first = (0..=STEPS).find(|&k| self.report(at(k)).pass)?;
        if first == 0 {
            return Some(at(0));
        }
        let (mut lo, mut hi) = (at(first - 1), at(first));
        for _ in 0..80 {
            let mid = (lo * hi).sqrt();
            if self.report(mid).pass {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi / lo - 1.0 < 1e-10 {
                break;
            }
        }
        Some(hi)
    }
}

/// Quantile bands for one `θ`. Refuses column-truncated matrices, whose rows no
/// longer have length `√n`.
pub fn quantile_band_report<T: Real>(
    matrix: &RowGroupMatrix<T>,
    theta: &[T],
    delta: f64,
    grid_size: usize,
) -> Result<QuantileBandReport> {
    Ok(quantile_comparison(matrix, theta, grid_size)?.report(delta))
}

pub fn quantile_comparison<T: Real>(
    matrix: &RowGroupMatrix<T>,
    theta: &[T],
    grid_size: usize,
) -> Result<QuantileComparison> {
    if matrix.is_truncated() {
        return Err(Error::Refused(format!(
            "quantile bands assume rows of length sqrt(n); this matrix keeps {} of {} columns",
            matrix.width(),
            matrix.dim()
        )));
    }
    QuantileComparison::new(&project(matrix, theta)?, matrix.dim(), grid_size)
}

/// Seeded uniform directions on `S^{n-1}`.
///
/// Sample `i` comes from ChaCha20 keyed by `seed` (via
/// `SeedableRng::seed_from_u64`) on stream `i`; its `n` coordinates are
/// standard normal draws (ziggurat, `rand_distr::StandardNormal`) divided by
/// their Euclidean norm. Results do not depend on thread count.
pub fn sphere_sample<T: Real>(n: usize, count: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if n == 0 || count == 0 {
        return Err(domain("sphere_sample needs n >= 1 and count >= 1"));
    }
    Ok((0..count).into_par_iter().map(|i| sphere_point(n, seed, i as u64)).collect())
}

fn sphere_point<T: Real>(n: usize, seed: u64, stream: u64) -> Vec<T> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    loop {
        let g: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = euclidean_norm(&g);
        if norm > 0.0 {
            return g.iter().map(|&x| T::from_f64_lossy(x / norm)).collect();
        }
    }
}

/// Seeded standard normal vectors (same generator as [`sphere_sample`], not normalized).
pub fn gaussian_sample(n: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    (0..count as u64)
        .map(|i| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(i);
            (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub ratios: Vec<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// `max(max_ratio - 1, 1 - min_ratio)`.
    pub distortion: f64,
    /// [`HISTOGRAM_BINS`] equal-width bins over `[min_ratio, max_ratio]`.
    pub histogram: Vec<u64>,
    /// Indices of inputs that were not unit vectors.
    pub non_unit: Vec<usize>,
}

/// Ratios `‖Tθ‖ / M` over `thetas`.
pub fn distortion_sweep<T: Real>(
    matrix: &RowGroupMatrix<T>,
    norm: &PermInvariantNorm,
    thetas: &[Vec<T>],
    scale: T,
) -> Result<SweepReport> {
    if !(scale > T::zero()) || !scale.is_finite() {
        return Err(domain(format!("scaling constant must be positive and finite, got {scale}")));
    }
    if thetas.is_empty() {
        return Err(domain("distortion sweep needs at least one direction"));
    }
    let ratios: Vec<f64> = thetas
        .par_iter()
        .map(|t| Ok((norm.eval(&matrix.apply(t)?)? / scale).to_f64_exact()))
        .collect::<Result<_>>()?;
    let non_unit = thetas
        .iter()
        .enumerate()
        .filter(|(_, t)| (euclidean_norm(t) - T::one()).abs() > T::lit(UNIT_TOLERANCE))
        .map(|(i, _)| i)
        .collect();
    let min_ratio = ratios.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ratio = ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut histogram = vec![0_u64; HISTOGRAM_BINS];
    let width = max_ratio - min_ratio;
    for &r in &ratios {
        let bin = if width > 0.0 { ((r - min_ratio) / width * HISTOGRAM_BINS as f64) as usize } else { 0 };
        histogram[bin.min(HISTOGRAM_BINS - 1)] += 1;
    }
    Ok(SweepReport {
        ratios,
        min_ratio,
        max_ratio,
        distortion: (max_ratio - 1.0).max(1.0 - min_ratio),
        histogram,
        non_unit,
    })
}

/// The isometry `ℓ₂⁴ → ℓ₄¹²`: `6^{-1/4}·(xᵢ + xⱼ)` followed by
/// `6^{-1/4}·(xᵢ - xⱼ)` over pairs `i < j` in lexicographic order.
pub fn l4_reference_embedding<T: Real>(x: &[T; 4]) -> [T; 12] {
    let scale = T::lit(6.0).powf(T::lit(-0.25));
    let mut out = [T::zero(); 12];
    let mut k = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            out[k] = scale * (x[i] + x[j]);
            out[k + 6] = scale * (x[i] - x[j]);
            k += 1;
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub count: usize,
    pub seed: u64,
    pub max_relative_mismatch: f64,
    pub tolerance: f64,
    pub pass: bool,
}

/// Relative mismatch `|‖Ex‖₄ - |x|₂| / |x|₂` for `count` seeded inputs whose
/// magnitudes span `10^{-3}` to `10^{3}`.
pub fn l4_identity_check(count: usize, seed: u64, tolerance: f64) -> IdentityReport {
    let l4 = PermInvariantNorm::lp(4.0).expect("p = 4 is valid");
    let l2 = PermInvariantNorm::lp(2.0).expect("p = 2 is valid");
    let worst = gaussian_sample(4, count, seed)
        .into_par_iter()
        .enumerate()
        .map(|(i, g)| {
            let scale = 10f64.powi((i % 7) as i32 - 3);
            let x = [g[0] * scale, g[1] * scale, g[2] * scale, g[3] * scale];
            let lhs = l4.eval(&WeightedMultiset::from_values(&l4_reference_embedding(&x))).unwrap_or(f64::NAN);
            let rhs = l2.eval(&WeightedMultiset::from_values(&x)).unwrap_or(f64::NAN);
            if rhs == 0.0 {
                lhs.abs()
            } else {
                (lhs - rhs).abs() / rhs
            }
        })
        .reduce(|| 0.0, f64::max);
    IdentityReport { count, seed, max_relative_mismatch: worst, tolerance, pass: worst <= tolerance }
}
