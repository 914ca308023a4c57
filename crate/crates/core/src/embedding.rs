//! Parameter planning, the row-group form of the embedding matrix `T`, and the
//! reference vector `v` with its scaling constant `M = ‖v‖`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::lattice::{build_multiplicities_with, BuildOptions, MultiplicityTable};
use crate::norms::{PermInvariantNorm, WeightedMultiset};
use crate::scalar::Real;
use crate::spherical::SphericalMarginal;

/// `δ = ε / DELTA_DIVISOR` in paper mode (also the desk-mode default).
pub const DELTA_DIVISOR: f64 = 1429.0;

/// Largest `N` for which [`reference_profile`] evaluates `v` entry by entry.
pub const ENTRYWISE_LIMIT: u64 = 10_000_000;

/// Constant in the admissible-dimension condition `6 ≤ n ≤ c·ln N / ln(1/ε)`.
pub const DIMENSION_CONSTANT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// `δ, σ, α` from `ε` by the closed formulas.
    Paper,
    /// User-chosen `σ`, `α` (or radius) and `N`.
    Desk,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Mode::Paper),
            "desk" => Ok(Mode::Desk),
            _ => Err(Error::Config(format!("mode must be \"paper\" or \"desk\", got {s:?}"))),
        }
    }
}

/// One fully populated construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpec {
    pub n: usize,
    #[serde(rename = "N")]
    pub total: u64,
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub basis_constant: f64,
    pub delta: f64,
    pub sigma: f64,
    pub alpha: f64,
    /// Truncation radius `α√n`.
    pub radius: f64,
    pub mode: Mode,
    /// Whether `ln N` reaches [`EmbeddingSpec::ln_required_total`].
    pub bound_satisfied: bool,
    /// `ln(δ⁻¹σ) + ½(σ⁻²(α+½)² + ln 2π + ln σ²)·n`.
    pub ln_required_total: f64,
    /// `6 ≤ n ≤ c·ln N / ln(1/ε)` with `c = 0.01`.
    pub dimension_condition: bool,
    /// `ε < 1/(2K)`.
    pub accuracy_condition: bool,
}

/// Inputs to [`plan_parameters`]. Unused overrides must be `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanRequest {
    pub epsilon: f64,
    pub basis_constant: f64,
    pub mode: Mode,
    pub n: usize,
    pub total: Option<u64>,
    pub sigma: Option<f64>,
    pub alpha: Option<f64>,
    /// Alternative to `alpha`: the radius `α√n` itself.
    pub radius: Option<f64>,
    pub delta: Option<f64>,
}

impl PlanRequest {
    pub fn paper(epsilon: f64, n: usize) -> Self {
        Self {
            epsilon,
            basis_constant: 1.0,
            mode: Mode::Paper,
            n,
            total: None,
            sigma: None,
            alpha: None,
            radius: None,
            delta: None,
        }
    }

    pub fn desk(epsilon: f64, n: usize, total: u64, sigma: f64, radius: f64) -> Self {
        Self {
            epsilon,
            basis_constant: 1.0,
            mode: Mode::Desk,
            n,
            total: Some(total),
            sigma: Some(sigma),
            alpha: None,
            radius: Some(radius),
            delta: None,
        }
    }
}

/// Natural log of the smallest `N` accepted by the size condition on `N`.
pub fn ln_required_total(n: usize, delta: f64, sigma: f64, alpha: f64) -> f64 {
    let inner = ((alpha + 0.5) / sigma).powi(2) + (2.0 * std::f64::consts::PI).ln() + 2.0 * sigma.ln();
    -delta.ln() + sigma.ln() + 0.5 * inner * n as f64
}

/// Populate an [`EmbeddingSpec`].
///
/// Paper mode derives `δ = ε/1429`, `σ = δ⁻⁴`, `α = 2δ⁻⁴(ln δ⁻¹)^{1/2}` and
/// requires `ε < 1/(2K)`; `N` defaults to `u64::MAX`. Desk mode requires `σ`,
/// one of `α` / radius, and `N`, with `σ ≥ 1` and `α√n ≥ σ`.
pub fn plan_parameters(req: &PlanRequest) -> Result<EmbeddingSpec> {
    let PlanRequest { epsilon, basis_constant: k, mode, n, .. } = *req;
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(k >= 1.0) || !k.is_finite() {
        return Err(domain(format!("basis constant K must be finite and >= 1, got {k}")));
    }
    if n == 0 {
        return Err(domain("n must be >= 1"));
    }
    let sqrt_n = (n as f64).sqrt();
    let accuracy_condition = epsilon < 1.0 / (2.0 * k);

    let (delta, sigma, alpha, radius, total) = match mode {
        Mode::Paper => {
            if !accuracy_condition {
                return Err(domain(format!("paper mode needs epsilon < 1/(2K) = {}, got {epsilon}", 0.5 / k)));
            }
            if req.sigma.is_some() || req.alpha.is_some() || req.radius.is_some() || req.delta.is_some() {
                return Err(Error::Config("paper mode derives delta, sigma and alpha; drop the overrides or use desk mode".into()));
            }
            let delta = epsilon / DELTA_DIVISOR;
            let sigma = delta.powi(-4);
            let alpha = 2.0 * sigma * (-delta.ln()).sqrt();
            (delta, sigma, alpha, alpha * sqrt_n, req.total.unwrap_or(u64::MAX))
        }
        Mode::Desk => {
            let missing = |what: &str| Error::Config(format!("desk mode requires {what}"));
            let sigma = req.sigma.ok_or_else(|| missing("sigma"))?;
            let total = req.total.ok_or_else(|| missing("N"))?;
            let (alpha, radius) = match (req.alpha, req.radius) {
                (Some(_), Some(_)) => return Err(Error::Config("give alpha or radius, not both".into())),
                (Some(a), None) => (a, a * sqrt_n),
                (None, Some(r)) => (r / sqrt_n, r),
                (None, None) => return Err(missing("alpha or radius")),
            };
            if !(sigma >= 1.0) || !sigma.is_finite() {
                return Err(Error::Config(format!("desk mode needs finite sigma >= 1, got {sigma}")));
            }
            if !(radius >= sigma) || !radius.is_finite() {
                return Err(Error::Config(format!("desk mode needs radius alpha*sqrt(n) >= sigma, got {radius}")));
            }
            if total == 0 {
                return Err(Error::Config("N must be >= 1".into()));
            }
            let delta = req.delta.unwrap_or(epsilon / DELTA_DIVISOR);
            if !(delta > 0.0 && delta < 1.0 / 17.0) {
                return Err(Error::Config(format!("delta must lie in (0, 1/17), got {delta}")));
            }
            (delta, sigma, alpha, radius, total)
        }
    };

    let ln_required = ln_required_total(n, delta, sigma, alpha);
    let ln_total = (total as f64).ln();
    let dimension_condition = n >= 6 && (n as f64) <= DIMENSION_CONSTANT * ln_total / (-epsilon.ln());
    Ok(EmbeddingSpec {
        n,
        total,
        epsilon,
        basis_constant: k,
        delta,
        sigma,
        alpha,
        radius,
        mode,
        bound_satisfied: ln_total >= ln_required,
        ln_required_total: ln_required,
        dimension_condition,
        accuracy_condition,
    })
}

/// A distinct row `√n·x/|x|` of `T` with its multiplicity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Group<'a, T> {
    pub point: &'a [i32],
    pub direction: &'a [T],
    pub multiplicity: u64,
}

/// `T` stored as distinct rows with multiplicities, in canonical lattice order.
///
/// The zero row is present only when `m′(0) > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RowGroupMatrix<T> {
    spec: EmbeddingSpec,
    points: Vec<i32>,
    directions: Vec<T>,
    multiplicities: Vec<u64>,
    width: usize,
}

impl<T: Real> RowGroupMatrix<T> {
    /// Map a multiplicity table through `x ↦ √n·x/|x|`.
    pub fn from_table(spec: EmbeddingSpec, table: &MultiplicityTable) -> Result<Self> {
        let n = table.dim();
        if n != spec.n {
            return Err(Error::DimensionMismatch { expected: spec.n, got: n });
        }
        if table.total != spec.total {
            return Err(Error::Inconsistent(format!("table N = {} but spec N = {}", table.total, spec.total)));
        }
        let sqrt_n = (n as f64).sqrt();
        let mut points = Vec::with_capacity(table.len() * n);
        let mut directions = Vec::with_capacity(table.len() * n);
        let mut multiplicities = Vec::with_capacity(table.len());
        for (i, e) in table.entries().enumerate() {
            if i == table.origin {
                if e.m_prime == 0 {
                    continue;
                }
                directions.extend(std::iter::repeat_n(T::zero(), n));
            } else {
                let norm = (e.point.iter().map(|&x| (x as i64 * x as i64) as f64).sum::<f64>()).sqrt();
                directions.extend(e.point.iter().map(|&x| T::from_f64_lossy(x as f64 * sqrt_n / norm)));
            }
            points.extend_from_slice(e.point);
            multiplicities.push(e.m_prime);
        }
        Ok(Self { spec, points, directions, multiplicities, width: n })
    }

    /// Rebuild from raw parts, checking shapes and `Σ multiplicities = N`.
    pub fn from_parts(
        spec: EmbeddingSpec,
        points: Vec<i32>,
        directions: Vec<T>,
        multiplicities: Vec<u64>,
        width: usize,
    ) -> Result<Self> {
        let n = spec.n;
        let groups = multiplicities.len();
        if width == 0 || width > n {
            return Err(Error::Format(format!("width {width} outside 1..={n}")));
        }
        if points.len() != groups * n || directions.len() != groups * width {
            return Err(Error::Format("group arrays have inconsistent lengths".into()));
        }
        let sum: u128 = multiplicities.iter().map(|&m| m as u128).sum();
        if sum != spec.total as u128 {
            return Err(Error::Inconsistent(format!("multiplicities sum to {sum}, expected N = {}", spec.total)));
        }
        Ok(Self { spec, points, directions, multiplicities, width })
    }

    pub fn spec(&self) -> &EmbeddingSpec {
        &self.spec
    }

    /// Embedded dimension `n` of the untruncated matrix.
    pub fn dim(&self) -> usize {
        self.spec.n
    }

    /// Number of columns (`k` after truncation, otherwise `n`).
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn is_truncated(&self) -> bool {
        self.width < self.spec.n
    }

    pub fn group_count(&self) -> usize {
        self.multiplicities.len()
    }

    pub fn total(&self) -> u64 {
        self.spec.total
    }

    pub fn group(&self, i: usize) -> Group<'_, T> {
        let n = self.spec.n;
        Group {
            point: &self.points[i * n..(i + 1) * n],
            direction: &self.directions[i * self.width..(i + 1) * self.width],
            multiplicity: self.multiplicities[i],
        }
    }

    pub fn groups(&self) -> impl Iterator<Item = Group<'_, T>> + '_ {
        (0..self.group_count()).map(move |i| self.group(i))
    }

    pub fn points(&self) -> &[i32] {
        &self.points
    }

    pub fn directions(&self) -> &[T] {
        &self.directions
    }

    pub fn multiplicities(&self) -> &[u64] {
        &self.multiplicities
    }

    /// `{(⟨direction, x⟩, multiplicity)}` over the groups; total count `N`.
    pub fn apply(&self, x: &[T]) -> Result<WeightedMultiset<T>> {
        if x.len() != self.width {
            return Err(Error::DimensionMismatch { expected: self.width, got: x.len() });
        }
        let items = self
            .directions
            .chunks_exact(self.width)
            .zip(&self.multiplicities)
            .map(|(d, &m)| (dot(d, x), m));
        Ok(WeightedMultiset::from_counts(items))
    }

    /// Keep only the first `k` columns.
    pub fn truncate_columns(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.width {
            return Err(domain(format!("column count must lie in 1..={}, got {k}", self.width)));
        }
        let directions = self.directions.chunks_exact(self.width).flat_map(|d| d[..k].iter().copied()).collect();
        Ok(Self {
            spec: self.spec.clone(),
            points: self.points.clone(),
            directions,
            multiplicities: self.multiplicities.clone(),
            width: k,
        })
    }
}

/// Left-to-right sum of products, so zero-padded inputs give identical results.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&u, &v)| acc + u * v)
}

/// Enumerate, weight and assemble `T` for `spec`.
pub fn build_matrix<T: Real>(spec: &EmbeddingSpec) -> Result<RowGroupMatrix<T>> {
    build_matrix_with(spec, BuildOptions::default()).map(|(m, _)| m)
}

/// Like [`build_matrix`] but with explicit lattice options; also returns the
/// multiplicity table. The radius is always `spec.radius`.
pub fn build_matrix_with<T: Real>(
    spec: &EmbeddingSpec,
    options: BuildOptions,
) -> Result<(RowGroupMatrix<T>, MultiplicityTable)> {
    let options = BuildOptions { radius: Some(spec.radius), ..options };
    let table = build_multiplicities_with(spec.n, spec.total, spec.sigma, spec.alpha, options)?;
    Ok((RowGroupMatrix::from_table(spec.clone(), &table)?, table))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "path")]
pub enum Exactness {
    Entrywise,
    /// Equal-probability slices of the middle range.
    Quadrature { level: u64 },
}

/// Which evaluation path [`reference_profile_with`] takes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfilePath {
    /// Entrywise up to [`ENTRYWISE_LIMIT`], slices above.
    Auto,
    Entrywise,
    Quadrature,
}

/// The reference vector `v` in bucketed form.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceProfile<T> {
    pub n: usize,
    pub total: u64,
    /// `Φₙ(1.5)`.
    pub a: T,
    /// `Φₙ((1-17δ)√n)`.
    pub b: T,
    /// Entries pinned to `-√n` (and, symmetrically, to `+√n`).
    pub tail_count: u64,
    /// Non-decreasing values with counts summing to `N`.
    pub buckets: WeightedMultiset<T>,
    pub exactness: Exactness,
}

pub fn reference_profile<T: Real>(spec: &EmbeddingSpec, resolution: u64) -> Result<ReferenceProfile<T>> {
    reference_profile_with(spec, resolution, ProfilePath::Auto)
}

/// Build `v`:
///
/// ```text
/// vᵢ = -√n               if i - ½ < (1-b)N
/// vᵢ = Φₙ⁻¹((i-½)/N)      if (1-b)N ≤ i - ½ ≤ bN
/// vᵢ = +√n               if i - ½ > bN
/// ```
///
/// Each tail holds `⌈(1-b)N - ½⌉` entries (clamped to `⌊N/2⌋`); exact
/// equality at a boundary belongs to the middle branch.
pub fn reference_profile_with<T: Real>(
    spec: &EmbeddingSpec,
    resolution: u64,
    path: ProfilePath,
) -> Result<ReferenceProfile<T>> {
    if resolution == 0 {
        return Err(domain("resolution must be >= 1"));
    }
    let n = spec.n;
    let total = spec.total;
    if total == 0 {
        return Err(domain("N must be >= 1"));
    }
    let marginal = SphericalMarginal::<T>::new(n)?;
    let sqrt_n = marginal.support_radius();
    let a = marginal.cdf(T::lit(1.5));
    let edge = T::lit(1.0 - 17.0 * spec.delta) * sqrt_n;
    let b = marginal.cdf(edge);
    let one_minus_b = marginal.sf(edge).to_f64_exact();

    let tail_real = (one_minus_b * total as f64 - 0.5).ceil();
    let tail_count = if tail_real <= 0.0 { 0 } else { (tail_real as u64).min(total / 2) };
    let middle = total - 2 * tail_count;

    let entrywise = match path {
        ProfilePath::Auto => total <= ENTRYWISE_LIMIT,
        ProfilePath::Entrywise => true,
        ProfilePath::Quadrature => false,
    };
    let (middle_items, exactness) = if entrywise {
        (entrywise_middle(&marginal, total, tail_count)?, Exactness::Entrywise)
    } else {
        let level = resolution.min(middle.max(1));
        (sliced_middle(&marginal, total, tail_count, level)?, Exactness::Quadrature { level })
    };

    let mut items = Vec::with_capacity(middle_items.len() + 2);
    items.push((-sqrt_n, tail_count));
    items.extend(middle_items);
    items.push((sqrt_n, tail_count));
    Ok(ReferenceProfile {
        n,
        total,
        a,
        b,
        tail_count,
        buckets: WeightedMultiset::from_counts(items).sorted(),
        exactness,
    })
}

/// `Φₙ⁻¹((i-½)/N)` for the middle indices, mirrored so that `vᵢ = -v_{N+1-i}`.
fn entrywise_middle<T: Real>(m: &SphericalMarginal<T>, total: u64, tail: u64) -> Result<Vec<(T, u64)>> {
    let first = tail + 1;
    let last_lower = total / 2;
    let nf = T::from_count(total);
    let lower: Vec<T> = (first..=last_lower)
        .into_par_iter()
        .map(|i| m.inverse_cdf((T::from_count(i) - T::lit(0.5)) / nf))
        .collect::<Result<_>>()?;
    let mut out: Vec<(T, u64)> = Vec::with_capacity(2 * lower.len() + 1);
    out.extend(lower.iter().map(|&v| (v, 1)));
    if total % 2 == 1 && last_lower + 1 > tail {
        out.push((T::zero(), 1));
    }
    out.extend(lower.iter().rev().map(|&v| (-v, 1)));
    Ok(out)
}

/// `level` equal-count slices of the middle indices, valued at the slice midpoint.
fn sliced_middle<T: Real>(m: &SphericalMarginal<T>, total: u64, tail: u64, level: u64) -> Result<Vec<(T, u64)>> {
    let middle = (total - 2 * tail) as u128;
    if middle == 0 {
        return Ok(Vec::new());
    }
    let bound = |j: u64| (j as u128 * middle / level as u128) as u64;
    let two_n = 2.0 * total as f64;
    (0..level)
        .into_par_iter()
        .map(|j| {
            let (start, end) = (bound(j), bound(j + 1));
            // Midpoint of (i-½)/N over i = tail+start+1 ..= tail+end.
            let s = (2 * tail + start + end) as f64 / two_n;
            Ok((m.inverse_cdf(T::from_f64_lossy(s))?, end - start))
        })
        .collect()
}

/// `M = ‖v‖` under `norm`.
pub fn scaling_constant<T: Real>(profile: &ReferenceProfile<T>, norm: &PermInvariantNorm) -> Result<T> {
    norm.eval(&profile.buckets)
}
