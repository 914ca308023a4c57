//! Integer points of a Euclidean ball and their Gaussian-cell multiplicities.
//!
//! Each point `x ∈ ℤⁿ` with `|x| ≤ α√n` receives
//! `m(x) = ⌊N·p(x)⌋` where `p(x) = ∏ᵢ [Φ((xᵢ+½)/σ) − Φ((xᵢ−½)/σ)]`; the
//! origin absorbs the deficit so that `Σ m'(x) = N` exactly.
//!
//! Floors are exact: `N·p(x)` is formed in double-double, and whenever the
//! result lies within `1e-9` relative distance of an integer the cell
//! probability is recomputed in 320-bit fixed point (see [`crate::hp`]).

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dd::DoubleDouble;
use crate::error::{domain, Error, Result};
use crate::hp;
use crate::special::{ln_std_normal_sf, std_normal_sf};
use crate::spherical::ball_volume;

/// Default refusal threshold for the estimated number of enumerated points.
pub const DEFAULT_POINT_CAP: u64 = 100_000_000;

/// Relative distance to an integer below which a floor is re-derived in high precision.
pub const TIE_RELATIVE_TOLERANCE: f64 = 1e-9;

/// Relative slack on the squared radius, so that a radius assembled as `α·√n`
/// does not lose boundary points to rounding.
pub const RADIUS_SLACK: f64 = 1e-12;

/// Integer points stored contiguously, `n` coordinates per point, in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PointSet {
    n: usize,
    coords: Vec<i32>,
}

impl PointSet {
    pub fn new(n: usize, coords: Vec<i32>) -> Result<Self> {
        if n == 0 || !coords.len().is_multiple_of(n) {
            return Err(Error::Format(format!("{} coordinates do not split into points of dimension {n}", coords.len())));
        }
        Ok(Self { n, coords })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.n
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn get(&self, i: usize) -> &[i32] {
        &self.coords[i * self.n..(i + 1) * self.n]
    }

    pub fn iter(&self) -> std::slice::ChunksExact<'_, i32> {
        self.coords.chunks_exact(self.n)
    }

    pub fn coords(&self) -> &[i32] {
        &self.coords
    }

    /// Position of `point` under the lexicographic order, if present.
    pub fn position(&self, point: &[i32]) -> Option<usize> {
        let (mut lo, mut hi) = (0, self.len());
        while lo < hi {
            let mid = (lo + hi) / 2;
            match self.get(mid).cmp(point) {
                std::cmp::Ordering::Less => lo = mid + 1,
                std::cmp::Ordering::Greater => hi = mid,
                std::cmp::Ordering::Equal => return Some(mid),
            }
        }
        None
    }
}

/// Upper estimate of `|ℤⁿ ∩ rBⁿ|`: the volume of the ball inflated by the
/// half-diagonal of a unit cube.
pub fn estimate_ball_count(n: usize, radius: f64) -> f64 {
    let (vol, _) = ball_volume::<f64>(n.max(1)).unwrap_or((f64::INFINITY, 0.0));
    vol * (radius + (n as f64).sqrt() / 2.0).powi(n as i32)
}

/// Largest integer `B` such that `|x|² ≤ B` is the membership test.
fn squared_bound(radius: f64) -> i64 {
    (radius * radius * (1.0 + RADIUS_SLACK)).floor() as i64
}

/// All points of `ℤⁿ` with Euclidean norm at most `radius`, lexicographically
/// ordered, refusing above [`DEFAULT_POINT_CAP`] estimated points.
pub fn enumerate_ball(n: usize, radius: f64) -> Result<PointSet> {
    enumerate_ball_capped(n, radius, DEFAULT_POINT_CAP)
}

pub fn enumerate_ball_capped(n: usize, radius: f64, cap: u64) -> Result<PointSet> {
    if n == 0 {
        return Err(domain("lattice dimension must be >= 1"));
    }
    if !(radius >= 0.0) || !radius.is_finite() {
        return Err(domain(format!("radius must be finite and >= 0, got {radius}")));
    }
    let estimate = estimate_ball_count(n, radius);
    if estimate > cap as f64 {
        return Err(Error::EnumerationCap { estimate, cap });
    }
    let bound = squared_bound(radius);
    let first = isqrt(bound);
    let chunks: Vec<Vec<i32>> = (-first..=first)
        .into_par_iter()
        .map(|x0| {
            let mut out = Vec::new();
            let mut prefix = Vec::with_capacity(n);
            prefix.push(x0 as i32);
            recurse(n, bound - x0 * x0, &mut prefix, &mut out);
            out
        })
        .collect();
    PointSet::new(n, chunks.concat())
}

fn recurse(n: usize, residual: i64, prefix: &mut Vec<i32>, out: &mut Vec<i32>) {
    if prefix.len() == n {
        out.extend_from_slice(prefix);
        return;
    }
    let k = isqrt(residual);
    for x in -k..=k {
        prefix.push(x as i32);
        recurse(n, residual - x * x, prefix, out);
        prefix.pop();
    }
}

fn isqrt(v: i64) -> i64 {
    if v <= 0 {
        return 0;
    }
    let mut r = (v as f64).sqrt() as i64;
    while r * r > v {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= v {
        r += 1;
    }
    r
}

/// Cell probability in both log and linear form.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellProbability {
    pub log_p: f64,
    pub p: f64,
}

/// `Φ((|x|+½)/σ) − Φ((|x|−½)/σ)`, written with upper tails so both terms are
/// small for `|x| ≥ 1`.
fn cell_factor(x: i64, sigma: f64) -> f64 {
    let ax = x.unsigned_abs() as f64;
    let hi = (ax + 0.5) / sigma;
    if x == 0 {
        1.0 - 2.0 * std_normal_sf(hi)
    } else {
        let lo = (ax - 0.5) / sigma;
        std_normal_sf(lo) - std_normal_sf(hi)
    }
}

/// `ln` of [`cell_factor`], finite even where the factor underflows.
fn ln_cell_factor(x: i64, sigma: f64) -> f64 {
    if x == 0 {
        return cell_factor(0, sigma).ln();
    }
    let ax = x.unsigned_abs() as f64;
    let ln_lo = ln_std_normal_sf((ax - 0.5) / sigma);
    let ln_hi = ln_std_normal_sf((ax + 0.5) / sigma);
    ln_lo + (-(ln_hi - ln_lo).exp()).ln_1p()
}

/// `p(x) = ∏ᵢ [Φ((xᵢ+½)/σ) − Φ((xᵢ−½)/σ)]`, accumulated in log space.
pub fn cell_probability(point: &[i32], sigma: f64) -> Result<CellProbability> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    let log_p: f64 = point.iter().map(|&x| ln_cell_factor(x as i64, sigma)).sum();
    Ok(CellProbability { log_p, p: log_p.exp() })
}

/// Per-`|x|` factor lookup shared by all points of one build.
struct FactorTable {
    factors: Vec<f64>,
}

impl FactorTable {
    fn new(max_abs: usize, sigma: f64) -> Self {
        Self { factors: (0..=max_abs).map(|k| cell_factor(k as i64, sigma)).collect() }
    }

    fn get(&self, x: i32) -> f64 {
        self.factors[x.unsigned_abs() as usize]
    }
}

/// Knobs for [`build_multiplicities_with`].
#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub point_cap: u64,
    /// Use this truncation radius instead of `α·√n`.
    pub radius: Option<f64>,
}

impl Default for BuildOptions {
    fn default() -> Self {
        Self { point_cap: DEFAULT_POINT_CAP, radius: None }
    }
}

/// One row of a [`MultiplicityTable`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Entry<'a> {
    pub point: &'a [i32],
    pub m: u64,
    pub m_prime: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplicityTable {
    pub points: PointSet,
    pub m: Vec<u64>,
    pub m_prime: Vec<u64>,
    /// Target total `N`.
    pub total: u64,
    /// `N' = Σ m(x)`.
    pub total_floor: u64,
    pub sigma: f64,
    pub alpha: f64,
    pub radius: f64,
    /// Index of the origin in `points`.
    pub origin: usize,
    /// How many floors were re-derived in high precision.
    pub high_precision_floors: usize,
}

/// Column header written next to the CSV export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableHeader {
    pub n: usize,
    #[serde(rename = "N")]
    pub total: u64,
    pub sigma: f64,
    pub alpha: f64,
    pub radius: f64,
    #[serde(rename = "N_prime")]
    pub total_floor: u64,
    pub point_count: usize,
    pub bound_satisfied: bool,
    pub high_precision_floors: usize,
}

impl MultiplicityTable {
    pub fn dim(&self) -> usize {
        self.points.dim()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn entry(&self, i: usize) -> Entry<'_> {
        Entry { point: self.points.get(i), m: self.m[i], m_prime: self.m_prime[i] }
    }

    pub fn entries(&self) -> impl Iterator<Item = Entry<'_>> + '_ {
        (0..self.len()).map(move |i| self.entry(i))
    }

    pub fn header(&self, bound_satisfied: bool) -> TableHeader {
        TableHeader {
            n: self.dim(),
            total: self.total,
            sigma: self.sigma,
            alpha: self.alpha,
            radius: self.radius,
            total_floor: self.total_floor,
            point_count: self.len(),
            bound_satisfied,
            high_precision_floors: self.high_precision_floors,
        }
    }

    /// Columnar CSV: `x1,…,xn,m,m_prime`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let cols: Vec<String> = (1..=self.dim()).map(|i| format!("x{i}")).collect();
        writeln!(w, "{},m,m_prime", cols.join(","))?;
        for e in self.entries() {
            for c in e.point {
                write!(w, "{c},")?;
            }
            writeln!(w, "{},{}", e.m, e.m_prime)?;
        }
        Ok(())
    }
}

/// Build the multiplicity table for radius `α√n` with default options.
pub fn build_multiplicities(n: usize, total: u64, sigma: f64, alpha: f64) -> Result<MultiplicityTable> {
    build_multiplicities_with(n, total, sigma, alpha, BuildOptions::default())
}

pub fn build_multiplicities_with(
    n: usize,
    total: u64,
    sigma: f64,
    alpha: f64,
    options: BuildOptions,
) -> Result<MultiplicityTable> {
    if total == 0 {
        return Err(domain("N must be >= 1"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(domain(format!("sigma must be positive and finite, got {sigma}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(domain(format!("alpha must be positive and finite, got {alpha}")));
    }
    let radius = options.radius.unwrap_or(alpha * (n as f64).sqrt());
    let points = enumerate_ball_capped(n, radius, options.point_cap)?;
    let max_abs = isqrt(squared_bound(radius)) as usize;
    let table = FactorTable::new(max_abs, sigma);
    let scale = DoubleDouble::from_u64(total);

    let floors: Vec<(u64, bool)> = points
        .coords()
        .par_chunks_exact(n)
        .map(|point| floor_multiplicity(point, &table, scale, total, sigma))
        .collect();

    let m: Vec<u64> = floors.iter().map(|&(v, _)| v).collect();
    let high_precision_floors = floors.iter().filter(|&&(_, hp)| hp).count();
    let sum: u128 = m.iter().map(|&v| v as u128).sum();
    if sum > total as u128 {
        return Err(Error::Inconsistent(format!("N' = {sum} exceeds N = {total}")));
    }
    let total_floor = sum as u64;
    let origin = points
        .position(&vec![0; n])
        .ok_or_else(|| Error::Inconsistent("origin missing from enumeration".into()))?;
    let mut m_prime = m.clone();
    m_prime[origin] += total - total_floor;

    Ok(MultiplicityTable {
        points,
        m,
        m_prime,
        total,
        total_floor,
        sigma,
        alpha,
        radius,
        origin,
        high_precision_floors,
    })
}

/// `⌊N·p(x)⌋` and whether the high-precision path decided it.
fn floor_multiplicity(point: &[i32], table: &FactorTable, scale: DoubleDouble, total: u64, sigma: f64) -> (u64, bool) {
    let mut p = DoubleDouble::ONE;
    for &x in point {
        p = p.mul_f64(table.get(x));
    }
    let value = p * scale;
    let approx = value.to_f64();
    if approx < 0.5 {
        return (0, false);
    }
    if value.distance_to_nearest_integer().abs() > TIE_RELATIVE_TOLERANCE * approx {
        let f = value.floor().unwrap_or(0).clamp(0, total as i128);
        return (f as u64, false);
    }
    let coords: Vec<i64> = point.iter().map(|&x| x as i64).collect();
    let exact = hp::cell_probability(&coords, sigma).floor_times(total);
    let f: u64 = exact.try_into().unwrap_or(0);
    (f.min(total), true)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force(n: usize, radius: f64) -> Vec<i32> {
        let k = radius.floor() as i32 + 1;
        let mut out = Vec::new();
        let mut idx = vec![-k; n];
        loop {
            let sq: i64 = idx.iter().map(|&x| (x as i64) * (x as i64)).sum();
            if (sq as f64) <= radius * radius * (1.0 + RADIUS_SLACK) {
                out.extend_from_slice(&idx);
            }
            let mut j = n;
            loop {
                if j == 0 {
                    return out;
                }
                j -= 1;
                if idx[j] < k {
                    idx[j] += 1;
                    for v in idx.iter_mut().skip(j + 1) {
                        *v = -k;
                    }
                    break;
                }
            }
        }
    }

    #[test]
    fn enumerate_examples() {
        assert_eq!(enumerate_ball(1, 2.5).unwrap().coords(), &[-2, -1, 0, 1, 2]);
        let p = enumerate_ball(2, 2.0_f64.sqrt()).unwrap();
        assert_eq!(p.len(), 9);
        assert_eq!(enumerate_ball(3, 0.0).unwrap().coords(), &[0, 0, 0]);
    }

    #[test]
    fn enumerate_matches_grid_scan() {
        for n in 1..=3 {
            for r in [0.0, 0.5, 1.0, 1.7, 2.0, 3.3, 4.0, 5.5, 6.0] {
                let e = enumerate_ball(n, r).unwrap();
                assert_eq!(e.coords(), brute_force(n, r).as_slice(), "n={n} r={r}");
            }
        }
    }

    #[test]
    fn alpha_sqrt_n_keeps_boundary_points() {
        // 2/√2·√2 rounds to 2.0000000000000004 or 1.9999999999999998
        let r = (2.0 / 2.0_f64.sqrt()) * 2.0_f64.sqrt();
        assert_eq!(enumerate_ball(2, r).unwrap().len(), 13);
        assert_eq!(enumerate_ball(2, 1.999_999_999_999_999_8).unwrap().len(), 13);
    }

    #[test]
    fn enumeration_refuses_over_cap() {
        match enumerate_ball_capped(6, 40.0, 1_000_000) {
            Err(Error::EnumerationCap { estimate, cap }) => {
                assert!(estimate > 1e6);
                assert_eq!(cap, 1_000_000);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
        assert!(enumerate_ball(2, -1.0).is_err());
        assert!(enumerate_ball(0, 1.0).is_err());
    }

    #[test]
    fn cell_probability_examples() {
        let c = cell_probability(&[0], 1.0).unwrap();
        assert!((c.p - 0.382_924_922_548_026_2).abs() < 1e-15);
        let a = cell_probability(&[3, -1, 2], 1.7).unwrap();
        let b = cell_probability(&[-3, 1, -2], 1.7).unwrap();
        assert_eq!(a, b);
        let total: f64 = (-40..=40).map(|x| cell_probability(&[x], 1.0).unwrap().p).sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert!(cell_probability(&[0], 0.0).is_err());
    }

    #[test]
    fn log_space_survives_underflow() {
        let c = cell_probability(&[60; 8], 1.0).unwrap();
        assert_eq!(c.p, 0.0);
        assert!(c.log_p.is_finite() && c.log_p < -10_000.0);
    }

    #[test]
    fn build_n1_example() {
        let t = build_multiplicities_with(1, 1000, 1.0, 3.0, BuildOptions::default()).unwrap();
        assert_eq!(t.points.coords(), &[-3, -2, -1, 0, 1, 2, 3]);
        let zero = t.entry(t.origin);
        assert_eq!(zero.m, 382);
        assert_eq!(t.m_prime.iter().sum::<u64>(), 1000);
        assert_eq!(zero.m_prime, 382 + 1000 - t.total_floor);
    }

    #[test]
    fn build_conserves_and_floors_tightly() {
        let t = build_multiplicities_with(2, 1_000_000, 2.0, 1.0, BuildOptions { radius: Some(8.0), ..Default::default() })
            .unwrap();
        assert_eq!(t.m_prime.iter().sum::<u64>(), 1_000_000);
        for e in t.entries() {
            let np = 1e6 * cell_probability(e.point, 2.0).unwrap().p;
            let gap = np - e.m as f64;
            assert!(gap > -1e-9 * np && gap < 1.0 + 1e-9 * np, "{:?}: {np} vs {}", e.point, e.m);
        }
        // N - N' is bounded by the truncated mass plus one per point
        let inside: f64 = t.entries().map(|e| cell_probability(e.point, 2.0).unwrap().p).sum();
        let deficit = (t.total - t.total_floor) as f64;
        assert!(deficit <= 1e6 * (1.0 - inside) + t.len() as f64);
    }

    #[test]
    fn multiplicities_are_hyperoctahedrally_symmetric() {
        let t = build_multiplicities_with(3, 1_000_000_000, 1.5, 1.0, BuildOptions { radius: Some(5.0), ..Default::default() })
            .unwrap();
        for e in t.entries() {
            let mut q: Vec<i32> = e.point.iter().map(|x| -x).collect();
            q.rotate_left(1);
            let j = t.points.position(&q).unwrap();
            assert_eq!(t.m[j], e.m);
        }
    }

    #[test]
    fn high_precision_path_agrees_with_double_double() {
        // Directly compare the two floor routes on points far from ties.
        let table = FactorTable::new(6, 1.3);
        let scale = DoubleDouble::from_u64(987_654_321_987);
        for p in enumerate_ball(2, 6.0).unwrap().iter() {
            let (fast, _) = floor_multiplicity(p, &table, scale, 987_654_321_987, 1.3);
            let coords: Vec<i64> = p.iter().map(|&x| x as i64).collect();
            let exact: u64 = hp::cell_probability(&coords, 1.3).floor_times(987_654_321_987).try_into().unwrap();
            assert_eq!(fast, exact, "{p:?}");
        }
    }

    #[test]
    fn build_rejects_bad_inputs() {
        assert!(build_multiplicities(2, 0, 1.0, 1.0).is_err());
        assert!(build_multiplicities(2, 10, -1.0, 1.0).is_err());
        assert!(build_multiplicities(2, 10, 1.0, 0.0).is_err());
    }

    #[test]
    fn csv_export() {
        let t = build_multiplicities_with(1, 10, 1.0, 1.0, BuildOptions::default()).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "x1,m,m_prime");
        assert_eq!(text.lines().count(), 4);
    }
}
