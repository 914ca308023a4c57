//! Permutation-invariant norms evaluated on weighted multisets.
//!
//! A vector whose norm is invariant under coordinate permutations is fully
//! described by the multiset of its entries, so evaluators only ever see
//! `(value, count)` pairs. Cost scales with the number of distinct values.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::scalar::Real;

/// Relative tolerance of the Orlicz (Luxemburg) bisection.
pub const ORLICZ_REL_TOL: f64 = 1e-12;

/// Slack allowed by [`dual_check`].
pub const TRIANGLE_SLACK: f64 = 1e-10;

/// Real values with positive integer multiplicities.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedMultiset<T> {
    items: Vec<(T, u64)>,
    total: u64,
}

impl<T: Real> Default for WeightedMultiset<T> {
    fn default() -> Self {
        Self { items: Vec::new(), total: 0 }
    }
}

impl<T: Real> WeightedMultiset<T> {
    /// Fails if any count is zero or any value is NaN.
    pub fn new(items: Vec<(T, u64)>) -> Result<Self> {
        if let Some(&(v, c)) = items.iter().find(|(v, c)| *c == 0 || v.is_nan()) {
            return Err(domain(format!("multiset items need count >= 1 and a number, got ({v}, {c})")));
        }
        let total = items.iter().map(|&(_, c)| c).sum();
        Ok(Self { items, total })
    }

    /// Like [`WeightedMultiset::new`] but silently drops zero-count items.
    pub fn from_counts(items: impl IntoIterator<Item = (T, u64)>) -> Self {
        let items: Vec<(T, u64)> = items.into_iter().filter(|&(_, c)| c > 0).collect();
        let total = items.iter().map(|&(_, c)| c).sum();
        Self { items, total }
    }

    /// Every value with multiplicity one.
    pub fn from_values(values: &[T]) -> Self {
        Self::from_counts(values.iter().map(|&v| (v, 1)))
    }

    pub fn items(&self) -> &[(T, u64)] {
        &self.items
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn max_abs(&self) -> T {
        self.items.iter().fold(T::zero(), |m, &(v, _)| m.max(v.abs()))
    }

    pub fn scale(&self, factor: T) -> Self {
        Self { items: self.items.iter().map(|&(v, c)| (v * factor, c)).collect(), total: self.total }
    }

    /// Sorted ascending with equal values merged.
    pub fn sorted(&self) -> Self {
        let mut items = self.items.clone();
        items.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));
        let mut merged: Vec<(T, u64)> = Vec::with_capacity(items.len());
        for (v, c) in items {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        Self { items: merged, total: self.total }
    }

    /// All values, each repeated by its count.
    pub fn expand(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.total as usize);
        for &(v, c) in &self.items {
            out.extend(std::iter::repeat_n(v, c as usize));
        }
        out
    }
}

/// Growth function `ψ` of an Orlicz norm.
#[derive(Clone)]
pub enum Growth {
    /// `ψ(t) = e^{t²} − 1`.
    Exp2,
    /// `ψ(t) = t^p`, `p ≥ 1`.
    Power(f64),
    /// Any other nondecreasing convex `ψ` with `ψ(0) = 0`.
    Custom { name: String, psi: Arc<dyn Fn(f64) -> f64 + Send + Sync> },
}

impl fmt::Debug for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for Growth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Growth::Exp2 => write!(f, "exp2"),
            Growth::Power(p) => write!(f, "pow:{p}"),
            Growth::Custom { name, .. } => write!(f, "custom:{name}"),
        }
    }
}

impl PartialEq for Growth {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Growth::Exp2, Growth::Exp2) => true,
            (Growth::Power(a), Growth::Power(b)) => a == b,
            (Growth::Custom { psi: a, .. }, Growth::Custom { psi: b, .. }) => Arc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Growth {
    pub fn custom(name: impl Into<String>, psi: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        let g = Growth::Custom { name: name.into(), psi: Arc::new(psi) };
        g.validate()?;
        Ok(g)
    }

    fn eval<T: Real>(&self, t: T) -> T {
        match self {
            Growth::Exp2 => (t * t).exp_m1(),
            Growth::Power(p) => t.powf(T::lit(*p)),
            Growth::Custom { psi, .. } => T::from_f64_lossy(psi(t.to_f64_exact())),
        }
    }

    /// Rejects growth functions that are not nondecreasing from `ψ(0) = 0`,
    /// sampled on `[0, 16]`.
    fn validate(&self) -> Result<()> {
        if let Growth::Power(p) = self {
            if !(*p >= 1.0) || !p.is_finite() {
                return Err(Error::Config(format!("orlicz power must be finite and >= 1, got {p}")));
            }
        }
        let at_zero: f64 = self.eval(0.0);
        if at_zero != 0.0 {
            return Err(Error::Config(format!("growth function {self} has psi(0) = {at_zero}, expected 0")));
        }
        let mut prev = at_zero;
        for i in 1..=1600 {
            let v: f64 = self.eval(i as f64 * 0.01);
            if v.is_nan() || v < prev {
                return Err(Error::Config(format!("growth function {self} is not nondecreasing near t = {}", i as f64 * 0.01)));
            }
            prev = v;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum NormKind {
    /// `ℓ_p`; `p = ∞` is the max norm.
    Lp(f64),
    /// Sum of the `k` largest absolute values.
    TopK(u64),
    /// Luxemburg norm of an Orlicz function.
    Orlicz(Growth),
}

/// A concrete permutation-invariant norm together with its declared basis constant.
#[derive(Debug, Clone, PartialEq)]
pub struct PermInvariantNorm {
    kind: NormKind,
    basis_constant: f64,
}

impl PermInvariantNorm {
    pub fn new(kind: NormKind) -> Result<Self> {
        match &kind {
            NormKind::Lp(p) if !(*p >= 1.0) => {
                return Err(Error::Config(format!("lp needs p >= 1, got {p}")));
            }
            NormKind::TopK(0) => return Err(Error::Config("topk needs k >= 1".into())),
            NormKind::Orlicz(g) => g.validate()?,
            _ => {}
        }
        Ok(Self { kind, basis_constant: 1.0 })
    }

    pub fn lp(p: f64) -> Result<Self> {
        Self::new(NormKind::Lp(p))
    }

    pub fn linf() -> Self {
        Self { kind: NormKind::Lp(f64::INFINITY), basis_constant: 1.0 }
    }

    pub fn topk(k: u64) -> Result<Self> {
        Self::new(NormKind::TopK(k))
    }

    pub fn orlicz(growth: Growth) -> Result<Self> {
        Self::new(NormKind::Orlicz(growth))
    }

    /// Declare the basis constant `K ≥ 1`. Built-in norms are 1-unconditional,
    /// so they default to `K = 1`.
    pub fn with_basis_constant(mut self, k: f64) -> Result<Self> {
        if !(k >= 1.0) || !k.is_finite() {
            return Err(Error::Config(format!("basis constant must be finite and >= 1, got {k}")));
        }
        self.basis_constant = k;
        Ok(self)
    }

    pub fn kind(&self) -> &NormKind {
        &self.kind
    }

    pub fn basis_constant(&self) -> f64 {
        self.basis_constant
    }

    pub fn eval<T: Real>(&self, w: &WeightedMultiset<T>) -> Result<T> {
        match &self.kind {
            NormKind::Lp(p) => Ok(eval_lp(w, *p)),
            NormKind::TopK(k) => eval_topk(w, *k),
            NormKind::Orlicz(g) => Ok(eval_orlicz(w, g)),
        }
    }
}

impl fmt::Display for PermInvariantNorm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            NormKind::Lp(p) if p.is_infinite() => write!(f, "lp:inf"),
            NormKind::Lp(p) => write!(f, "lp:{p}"),
            NormKind::TopK(k) => write!(f, "topk:{k}"),
            NormKind::Orlicz(g) => write!(f, "orlicz:{g}"),
        }
    }
}

/// Descriptor grammar:
///
/// ```text
/// lp:<p>        p ≥ 1, or "inf"
/// topk:<k>      k ≥ 1
/// orlicz:exp2   ψ(t) = e^{t²} − 1
/// orlicz:pow:<p>
/// ```
impl FromStr for PermInvariantNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unrecognised norm descriptor {s:?}"));
        let (family, arg) = s.trim().split_once(':').ok_or_else(bad)?;
        match family {
            "lp" => {
                if arg.eq_ignore_ascii_case("inf") {
                    Ok(Self::linf())
                } else {
                    Self::lp(arg.parse().map_err(|_| bad())?)
                }
            }
            "topk" => Self::topk(arg.parse().map_err(|_| bad())?),
            "orlicz" => match arg.split_once(':') {
                None if arg == "exp2" => Self::orlicz(Growth::Exp2),
                Some(("pow", p)) => Self::orlicz(Growth::Power(p.parse().map_err(|_| bad())?)),
                _ => Err(bad()),
            },
            _ => Err(bad()),
        }
    }
}

/// Neumaier-compensated sum.
fn compensated_sum<T: Real>(terms: impl Iterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for x in terms {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp = comp + ((sum - t) + x);
        } else {
            comp = comp + ((x - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

fn eval_lp<T: Real>(w: &WeightedMultiset<T>, p: f64) -> T {
    let peak = w.max_abs();
    if peak == T::zero() || p.is_infinite() {
        return peak;
    }
    if p == 1.0 {
        return compensated_sum(w.items().iter().map(|&(v, c)| v.abs() * T::from_count(c)));
    }
    let pt = T::lit(p);
    let s = compensated_sum(w.items().iter().map(|&(v, c)| (v.abs() / peak).powf(pt) * T::from_count(c)));
    peak * s.powf(T::one() / pt)
}

fn eval_topk<T: Real>(w: &WeightedMultiset<T>, k: u64) -> Result<T> {
    if k > w.total() {
        return Err(domain(format!("topk with k = {k} exceeds the multiset total {}", w.total())));
    }
    let mut mags: Vec<(T, u64)> = w.items().iter().map(|&(v, c)| (v.abs(), c)).collect();
    mags.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(Ordering::Equal));
    let mut remaining = k;
    let mut terms = Vec::new();
    for (v, c) in mags {
        if remaining == 0 {
            break;
        }
        let take = c.min(remaining);
        terms.push(v * T::from_count(take));
        remaining -= take;
    }
    Ok(compensated_sum(terms.into_iter()))
}

fn orlicz_mass<T: Real>(w: &WeightedMultiset<T>, g: &Growth, lambda: T) -> T {
    compensated_sum(w.items().iter().map(|&(v, c)| g.eval(v.abs() / lambda) * T::from_count(c)))
}

fn eval_orlicz<T: Real>(w: &WeightedMultiset<T>, g: &Growth) -> T {
    let peak = w.max_abs();
    if peak == T::zero() {
        return T::zero();
    }
    let one = T::one();
    let two = T::lit(2.0);
    let mut hi = peak;
    while orlicz_mass(w, g, hi) > one {
        hi = hi * two;
    }
    let mut lo = hi / two;
    while orlicz_mass(w, g, lo) <= one && lo > T::min_positive_value() {
        hi = lo;
        lo = lo / two;
    }
    let tol = T::lit(ORLICZ_REL_TOL).max(T::epsilon() * T::lit(4.0));
    for _ in 0..400 {
        if hi - lo <= tol * hi {
            break;
        }
        let mid = T::lit(0.5) * (lo + hi);
        if orlicz_mass(w, g, mid) > one {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Outcome of a sampled triangle-inequality check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriangleReport<T> {
    pub norm_of_sum: T,
    pub sum_of_norms: T,
    pub holds: bool,
}

/// Elementwise sum of the sorted expansions of `a` and `b` (the shorter one
/// padded with zeros), as a multiset.
pub fn sorted_aligned_sum<T: Real>(a: &WeightedMultiset<T>, b: &WeightedMultiset<T>) -> WeightedMultiset<T> {
    let mut xa = a.sorted().expand();
    let mut xb = b.sorted().expand();
    let len = xa.len().max(xb.len());
    xa.resize(len, T::zero());
    xb.resize(len, T::zero());
    WeightedMultiset::from_values(&xa.iter().zip(&xb).map(|(&x, &y)| x + y).collect::<Vec<_>>())
}

/// Checks `‖w1 ⊕ w2‖ ≤ ‖w1‖ + ‖w2‖ + 1e-10` for the sorted-aligned sum `⊕`.
pub fn dual_check<T: Real>(
    norm: &PermInvariantNorm,
    w1: &WeightedMultiset<T>,
    w2: &WeightedMultiset<T>,
) -> Result<TriangleReport<T>> {
    let lhs = norm.eval(&sorted_aligned_sum(w1, w2))?;
    let rhs = norm.eval(w1)? + norm.eval(w2)?;
    Ok(TriangleReport { norm_of_sum: lhs, sum_of_norms: rhs, holds: lhs <= rhs + T::lit(TRIANGLE_SLACK) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ms(items: &[(f64, u64)]) -> WeightedMultiset<f64> {
        WeightedMultiset::new(items.to_vec()).unwrap()
    }

    #[test]
    fn eval_examples() {
        let l2 = PermInvariantNorm::lp(2.0).unwrap();
        assert!((l2.eval(&ms(&[(2.0, 3)])).unwrap() - 12.0_f64.sqrt()).abs() < 1e-15);
        let top2 = PermInvariantNorm::topk(2).unwrap();
        assert_eq!(top2.eval(&ms(&[(3.0, 1), (1.0, 5)])).unwrap(), 4.0);
        let l4 = PermInvariantNorm::lp(4.0).unwrap();
        assert!((l4.eval(&ms(&[(1.0, 12)])).unwrap() - 1.861_209_718_204_199).abs() < 1e-15);
    }

    #[test]
    fn topk_beyond_total_is_an_error() {
        let top = PermInvariantNorm::topk(7).unwrap();
        assert!(matches!(top.eval(&ms(&[(1.0, 3)])), Err(Error::Domain(_))));
    }

    #[test]
    fn topk_respects_multiplicity() {
        let top = PermInvariantNorm::topk(4).unwrap();
        assert_eq!(top.eval(&ms(&[(-5.0, 3), (2.0, 10)])).unwrap(), 17.0);
    }

    #[test]
    fn linf_and_zero_vectors() {
        let w = ms(&[(-3.5, 2), (1.0, 1)]);
        assert_eq!(PermInvariantNorm::linf().eval(&w).unwrap(), 3.5);
        let z = ms(&[(0.0, 10)]);
        for s in ["lp:1", "lp:2", "lp:inf", "topk:3", "orlicz:exp2"] {
            let n: PermInvariantNorm = s.parse().unwrap();
            assert_eq!(n.eval(&z).unwrap(), 0.0, "{s}");
        }
    }

    #[test]
    fn orlicz_power_reproduces_lp() {
        for p in [1.0, 2.0, 3.5] {
            let o = PermInvariantNorm::orlicz(Growth::Power(p)).unwrap();
            let l = PermInvariantNorm::lp(p).unwrap();
            let w = ms(&[(1.5, 3), (-0.25, 7), (4.0, 1)]);
            let (a, b) = (o.eval(&w).unwrap(), l.eval(&w).unwrap());
            assert!((a - b).abs() <= 1e-10 * b, "p={p}: {a} vs {b}");
            // singleton: λ = |v|·c^{1/p}
            let single = ms(&[(2.0, 5)]);
            let expect = 2.0 * 5.0_f64.powf(1.0 / p);
            assert!((o.eval(&single).unwrap() - expect).abs() <= 1e-10 * expect);
        }
    }

    #[test]
    fn orlicz_exp2_singleton_closed_form() {
        // c·(e^{(v/λ)²} − 1) = 1  ⇒  λ = v / √ln(1 + 1/c)
        let o: PermInvariantNorm = "orlicz:exp2".parse().unwrap();
        let v = o.eval(&ms(&[(3.0, 4)])).unwrap();
        let expect = 3.0 / (1.25_f64).ln().sqrt();
        assert!((v - expect).abs() <= 1e-10 * expect);
    }

    #[test]
    fn non_monotone_growth_is_rejected() {
        assert!(matches!(Growth::custom("bump", |t| (t * 3.0).sin().abs()), Err(Error::Config(_))));
        assert!(matches!(Growth::custom("shifted", |t| t + 1.0), Err(Error::Config(_))));
        assert!(Growth::custom("cubic", |t| t * t * t).is_ok());
        assert!(matches!(PermInvariantNorm::orlicz(Growth::Power(0.5)), Err(Error::Config(_))));
    }

    #[test]
    fn descriptors_round_trip() {
        for s in ["lp:2", "lp:inf", "lp:1.5", "topk:32", "orlicz:exp2", "orlicz:pow:3"] {
            let n: PermInvariantNorm = s.parse().unwrap();
            assert_eq!(n.to_string(), s);
        }
        for s in ["lp:0.5", "lp", "topk:0", "topk:x", "orlicz:exp3", "l2", "orlicz:pow:0.2"] {
            assert!(s.parse::<PermInvariantNorm>().is_err(), "{s}");
        }
    }

    #[test]
    fn basis_constant_declaration() {
        let n = PermInvariantNorm::lp(2.0).unwrap();
        assert_eq!(n.basis_constant(), 1.0);
        assert_eq!(n.clone().with_basis_constant(2.0).unwrap().basis_constant(), 2.0);
        assert!(n.with_basis_constant(0.5).is_err());
    }

    #[test]
    fn dual_check_examples() {
        let l3 = PermInvariantNorm::lp(3.0).unwrap();
        let w = ms(&[(1.0, 2), (-2.0, 1)]);
        let zero = ms(&[(0.0, 3)]);
        let r = dual_check(&l3, &w, &zero).unwrap();
        assert!(r.holds && (r.norm_of_sum - r.sum_of_norms).abs() < 1e-12);
        let r = dual_check(&l3, &w, &w).unwrap();
        assert!((r.norm_of_sum - 2.0 * l3.eval(&w).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn multiset_invariants() {
        assert!(WeightedMultiset::new(vec![(1.0, 0)]).is_err());
        assert!(WeightedMultiset::new(vec![(f64::NAN, 1)]).is_err());
        let w = WeightedMultiset::from_counts(vec![(2.0, 1), (1.0, 0), (-1.0, 2), (2.0, 3)]);
        assert_eq!(w.total(), 6);
        let s = w.sorted();
        assert_eq!(s.items(), &[(-1.0, 2), (2.0, 4)]);
        assert_eq!(s.expand(), vec![-1.0, -1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn f32_norms() {
        let w = WeightedMultiset::<f32>::new(vec![(2.0, 3)]).unwrap();
        let v = PermInvariantNorm::lp(2.0).unwrap().eval(&w).unwrap();
        assert!((v - 12.0_f32.sqrt()).abs() < 1e-6);
    }
}
