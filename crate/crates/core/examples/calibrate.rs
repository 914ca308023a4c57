//! Calibration run for the desk-scale distortion and quantile-band checks.
//!
//! 1. Brute-force oracle: at `N = 10⁵`, `n = 3`, `σ = 6`, radius 24, expand
//!    `T` and `v` into dense arrays and compare `‖Tθ‖₂` and `M` with the
//!    row-group pipeline.
//! 2. Sweep `σ ∈ {3, 6, 12}` (radius `4σ`) at `N = 10⁹` over 500 seeded
//!    directions, reporting the ℓ₂ spread and the effective `δ`.
//!
//! Run with `cargo run --release -p permembed --example calibrate`.

use std::time::Instant;

use permembed::embedding::{build_matrix, plan_parameters, reference_profile, scaling_constant, PlanRequest};
use permembed::verify::{distortion_sweep, quantile_comparison, sphere_sample};
use permembed::{Matrix, PermInvariantNorm};

const SEED: u64 = 20_261_019;
const THETAS: usize = 500;
const BAND_THETAS: usize = 16;
const GRID: usize = 2000;
const RESOLUTION: u64 = 100_000;

fn main() {
    brute_force_oracle();
    for sigma in [3.0, 6.0, 12.0] {
        sweep(sigma);
    }
}

fn brute_force_oracle() {
    let spec = plan_parameters(&PlanRequest::desk(0.1, 3, 100_000, 6.0, 24.0)).unwrap();
    let t: Matrix = build_matrix(&spec).unwrap();
    let dense: Vec<[f64; 3]> = t
        .groups()
        .flat_map(|g| std::iter::repeat_n([g.direction[0], g.direction[1], g.direction[2]], g.multiplicity as usize))
        .collect();
    assert_eq!(dense.len(), 100_000);
    let profile = reference_profile::<f64>(&spec, RESOLUTION).unwrap();
    let v = profile.buckets.expand();
    let m_dense = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let l2 = PermInvariantNorm::lp(2.0).unwrap();
    let m_pipe = scaling_constant(&profile, &l2).unwrap();
    let thetas: Vec<Vec<f64>> = sphere_sample(3, THETAS, SEED).unwrap();
    let mut worst = 0.0_f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for th in &thetas {
        let dense_norm = dense.iter().map(|r| (r[0] * th[0] + r[1] * th[1] + r[2] * th[2]).powi(2)).sum::<f64>().sqrt();
        let pipe = l2.eval(&t.apply(th).unwrap()).unwrap();
        worst = worst.max((dense_norm - pipe).abs() / dense_norm);
        let r = dense_norm / m_dense;
        lo = lo.min(r);
        hi = hi.max(r);
    }
    println!("oracle N=1e5 n=3 sigma=6: M dense {m_dense:.17e} pipeline {m_pipe:.17e}");
    println!("oracle max relative mismatch {worst:.3e}; dense ratios [{lo:.12}, {hi:.12}]");
}

fn sweep(sigma: f64) {
    let start = Instant::now();
    let spec = plan_parameters(&PlanRequest::desk(0.1, 3, 1_000_000_000, sigma, 4.0 * sigma)).unwrap();
    let t: Matrix = build_matrix(&spec).unwrap();
    let origin = t.groups().find(|g| g.point.iter().all(|&x| x == 0)).map_or(0, |g| g.multiplicity);
    let profile = reference_profile::<f64>(&spec, RESOLUTION).unwrap();
    let l2 = PermInvariantNorm::lp(2.0).unwrap();
    let m = scaling_constant(&profile, &l2).unwrap();
    let thetas: Vec<Vec<f64>> = sphere_sample(3, THETAS, SEED).unwrap();
    let report = distortion_sweep(&t, &l2, &thetas, m).unwrap();
    let deltas: Vec<f64> = thetas[..BAND_THETAS]
        .iter()
        .map(|th| quantile_comparison(&t, th, GRID).unwrap().effective_delta().unwrap_or(f64::INFINITY))
        .collect();
    let delta_eff = deltas.iter().copied().fold(0.0, f64::max);
    println!(
        "sigma={sigma:>4} radius={:>4} groups={:>7} m'(0)={origin:>10} M^2/N={:.12} min={:.12} max={:.12} spread={:.6e} delta_eff={delta_eff:.6e} ({:.1}s)",
        4.0 * sigma,
        t.group_count(),
        m * m / 1e9,
        report.min_ratio,
        report.max_ratio,
        report.distortion,
        start.elapsed().as_secs_f64()
    );
}
