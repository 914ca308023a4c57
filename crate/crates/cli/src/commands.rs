use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context, Result};
use permembed::embedding::build_matrix_with;
use permembed::files::{load_matrix, save_matrix, to_sorted_json, write_dense_csv, DENSE_EXPORT_LIMIT, MANIFEST_FILE};
use permembed::lattice::BuildOptions;
use permembed::verify::{l4_identity_check, quantile_comparison, QuantileComparison, MAX_EFFECTIVE_DELTA};
use permembed::{
    distortion_sweep, plan_parameters, reference_profile, scaling_constant, sphere_sample, EmbeddingSpec, Error,
    Marginal, Matrix, PermInvariantNorm, PlanRequest,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{BuildCmd, Cli, Command, DistortCmd, PlanArgs, PlanCmd, RefcheckCmd, TablesCmd, VerifyCmd};
use crate::manifest::{digest, FileDigest, Invocation, RunManifest};
use crate::UsageError;

/// Largest table `tables` will emit.
const MAX_TABLE_ROWS: usize = 10_000_001;

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Run the parsed command line; `Ok(false)` means a criterion failed under `--strict`.
pub fn dispatch(cli: Cli, argv: Vec<String>) -> Result<bool> {
    if let Some(path) = cli.from_manifest {
        if cli.command.is_some() {
            return Err(usage("--from-manifest replays a recorded command and takes no subcommand"));
        }
        return replay(&path, cli.replay_dir, argv);
    }
    let command = cli.command.ok_or_else(|| usage("a subcommand or --from-manifest is required (see --help)"))?;
    let (_, ok) = execute(Invocation { strict: cli.strict, command }, argv)?;
    Ok(ok)
}

fn replay(path: &Path, replay_dir: Option<PathBuf>, argv: Vec<String>) -> Result<bool> {
    let recorded = RunManifest::load(path)?;
    let changed = recorded.changed_inputs()?;
    if !changed.is_empty() {
        return Err(usage(format!("inputs changed since the recorded run: {}", changed.join(", "))));
    }
    let mut invocation = recorded.invocation.clone();
    if let Some(dir) = replay_dir {
        invocation.command.set_out(std::path::absolute(dir)?);
    }
    let (manifest, ok) = execute(invocation, argv)?;
    let manifest = manifest.ok_or_else(|| usage("the recorded run has no output directory"))?;
    let now: BTreeMap<&str, &str> = manifest.outputs.iter().map(|f| (f.path.as_str(), f.sha256.as_str())).collect();
    let mismatched: Vec<&str> = recorded
        .outputs
        .iter()
        .filter(|f| now.get(f.path.as_str()) != Some(&f.sha256.as_str()))
        .map(|f| f.path.as_str())
        .collect();
    if !mismatched.is_empty() || now.len() != recorded.outputs.len() {
        return Err(anyhow!("replay did not reproduce the recorded outputs: {mismatched:?}"));
    }
    eprintln!("permembed: replay reproduced {} output files", now.len());
    Ok(ok)
}

/// Everything a command records about itself for the run manifest.
struct Run {
    out: Option<PathBuf>,
    outputs: Vec<String>,
    inputs: Vec<PathBuf>,
    spec: Option<EmbeddingSpec>,
    seeds: BTreeMap<String, u64>,
    timings: BTreeMap<String, f64>,
    passed: Option<bool>,
}

impl Run {
    fn timed<R>(&mut self, phase: &str, f: impl FnOnce() -> R) -> R {
        let start = Instant::now();
        let r = f();
        self.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
        r
    }

    /// Create `name` in the output directory, if there is one.
    fn create(&mut self, name: &str) -> Result<Option<fs::File>> {
        let Some(dir) = &self.out else { return Ok(None) };
        self.outputs.push(name.to_string());
        Ok(Some(fs::File::create(dir.join(name))?))
    }

    fn write(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        if let Some(mut f) = self.create(name)? {
            f.write_all(contents)?;
        }
        Ok(())
    }
}

fn absolutize(command: &mut Command) -> Result<()> {
    let abs = |p: &mut PathBuf| -> Result<()> {
        *p = std::path::absolute(&*p)?;
        Ok(())
    };
    match command {
        Command::Plan(c) => c.out.as_mut().map(abs).transpose()?,
        Command::Build(c) => {
            abs(&mut c.out)?;
            c.spec.as_mut().map(abs).transpose()?
        }
        Command::Verify(c) => {
            abs(&mut c.matrix)?;
            c.out.as_mut().map(abs).transpose()?
        }
        Command::Distort(c) => {
            abs(&mut c.matrix)?;
            c.out.as_mut().map(abs).transpose()?
        }
        Command::Tables(c) => c.out.as_mut().map(abs).transpose()?,
        Command::Refcheck(c) => c.out.as_mut().map(abs).transpose()?,
    };
    Ok(())
}

fn execute(mut invocation: Invocation, argv: Vec<String>) -> Result<(Option<RunManifest>, bool)> {
    let start = Instant::now();
    absolutize(&mut invocation.command)?;
    let out = invocation.command.out().cloned();
    if let Some(dir) = &out {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut run = Run {
        out: out.clone(),
        outputs: Vec::new(),
        inputs: Vec::new(),
        spec: None,
        seeds: BTreeMap::new(),
        timings: BTreeMap::new(),
        passed: None,
    };
    let stdout = match &invocation.command {
        Command::Plan(c) => plan(c, &mut run)?,
        Command::Build(c) => build(c, &mut run)?,
        Command::Verify(c) => verify(c, &mut run)?,
        Command::Distort(c) => distort(c, &mut run)?,
        Command::Tables(c) => tables(c, &mut run)?,
        Command::Refcheck(c) => refcheck(c, &mut run)?,
    };
    run.timings.insert("total".to_string(), start.elapsed().as_secs_f64());
    let mut lock = std::io::stdout().lock();
    lock.write_all(stdout.as_bytes())?;
    lock.flush()?;

    let passed = run.passed.unwrap_or(true);
    let ok = passed || !invocation.strict;
    let Some(dir) = out else { return Ok((None, ok)) };
    let digests = |paths: Vec<(String, PathBuf)>| -> Result<Vec<FileDigest>> {
        paths
            .into_iter()
            .map(|(name, p)| digest(&p).map(|(sha256, bytes)| FileDigest { path: name, sha256, bytes }))
            .collect()
    };
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        command_line: argv,
        invocation,
        spec: run.spec,
        seeds: run.seeds,
        inputs: digests(run.inputs.into_iter().map(|p| (p.display().to_string(), p)).collect())?,
        outputs: digests(run.outputs.into_iter().map(|n| (n.clone(), dir.join(&n))).collect())?,
        timings: run.timings,
        threads: rayon::current_num_threads(),
        passed: run.passed,
    };
    manifest.write(&dir)?;
    Ok((Some(manifest), ok))
}

fn request(p: &PlanArgs) -> PlanRequest {
    PlanRequest {
        epsilon: p.epsilon,
        basis_constant: p.basis_constant,
        mode: p.mode,
        n: p.n,
        total: p.total,
        sigma: p.sigma,
        alpha: p.alpha,
        radius: p.radius,
        delta: p.delta,
    }
}

fn plan(c: &PlanCmd, run: &mut Run) -> Result<String> {
    let spec = plan_parameters(&request(&c.plan))?;
    let text = to_sorted_json(&spec)?;
    run.write("spec.json", text.as_bytes())?;
    run.spec = Some(spec);
    Ok(text)
}

fn parse_norm(descriptor: &str) -> Result<PermInvariantNorm> {
    descriptor.parse().map_err(|e: Error| usage(format!("bad norm descriptor {descriptor:?}: {e}")))
}

fn build(c: &BuildCmd, run: &mut Run) -> Result<String> {
    let spec = match &c.spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            run.inputs.push(path.clone());
            serde_json::from_str::<EmbeddingSpec>(&text)
                .map_err(|e| usage(format!("{} is not a spec: {e}", path.display())))?
        }
        None => plan_parameters(&request(&c.plan))?,
    };
    run.spec = Some(spec.clone());
    if c.dense && spec.total > DENSE_EXPORT_LIMIT {
        return Err(Error::Refused(format!("--dense needs N <= {DENSE_EXPORT_LIMIT}, got {}", spec.total)).into());
    }
    let norms = c.norms.iter().map(|d| parse_norm(d)).collect::<Result<Vec<_>>>()?;
    let options = BuildOptions { point_cap: c.point_cap, radius: None };
    let (matrix, table) = run.timed("lattice", || build_matrix_with::<f64>(&spec, options))?;
    let profile = run.timed("reference", || reference_profile::<f64>(&spec, c.resolution))?;
    let constants = norms
        .iter()
        .map(|norm| Ok((norm.to_string(), scaling_constant(&profile, norm)?)))
        .collect::<Result<BTreeMap<String, f64>>>()?;
    let matrix = match c.truncate {
        Some(k) => matrix.truncate_columns(k)?,
        None => matrix,
    };

    if let Some(dir) = run.out.clone() {
        let start = Instant::now();
        for p in save_matrix(&dir, &matrix, constants.clone())? {
            run.outputs.push(p.file_name().expect("file path").to_string_lossy().into_owned());
        }
        if let Some(f) = run.create("lattice.csv")? {
            table.write_csv(std::io::BufWriter::new(f))?;
        }
        run.write("lattice.json", to_sorted_json(&table.header(spec.bound_satisfied))?.as_bytes())?;
        if c.dense {
            if let Some(f) = run.create("dense.csv")? {
                write_dense_csv(&matrix, f)?;
            }
        }
        run.timings.insert("write".to_string(), start.elapsed().as_secs_f64());
    }
    let summary = json!({
        "n": spec.n,
        "N": spec.total,
        "group_count": matrix.group_count(),
        "width": matrix.width(),
        "truncated": matrix.is_truncated(),
        "N_prime": table.total_floor,
        "origin_multiplicity": table.m_prime[table.origin],
        "high_precision_floors": table.high_precision_floors,
        "scaling_constants": constants,
        "bound_satisfied": spec.bound_satisfied,
    });
    Ok(to_sorted_json(&summary)?)
}

/// Load a matrix and record its files as inputs.
fn load(path: &Path, run: &mut Run) -> Result<(permembed::files::MatrixManifest, Matrix)> {
    let (manifest, matrix) = run.timed("load", || load_matrix(path))?;
    let json_path = if path.is_dir() { path.join(MANIFEST_FILE) } else { path.to_path_buf() };
    let groups = json_path.parent().unwrap_or(Path::new(".")).join(&manifest.groups_file);
    run.inputs.extend([json_path, groups]);
    run.spec = Some(manifest.spec.clone());
    Ok((manifest, matrix))
}

fn verify(c: &VerifyCmd, run: &mut Run) -> Result<String> {
    let fixed = match c.delta_eff.as_str() {
        "auto" => None,
        s => match s.parse::<f64>() {
            Ok(d) if d > 0.0 && d.is_finite() => Some(d),
            _ => return Err(usage(format!("--delta-eff must be \"auto\" or a positive number, got {s:?}"))),
        },
    };
    if c.grid == 0 || c.theta_count == 0 {
        return Err(usage("--grid and --theta-count must be positive"));
    }
    let (_, matrix) = load(&c.matrix, run)?;
    run.seeds.insert("theta_seed".to_string(), c.theta_seed);
    let thetas: Vec<Vec<f64>> = sphere_sample(matrix.width(), c.theta_count, c.theta_seed)?;
    let comparisons = run.timed("project", || {
        thetas.par_iter().map(|t| quantile_comparison(&matrix, t, c.grid)).collect::<permembed::Result<Vec<QuantileComparison>>>()
    })?;
    let effective: Vec<Option<f64>> = match fixed {
        Some(_) => Vec::new(),
        None => run.timed("search", || comparisons.par_iter().map(QuantileComparison::effective_delta).collect()),
    };
    let found = effective.iter().all(Option::is_some);
    let delta = match fixed {
        Some(d) => d,
        None if found => effective.iter().flatten().copied().fold(0.0, f64::max),
        None => MAX_EFFECTIVE_DELTA,
    };
    let reports: Vec<_> = comparisons.par_iter().map(|q| q.report(delta)).collect();
    let pass = found && reports.iter().all(|r| r.pass);
    run.passed = Some(pass);

    if let Some(f) = run.create("bands.csv")? {
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "theta,s,regime,empirical,reference,deviation,band,pass,boundary")?;
        for (i, r) in reports.iter().enumerate() {
            for row in &r.rows {
                let regime = serde_json::to_value(row.regime)?;
                writeln!(
                    w,
                    "{i},{:?},{},{:?},{:?},{:?},{:?},{},{}",
                    row.s,
                    regime.as_str().unwrap_or_default(),
                    row.empirical,
                    row.reference,
                    row.deviation,
                    row.band,
                    row.pass,
                    row.boundary
                )?;
            }
        }
        w.flush()?;
    }
    let per_theta: Vec<Value> = reports
        .iter()
        .enumerate()
        .map(|(i, r)| {
            json!({
                "index": i,
                "theta": thetas[i],
                "effective_delta": effective.get(i).copied().flatten(),
                "max_ratio": r.max_ratio,
                "pass": r.pass,
                "failing_levels": r.rows.iter().filter(|row| !row.pass).count(),
            })
        })
        .collect();
    let summary = json!({
        "n": matrix.dim(),
        "N": matrix.total(),
        "grid": c.grid,
        "theta_seed": c.theta_seed,
        "theta_count": c.theta_count,
        "delta_mode": if fixed.is_some() { "fixed" } else { "auto" },
        "delta": delta,
        "effective_delta_found": fixed.is_none() && found,
        "a": reports[0].a,
        "b": reports[0].b,
        "per_theta": per_theta,
        "pass": pass,
    });
    let text = to_sorted_json(&summary)?;
    run.write("verify.json", text.as_bytes())?;
    Ok(text)
}

fn distort(c: &DistortCmd, run: &mut Run) -> Result<String> {
    let norm = parse_norm(&c.norm)?;
    let (manifest, matrix) = load(&c.matrix, run)?;
    let key = norm.to_string();
    let (scale, scale_source) = match manifest.scaling_constants.get(&key) {
        Some(&m) => (m, "matrix"),
        None => {
            let profile = run.timed("reference", || reference_profile::<f64>(matrix.spec(), c.resolution))?;
            (scaling_constant(&profile, &norm)?, "computed")
        }
    };
    let k = matrix.width();
    let thetas: Vec<Vec<f64>> = if c.basis {
        (0..2 * k)
            .map(|j| {
                let mut e = vec![0.0; k];
                e[j / 2] = if j % 2 == 0 { 1.0 } else { -1.0 };
                e
            })
            .collect()
    } else {
        if c.theta_count == 0 {
            return Err(usage("--theta-count must be positive"));
        }
        run.seeds.insert("theta_seed".to_string(), c.theta_seed);
        sphere_sample(k, c.theta_count, c.theta_seed)?
    };
    let report = run.timed("sweep", || distortion_sweep(&matrix, &norm, &thetas, scale))?;
    let max_distortion = c.max_distortion.unwrap_or(matrix.spec().epsilon);
    let pass = report.distortion <= max_distortion;
    run.passed = Some(pass);

    if let Some(f) = run.create("ratios.csv")? {
        let mut w = std::io::BufWriter::new(f);
        writeln!(w, "index,ratio")?;
        for (i, r) in report.ratios.iter().enumerate() {
            writeln!(w, "{i},{r:?}")?;
        }
        w.flush()?;
    }
    let full = json!({
        "norm": key,
        "scale": scale,
        "scale_source": scale_source,
        "directions": if c.basis { "basis" } else { "random" },
        "report": report,
        "max_distortion": max_distortion,
        "pass": pass,
    });
    run.write("distort.json", to_sorted_json(&full)?.as_bytes())?;
    let summary = json!({
        "norm": key,
        "scale": scale,
        "scale_source": scale_source,
        "count": report.ratios.len(),
        "min_ratio": report.min_ratio,
        "max_ratio": report.max_ratio,
        "distortion": report.distortion,
        "non_unit": report.non_unit.len(),
        "max_distortion": max_distortion,
        "pass": pass,
    });
    Ok(to_sorted_json(&summary)?)
}

fn tables(c: &TablesCmd, run: &mut Run) -> Result<String> {
    let marginal = Marginal::new(c.n)?;
    let root = (c.n as f64).sqrt();
    let (lo, hi) = match &c.range {
        None => (-root, root),
        Some(r) => {
            let parsed: Option<(f64, f64)> = r.split_once(',').and_then(|(a, b)| Some((a.trim().parse().ok()?, b.trim().parse().ok()?)));
            parsed.ok_or_else(|| usage(format!("--range must be \"lo,hi\", got {r:?}")))?
        }
    };
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(usage(format!("--range needs finite lo <= hi, got {lo},{hi}")));
    }
    if !(c.step > 0.0 && c.step.is_finite()) {
        return Err(usage("--step must be positive"));
    }
    let span = ((hi - lo) / c.step * (1.0 + 1e-12)).floor();
    if span + 1.0 > MAX_TABLE_ROWS as f64 {
        return Err(usage(format!("table would have {} rows, limit is {MAX_TABLE_ROWS}", span + 1.0)));
    }
    let mut csv = String::from("t,phi_n,Phi_n\n");
    for i in 0..=span as usize {
        let t = lo + i as f64 * c.step;
        let density = match marginal.phi_n(t) {
            Ok(v) => v,
            Err(Error::UnboundedDensity { .. }) => f64::INFINITY,
            Err(e) => return Err(e.into()),
        };
        csv.push_str(&format!("{t:?},{density:?},{:?}\n", marginal.cdf(t)));
    }
    if run.out.is_none() {
        return Ok(csv);
    }
    run.write("tables.csv", csv.as_bytes())?;
    let summary = json!({ "n": c.n, "lo": lo, "hi": hi, "step": c.step, "rows": span as usize + 1, "file": "tables.csv" });
    Ok(to_sorted_json(&summary)?)
}

fn refcheck(c: &RefcheckCmd, run: &mut Run) -> Result<String> {
    if c.count == 0 {
        return Err(usage("--count must be positive"));
    }
    run.seeds.insert("seed".to_string(), c.seed);
    let report = run.timed("check", || l4_identity_check(c.count, c.seed, c.tolerance));
    run.passed = Some(report.pass);
    let text = to_sorted_json(&report)?;
    run.write("refcheck.json", text.as_bytes())?;
    Ok(text)
}
