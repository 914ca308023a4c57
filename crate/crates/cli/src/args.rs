use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use permembed::lattice::DEFAULT_POINT_CAP;
use permembed::Mode;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "permembed", version, about = "Build and check explicit embeddings of l2^n into permutation-invariant norms")]
pub struct Cli {
    /// Worker threads (0 = one per core). Results do not depend on it.
    #[arg(long, env = "PERMEMBED_THREADS", global = true)]
    pub threads: Option<usize>,

    /// Exit with status 3 when a checked criterion fails.
    #[arg(long, global = true)]
    pub strict: bool,

    /// Re-run the command recorded in a run.json and compare output hashes.
    #[arg(long, value_name = "RUN_JSON")]
    pub from_manifest: Option<PathBuf>,

    /// Output directory for a replay (defaults to the recorded one).
    #[arg(long, requires = "from_manifest")]
    pub replay_dir: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Derive the full parameter set and print it as JSON.
    Plan(PlanCmd),
    /// Build the row-group matrix and write it to a directory.
    Build(BuildCmd),
    /// Compare projected quantiles with the spherical marginal.
    Verify(VerifyCmd),
    /// Measure ||T theta|| / M over seeded directions.
    Distort(DistortCmd),
    /// Tabulate the marginal density and CDF as CSV.
    Tables(TablesCmd),
    /// Check the l2^4 -> l4^12 isometry on seeded inputs.
    Refcheck(RefcheckCmd),
}

impl Command {
    pub fn out(&self) -> Option<&PathBuf> {
        match self {
            Command::Plan(c) => c.out.as_ref(),
            Command::Build(c) => Some(&c.out),
            Command::Verify(c) => c.out.as_ref(),
            Command::Distort(c) => c.out.as_ref(),
            Command::Tables(c) => c.out.as_ref(),
            Command::Refcheck(c) => c.out.as_ref(),
        }
    }

    pub fn set_out(&mut self, dir: PathBuf) {
        match self {
            Command::Plan(c) => c.out = Some(dir),
            Command::Build(c) => c.out = dir,
            Command::Verify(c) => c.out = Some(dir),
            Command::Distort(c) => c.out = Some(dir),
            Command::Tables(c) => c.out = Some(dir),
            Command::Refcheck(c) => c.out = Some(dir),
        }
    }
}

/// Accepts plain integers and exact scientific notation such as `1e9`.
fn parse_count(s: &str) -> Result<u64, String> {
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("not a count: {s:?}"))?;
    if f >= 0.0 && f.fract() == 0.0 && f < u64::MAX as f64 {
        Ok(f as u64)
    } else {
        Err(format!("not a non-negative integer: {s:?}"))
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlanArgs {
    /// Target accuracy.
    #[arg(long, default_value_t = 0.1)]
    pub epsilon: f64,
    /// Basis constant of the target norm.
    #[arg(long = "K", visible_alias = "k", default_value_t = 1.0)]
    pub basis_constant: f64,
    #[arg(long, default_value = "paper", value_parser = clap::value_parser!(Mode))]
    pub mode: Mode,
    /// Source dimension.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    /// Target dimension (desk mode).
    #[arg(long = "N", visible_alias = "total", value_parser = parse_count)]
    pub total: Option<u64>,
    /// Gaussian cell scale (desk mode).
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Truncation scale; the ball radius is alpha*sqrt(n) (desk mode).
    #[arg(long, conflicts_with = "radius")]
    pub alpha: Option<f64>,
    /// Ball radius directly (desk mode).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Band parameter (desk mode; defaults to epsilon/1429).
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PlanCmd {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Also write spec.json and run.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct BuildCmd {
    #[command(flatten)]
    pub plan: PlanArgs,
    /// Build from a spec JSON (as printed by `plan`) instead of the flags.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Norm descriptors whose scaling constant M is stored with the matrix.
    #[arg(long = "norm", default_value = "lp:2")]
    pub norms: Vec<String>,
    /// Bucket count for the reference vector when N is large.
    #[arg(long, default_value_t = 100_000)]
    pub resolution: u64,
    /// Also write every row of T to dense.csv (N <= 100000).
    #[arg(long)]
    pub dense: bool,
    /// Keep only the first k columns.
    #[arg(long)]
    pub truncate: Option<usize>,
    /// Refuse lattices with more estimated points than this.
    #[arg(long, default_value_t = DEFAULT_POINT_CAP)]
    pub point_cap: u64,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct VerifyCmd {
    /// Matrix directory or its matrix.json.
    #[arg(long)]
    pub matrix: PathBuf,
    /// `auto` to search for the smallest passing delta, or a fixed value.
    #[arg(long, default_value = "auto")]
    pub delta_eff: String,
    /// Quantile grid size G (levels (j-1/2)/G).
    #[arg(long, default_value_t = 2000)]
    pub grid: usize,
    #[arg(long, default_value_t = 1)]
    pub theta_seed: u64,
    #[arg(long, default_value_t = 16)]
    pub theta_count: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct DistortCmd {
    #[arg(long)]
    pub matrix: PathBuf,
    #[arg(long, default_value = "lp:2")]
    pub norm: String,
    #[arg(long, default_value_t = 1)]
    pub theta_seed: u64,
    #[arg(long, default_value_t = 500)]
    pub theta_count: usize,
    /// Use the signed coordinate directions instead of random ones.
    #[arg(long)]
    pub basis: bool,
    /// Bucket count when M has to be recomputed.
    #[arg(long, default_value_t = 100_000)]
    pub resolution: u64,
    /// Criterion for --strict (defaults to the matrix epsilon).
    #[arg(long)]
    pub max_distortion: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct TablesCmd {
    #[arg(long)]
    pub n: usize,
    /// `lo,hi` (defaults to the support `-sqrt(n),sqrt(n)`).
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct RefcheckCmd {
    #[arg(long, default_value_t = 10_000)]
    pub count: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    #[arg(long, default_value_t = 1e-12)]
    pub tolerance: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accept_scientific_notation() {
        assert_eq!(parse_count("1e9"), Ok(1_000_000_000));
        assert_eq!(parse_count("18446744073709551615"), Ok(u64::MAX));
        assert!(parse_count("1.5").is_err());
        assert!(parse_count("-3").is_err());
    }

    #[test]
    fn commands_round_trip_through_json() {
        let cli = Cli::try_parse_from(["permembed", "verify", "--matrix", "m", "--grid", "10"]).unwrap();
        let cmd = cli.command.unwrap();
        let back: Command = serde_json::from_value(serde_json::to_value(&cmd).unwrap()).unwrap();
        assert_eq!(format!("{cmd:?}"), format!("{back:?}"));
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
