//! `iwalk`: reproducible experiments on walks in intermittent environments.

mod output;
mod source;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use intermittent_walk::dynsys::{simulate_trajectories, Precision, TrajectoryConfig};
use intermittent_walk::environment::{diagnostics, EnvDiagnostics};
use intermittent_walk::limits::{clt_report, fit_limit_params, llt_report, slln_report, LimitParams};
use intermittent_walk::stats::total_variation;
use intermittent_walk::walk::{
    hitting_time_distribution, position_distributions, simulate_paths, ExactOptions, McConfig, Record, Sampler,
};
use intermittent_walk::{json, Environment, Error, ErrorKind};
use serde_json::json;

use output::{Artifacts, Csv, Num, OutputError};
use source::EnvArgs;

#[derive(Parser)]
#[command(
    name = "iwalk",
    version,
    about = "Walks in intermittent environments: exact laws, simulation and limit-theorem reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    env: EnvArgs,
    /// Seed for every random stream (environment sampling, paths, orbits).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, env = "IWALK_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExactArgs {
    /// Mass trimmed from each end of a distribution after every convolution.
    #[arg(long, default_value_t = ExactOptions::default().trunc_tol)]
    trunc_tol: f64,
    /// Largest accumulated deficit accepted.
    #[arg(long, default_value_t = ExactOptions::default().deficit_budget)]
    deficit_budget: f64,
}

impl ExactArgs {
    fn options(&self) -> ExactOptions {
        ExactOptions { trunc_tol: self.trunc_tol, deficit_budget: self.deficit_budget }
    }
}

#[derive(Args)]
struct LimitArgs {
    /// Rate exponent for the scaled residuals.
    #[arg(long, default_value_t = 0.0)]
    eta: f64,
    /// Use the family's analytic μ and σ² instead of fitted ones.
    #[arg(long)]
    strict: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplerArg {
    FullChain,
    SojournSum,
}

#[derive(Clone, Copy, ValueEnum)]
enum RecordArg {
    Endpoint,
    FullPath,
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    Double,
    Extended,
}

#[derive(Subcommand)]
enum Command {
    /// Write the environment file, per-site diagnostics and the M_n table.
    Env {
        #[command(flatten)]
        common: Common,
    },
    /// Exact laws of X_n (and optionally of a hitting time).
    Exact {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exact: ExactArgs,
        /// Times n, comma-separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Also write the law of T_x for this site.
        #[arg(long)]
        hitting: Option<usize>,
    },
    /// Monte Carlo paths of the walk.
    Mc {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        horizon: usize,
        #[arg(long, value_enum, default_value = "sojourn-sum")]
        sampler: SamplerArg,
        #[arg(long, value_enum, default_value = "endpoint")]
        record: RecordArg,
    },
    /// Orbits of the interval map against the exact law of X_n.
    Dynsys {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exact: ExactArgs,
        #[arg(long)]
        paths: usize,
        /// Number of iterations.
        #[arg(long)]
        n: usize,
        #[arg(long, value_enum, default_value = "extended")]
        precision: PrecisionArg,
    },
    /// Local-limit predictor against the exact law over a grid of n.
    Llt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exact: ExactArgs,
        #[command(flatten)]
        limit: LimitArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
    },
    /// Kolmogorov distances of the standardized X_n and T_x to N(0, 1).
    Clt {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        exact: ExactArgs,
        #[command(flatten)]
        limit: LimitArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        n_grid: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        x_grid: Vec<usize>,
    },
    /// X_n / n along simulated paths.
    Slln {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        limit: LimitArgs,
        #[arg(long)]
        paths: usize,
        #[arg(long)]
        horizon: usize,
        /// Number of equally spaced checkpoints.
        #[arg(long, default_value_t = 20)]
        checkpoints: usize,
        /// Deviation band around 1/μ.
        #[arg(long, default_value_t = 0.02)]
        tolerance: f64,
        /// Start of the tail window (default: half the horizon).
        #[arg(long)]
        tail_from: Option<usize>,
    },
}

#[derive(Debug, thiserror::Error)]
enum Failure {
    #[error(transparent)]
    Core(#[from] Error),
    #[error(transparent)]
    Output(#[from] OutputError),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Core(e) => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::NumericBudget => 3,
                ErrorKind::Io => 4,
            },
            Failure::Output(_) => 4,
        }
    }
}

fn require_seed(seed: Option<u64>) -> Result<u64, Error> {
    seed.ok_or_else(|| Error::InvalidParameter("this command is stochastic; pass --seed".into()))
}

fn env_and_diag(common: &Common) -> Result<(Environment, EnvDiagnostics), Error> {
    let env = common.env.load(common.seed)?;
    let diag = diagnostics(&env, &common.env.beta(&env)?, env.len())?;
    Ok((env, diag))
}

fn limit_params(env: &Environment, diag: &EnvDiagnostics, limit: &LimitArgs) -> Result<LimitParams, Error> {
    if limit.strict {
        LimitParams::analytic(env, limit.eta)
    } else {
        Ok(fit_limit_params(diag, limit.eta)?.params)
    }
}

fn cmd_env(common: &Common) -> Result<Artifacts, Error> {
    let (env, diag) = env_and_diag(common)?;
    let mut table = Csv::new(&["x", "A", "A_prime", "K", "m", "s2", "mu", "sigma2"]);
    for s in &diag.sites {
        let m = &s.moments;
        table.row(&[
            &s.x,
            &Num(s.a),
            &Num(s.a_prime),
            &Num(s.k),
            &Num(m.m),
            &Num(m.s2),
            &Num(diag.mu[s.x]),
            &Num(diag.sigma2[s.x]),
        ]);
    }
    let mut mn = Csv::new(&["n", "M_n"]);
    for (n, m) in diag.m_n.iter().enumerate() {
        mn.row(&[&n, m]);
    }
    let mut out = Artifacts::default();
    out.add("env.json", env.to_json()?);
    out.add("diagnostics.csv", table.finish());
    out.add("mn.csv", mn.finish());
    Ok(out)
}

fn cmd_exact(common: &Common, exact: &ExactArgs, ns: &[usize], hitting: Option<usize>) -> Result<Artifacts, Error> {
    let env = common.env.load(common.seed)?;
    let mut out = Artifacts::default();
    for law in position_distributions(&env, ns, exact.options())? {
        let mut csv = Csv::new(&["x", "prob", "deficit_bound"]);
        for x in 0..=law.dist.max_support() {
            csv.row(&[&x, &Num(law.dist.pmf(x)), &Num(law.bound(x))]);
        }
        out.add(format!("exact_n{}.csv", law.n), csv.finish());
    }
    if let Some(x) = hitting {
        let dist = hitting_time_distribution(&env, x, exact.options())?;
        let mut csv = Csv::new(&["n", "prob"]);
        for (n, p) in dist.atoms() {
            csv.row(&[&n, &Num(p)]);
        }
        out.add(format!("hitting_x{x}.csv"), csv.finish());
    }
    Ok(out)
}

fn cmd_mc(
    common: &Common,
    paths: usize,
    horizon: usize,
    sampler: SamplerArg,
    record: RecordArg,
) -> Result<Artifacts, Error> {
    let seed = require_seed(common.seed)?;
    let env = common.env.load(Some(seed))?;
    let cfg = McConfig {
        paths,
        horizon,
        seed,
        record: match record {
            RecordArg::Endpoint => Record::Endpoint,
            RecordArg::FullPath => Record::FullPath,
        },
        sampler: match sampler {
            SamplerArg::FullChain => Sampler::FullChain,
            SamplerArg::SojournSum => Sampler::SojournSum,
        },
    };
    let mc = simulate_paths(&env, &cfg)?;
    let mut out = Artifacts::default();
    let mut ends = Csv::new(&["path", "x", "y"]);
    for (i, s) in mc.endpoints.iter().enumerate() {
        ends.row(&[&i, &s.x, &s.y]);
    }
    out.add("mc_endpoints.csv", ends.finish());
    if !mc.paths.is_empty() {
        let mut full = Csv::new(&["path", "n", "x", "y"]);
        for (i, path) in mc.paths.iter().enumerate() {
            for (n, s) in path.iter().enumerate() {
                full.row(&[&i, &n, &s.x, &s.y]);
            }
        }
        out.add("mc_paths.csv", full.finish());
    }
    let summary = json!({ "config": cfg, "truncated_paths": mc.truncated_paths });
    out.add("mc_summary.json", json::to_string(&summary)?);
    Ok(out)
}

fn cmd_dynsys(
    common: &Common,
    exact: &ExactArgs,
    paths: usize,
    n: usize,
    precision: PrecisionArg,
) -> Result<Artifacts, Error> {
    let seed = require_seed(common.seed)?;
    let env = common.env.load(Some(seed))?;
    let precision = match precision {
        PrecisionArg::Double => Precision::Double,
        PrecisionArg::Extended => Precision::Extended,
    };
    let cfg = TrajectoryConfig { paths, horizon: n, seed, precision, times: vec![n] };
    let traj = simulate_trajectories(&env, &cfg)?;
    let law = position_distributions(&env, &[n], exact.options())?.remove(0);

    let mut out = Artifacts::default();
    let mut cells = Csv::new(&["n", "x", "count", "paths"]);
    for (x, c) in traj.cells[0].iter().enumerate().filter(|(_, c)| **c > 0) {
        cells.row(&[&n, &x, c, &paths]);
    }
    out.add("dynsys_cells.csv", cells.finish());
    let mut levels = Csv::new(&["n", "x", "y", "count", "paths"]);
    for ((x, y), c) in &traj.levels[0] {
        levels.row(&[&n, x, y, c, &paths]);
    }
    out.add("dynsys_levels.csv", levels.finish());

    let empirical = traj.cell_frequencies(0);
    let len = empirical.len().max(law.dist.max_support() + 1);
    let exact_dense = law.dense(len);
    let mut matched = Csv::new(&["x", "exact", "empirical"]);
    for (x, p) in exact_dense.iter().enumerate() {
        matched.row(&[&x, &Num(*p), &Num(empirical.get(x).copied().unwrap_or(0.0))]);
    }
    out.add("dynsys_exact.csv", matched.finish());
    let tv = total_variation(&empirical, &exact_dense);
    let summary = json!({
        "n": n,
        "paths": paths,
        "seed": seed,
        "tv": tv,
        "tolerance": 4.0 * (n as f64 / paths as f64).sqrt(),
        "exact_deficit": law.dist.deficit(),
        "flagged": traj.flagged,
    });
    out.add("dynsys_summary.json", json::to_string(&summary)?);
    Ok(out)
}

fn cmd_llt(common: &Common, exact: &ExactArgs, limit: &LimitArgs, grid: &[usize]) -> Result<Artifacts, Error> {
    let (env, diag) = env_and_diag(common)?;
    let params = limit_params(&env, &diag, limit)?;
    let mut out = Artifacts::default();
    let mut summary = Csv::new(&["n", "sup_err_scaled", "uncertainty_scaled", "predictor_mass"]);
    for &n in grid {
        let report = llt_report(&env, &params, &diag, n, exact.options())?;
        summary.row(&[&n, &Num(report.sup_err_scaled), &Num(report.uncertainty_scaled), &Num(report.predictor_mass)]);
        out.add(format!("llt_n{n}.json"), json::to_string(&report)?);
    }
    out.add("llt_summary.csv", summary.finish());
    Ok(out)
}

fn cmd_clt(
    common: &Common,
    exact: &ExactArgs,
    limit: &LimitArgs,
    n_grid: &[usize],
    x_grid: &[usize],
) -> Result<Artifacts, Error> {
    let (env, diag) = env_and_diag(common)?;
    let params = limit_params(&env, &diag, limit)?;
    let report = clt_report(&env, &params, &diag, n_grid, x_grid, exact.options())?;
    let mut out = Artifacts::default();
    out.add("clt.json", json::to_string(&report)?);
    Ok(out)
}

struct SllnArgs<'a> {
    limit: &'a LimitArgs,
    paths: usize,
    horizon: usize,
    checkpoints: usize,
    tolerance: f64,
    tail_from: Option<usize>,
}

fn cmd_slln(common: &Common, a: SllnArgs) -> Result<Artifacts, Error> {
    let seed = require_seed(common.seed)?;
    if a.checkpoints == 0 || a.horizon == 0 {
        return Err(Error::InvalidParameter("--checkpoints and --horizon must be positive".into()));
    }
    let (env, diag) = env_and_diag(common)?;
    let params = limit_params(&env, &diag, a.limit)?;
    let mut times: Vec<usize> = (1..=a.checkpoints).map(|i| (a.horizon * i / a.checkpoints).max(1)).collect();
    times.dedup();
    let cfg = McConfig {
        paths: a.paths,
        horizon: a.horizon,
        seed,
        record: Record::Checkpoints { times: times.clone() },
        sampler: Sampler::SojournSum,
    };
    let mc = simulate_paths(&env, &cfg)?;
    let report = slln_report(params.mu, &times, &mc, a.tail_from.unwrap_or(a.horizon / 2), a.tolerance)?;
    let mut out = Artifacts::default();
    out.add("slln.json", json::to_string(&report)?);
    Ok(out)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (common, artifacts) = match &cli.command {
        Command::Env { common } => (common, cmd_env(common)?),
        Command::Exact { common, exact, n, hitting } => (common, cmd_exact(common, exact, n, *hitting)?),
        Command::Mc { common, paths, horizon, sampler, record } => {
            (common, cmd_mc(common, *paths, *horizon, *sampler, *record)?)
        }
        Command::Dynsys { common, exact, paths, n, precision } => {
            (common, cmd_dynsys(common, exact, *paths, *n, *precision)?)
        }
        Command::Llt { common, exact, limit, n_grid } => (common, cmd_llt(common, exact, limit, n_grid)?),
        Command::Clt { common, exact, limit, n_grid, x_grid } => {
            (common, cmd_clt(common, exact, limit, n_grid, x_grid)?)
        }
        Command::Slln { common, limit, paths, horizon, checkpoints, tolerance, tail_from } => (
            common,
            cmd_slln(
                common,
                SllnArgs {
                    limit,
                    paths: *paths,
                    horizon: *horizon,
                    checkpoints: *checkpoints,
                    tolerance: *tolerance,
                    tail_from: *tail_from,
                },
            )?,
        ),
    };
    for path in artifacts.write(&common.out, common.force)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
