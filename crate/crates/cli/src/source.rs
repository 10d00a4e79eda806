//! Building or loading the environment a command runs on.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use intermittent_walk::environment::{Beta, LsvParams, SiteGenerator};
use intermittent_walk::random_env::{sample_environment, ParamSampler, RandomEnvModel};
use intermittent_walk::{Environment, Error, Result, Truncation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Geometric,
    PowerLaw,
    Lsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RandomModel {
    IidPowerlaw,
    IidGeometric,
    IidLsv,
    /// Power-law exponents driven by an m-dependent sequence.
    MdepPowerlaw,
}

#[derive(Debug, Clone, Args)]
pub struct EnvArgs {
    /// Environment file written by `iwalk env`.
    #[arg(long, conflicts_with_all = ["family", "random"])]
    pub env_file: Option<PathBuf>,
    /// Build every site from one family.
    #[arg(long, conflicts_with = "random")]
    pub family: Option<Family>,
    /// Sample sites from a random model (needs --seed).
    #[arg(long, requires = "seed")]
    pub random: Option<RandomModel>,
    /// Geometric ratio.
    #[arg(long)]
    pub r: Option<f64>,
    /// Power-law exponent.
    #[arg(long)]
    pub beta: Option<f64>,
    /// LSV exponent.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// LSV branch point (κ is solved for).
    #[arg(long, conflicts_with = "kappa")]
    pub c: Option<f64>,
    /// LSV coefficient (c is solved for).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Range of sampled power-law exponents.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [2.5, 4.0])]
    pub beta_range: Vec<f64>,
    /// Range of sampled geometric ratios.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.3, 0.7])]
    pub r_range: Vec<f64>,
    /// Range of sampled LSV exponents.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.1, 0.4])]
    pub alpha_range: Vec<f64>,
    /// Range of sampled LSV branch points.
    #[arg(long, value_delimiter = ',', num_args = 2, default_values_t = [0.3, 0.7])]
    pub c_range: Vec<f64>,
    /// Dependence window of the m-dependent model.
    #[arg(long, default_value_t = 2)]
    pub window: usize,
    /// Number of sites to materialize.
    #[arg(long, default_value_t = 100)]
    pub xmax: usize,
    /// Largest stored tail index.
    #[arg(long, default_value_t = Truncation::default().n_cap)]
    pub n_cap: usize,
    /// Stop storing a tail once it drops to this value.
    #[arg(long, default_value_t = Truncation::default().tail_tol)]
    pub tail_tol: f64,
    /// Exponent β(x) used by the diagnostics for sites without a natural one
    /// (geometric tails decay faster than any power, so any β > 1 is valid).
    #[arg(long)]
    pub diag_beta: Option<f64>,
}

const GEOMETRIC_DIAG_BETA: f64 = 3.0;

fn need(value: Option<f64>, flag: &str) -> Result<f64> {
    value.ok_or_else(|| Error::InvalidParameter(format!("--{flag} is required for this family")))
}

fn pair(v: &[f64]) -> (f64, f64) {
    (v[0], v[1])
}

impl EnvArgs {
    pub fn load(&self, seed: Option<u64>) -> Result<Environment> {
        if let Some(path) = &self.env_file {
            return Environment::load(path);
        }
        let trunc = Truncation::new(self.n_cap, self.tail_tol)?;
        if self.xmax == 0 {
            return Err(Error::InvalidParameter("--xmax must be positive".into()));
        }
        if let Some(model) = self.random {
            let seed = seed.ok_or_else(|| Error::InvalidParameter("--random needs --seed".into()))?;
            let (b_lo, b_hi) = pair(&self.beta_range);
            let sampler = match model {
                RandomModel::IidPowerlaw | RandomModel::MdepPowerlaw => {
                    ParamSampler::PowerLawRange { lo: b_lo, hi: b_hi }
                }
                RandomModel::IidGeometric => {
                    let (lo, hi) = pair(&self.r_range);
                    ParamSampler::GeometricRange { lo, hi }
                }
                RandomModel::IidLsv => {
                    let ((alpha_lo, alpha_hi), (c_lo, c_hi)) = (pair(&self.alpha_range), pair(&self.c_range));
                    ParamSampler::LsvRange { alpha_lo, alpha_hi, c_lo, c_hi }
                }
            };
            let model = match model {
                RandomModel::MdepPowerlaw => RandomEnvModel::m_dependent(sampler, self.window, seed),
                _ => RandomEnvModel::iid(sampler, seed),
            };
            return Ok(sample_environment(&model, self.xmax, trunc)?.environment);
        }
        match self.family {
            Some(Family::Geometric) => Environment::geometric(need(self.r, "r")?, self.xmax, trunc),
            Some(Family::PowerLaw) => Environment::power_law(need(self.beta, "beta")?, self.xmax, trunc),
            Some(Family::Lsv) => {
                let alpha = need(self.alpha, "alpha")?;
                let params = match (self.c, self.kappa) {
                    (Some(c), _) => LsvParams::from_alpha_c(alpha, c)?,
                    (None, Some(k)) => LsvParams::from_alpha_kappa(alpha, k)?,
                    (None, None) => return Err(Error::InvalidParameter("--family lsv needs --c or --kappa".into())),
                };
                Environment::from_lsv(&vec![params; self.xmax], trunc)
            }
            None => Err(Error::InvalidParameter("choose an environment with --env-file, --family or --random".into())),
        }
    }

    /// `β(x)` for the diagnostics: the family exponent where there is one,
    /// otherwise `--diag-beta` (defaulting to 3 for geometric sites).
    pub fn beta(&self, env: &Environment) -> Result<Beta> {
        if let Some(b) = self.diag_beta {
            return Ok(Beta::Constant(b));
        }
        env.sites()
            .enumerate()
            .map(|(x, s)| match s.generator() {
                SiteGenerator::PowerLaw { beta } => Ok(beta),
                SiteGenerator::Lsv { alpha, .. } => Ok(1.0 / alpha),
                SiteGenerator::Geometric { .. } => Ok(GEOMETRIC_DIAG_BETA),
                SiteGenerator::Explicit => {
                    Err(Error::InvalidParameter(format!("site {x} has an explicit tail; pass --diag-beta")))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Beta::PerSite)
    }
}
