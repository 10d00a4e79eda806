use thiserror::Error;

/// Broad failure classes, used by the command-line harness to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    NumericBudget,
    Io,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid tail sequence: {0}")]
    InvalidTailSequence(String),

    #[error("root finder did not converge for c_{index}{}: {detail}", site_suffix(*.site))]
    RootFinding { site: Option<usize>, index: usize, detail: String },

    #[error("site {site} is outside the materialized environment ({available} sites)")]
    SiteOutOfRange { site: usize, available: usize },

    #[error(
        "truncation deficit {deficit:.3e} exceeds the budget {budget:.3e}; \
         raise N_cap, lower tail_tol, or loosen the deficit budget"
    )]
    DeficitBudget { deficit: f64, budget: f64 },

    #[error("state {value} at site {site} fell below the stored tail (deficit region); raise N_cap")]
    DeficitRegion { site: usize, value: f64 },

    #[error("variance did not converge: {0}")]
    NotConverged(String),

    #[error("degenerate distribution: {0}")]
    ZeroVariance(String),

    #[error("sampled parameter out of declared range: {0}")]
    ParameterOutOfRange(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

fn site_suffix(site: Option<usize>) -> String {
    site.map(|s| format!(" at site {s}")).unwrap_or_default()
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::DeficitBudget { .. } | Error::DeficitRegion { .. } | Error::RootFinding { .. } => {
                ErrorKind::NumericBudget
            }
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
