use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("probability {0} is outside [0, 1]")]
    InvalidProbability(f64),
    #[error("KL-UCB index needs at least one pull")]
    ZeroPulls,
    #[error("{successes} successes recorded for only {pulls} pulls")]
    InconsistentCounts { successes: u64, pulls: u64 },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),
    #[error("environment is not unimodal: {0}")]
    NotUnimodal(String),
    #[error(
        "no connected Erdos-Renyi graph with K={num_arms}, p={edge_prob} after {attempts} draws"
    )]
    ConnectivityAbort {
        num_arms: usize,
        edge_prob: f64,
        attempts: u64,
    },
    #[error("arm {arm} out of range for {num_arms} arms")]
    ArmOutOfRange { arm: usize, num_arms: usize },
    #[error("reward {0} is not Bernoulli (expected 0 or 1)")]
    InvalidReward(u32),
    #[error("horizon must be at least 1")]
    ZeroHorizon,
    #[error("an ensemble needs at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("summaries are not comparable: {0}")]
    MismatchedSummaries(String),
    #[error("regret ratio denominator has non-positive mean {0}")]
    NonPositiveDenominator(f64),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
