use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("tilted series overflowed at n={n}, theta={theta}")]
    Overflow { n: usize, theta: f64 },

    #[error("truncated series lost {residual:e} of its mass (limit {limit:e})")]
    TruncationOverflow { residual: f64, limit: f64 },

    #[error("vertex {0} is not in the cluster")]
    NotInCluster(String),

    #[error("no branch from the source reaches the target set")]
    UnreachableTarget,

    #[error("killed Laplacian is singular: the domain has no absorbing boundary")]
    SingularSystem,

    #[error("heat kernel needs {needed} uniformization steps, cap is {cap}")]
    ToleranceUnachievable { needed: usize, cap: usize },

    #[error("time {t} lies outside the trajectory horizon {horizon}")]
    OutOfHorizon { t: f64, horizon: f64 },

    #[error(
        "radius {radius} too small at t={t}: escape correction {correction:e} exceeds \
         {fraction} of the killed value {killed:e}; raise the radius policy factor"
    )]
    RadiusTooSmall {
        radius: u32,
        t: f64,
        killed: f64,
        correction: f64,
        fraction: f64,
    },

    #[error("only {accepted} of {requested} conditioned pairs accepted after {attempts} draws")]
    InsufficientPairs {
        accepted: usize,
        requested: usize,
        attempts: u64,
    },

    #[error("no goodness level up to the cap {cap} qualifies for point {index}")]
    UnboundedTheta { index: usize, cap: u32 },

    #[error("ball radius {radius} exceeds the exploration limit {limit}")]
    ExplorationLimit { radius: u64, limit: u64 },

    #[error("invalid configuration: {field}: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }
}
