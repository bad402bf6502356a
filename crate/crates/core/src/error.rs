use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("no sign change on [{lo}, {hi}] (f(lo) = {f_lo}, f(hi) = {f_hi})")]
    Bracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("matrix is rank deficient (|r_jj| = {pivot:e} at column {column})")]
    Rank { column: usize, pivot: f64 },

    #[error("matrix error: {0}")]
    Matrix(String),

    #[error("iteration did not converge: {0}")]
    Convergence(String),

    #[error("could not calibrate b: no root of the slope equation below b = {b_max}")]
    Calibration { b_max: f64 },

    #[error("state evolution fixed point not found after {} iterations", trajectory.len())]
    FixedPoint { trajectory: Vec<f64> },

    #[error("solver failed: {0}")]
    Solver(String),

    #[error("Fisher information is undefined: {0}")]
    UndefinedFisher(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cannot parse {what} from {input:?}: {reason}")]
    Parse {
        what: &'static str,
        input: String,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(what: &'static str, input: &str, reason: impl Into<String>) -> Self {
        Error::Parse {
            what,
            input: input.to_string(),
            reason: reason.into(),
        }
    }
}
