use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Inconsistent sizes, out-of-range parameters, malformed scenario files.
    #[error("configuration error: {0}")]
    Config(String),

    /// A mathematical precondition is violated (e.g. a negative Sobolev index).
    #[error("domain error: {0}")]
    Domain(String),

    /// Non-finite values appeared during time stepping.
    #[error("blow-up at t = {t}: {detail}")]
    BlowUp { t: f64, detail: String },

    /// A spectral window did not contain exactly two periodic eigenvalues.
    #[error("resolution error in window n = {n}: {detail}")]
    Resolution { n: i64, detail: String },

    /// A square-root branch was requested on its cut.
    #[error("branch error: {0}")]
    Branch(String),

    /// A contour is not isolated from the rest of the periodic spectrum.
    #[error("contour geometry error for m = {m}: {detail}")]
    Geometry { m: i64, detail: String },

    /// Newton iteration failed to converge.
    #[error(
        "solver error for n = {n} after {iterations} iterations (max residual {max_residual:.3e})"
    )]
    Solver {
        n: i64,
        iterations: usize,
        max_residual: f64,
    },

    /// An invariant that should hold by construction was violated.
    #[error("internal error: {0}")]
    Internal(String),

    /// A pipeline stage failed; wraps the stage name around the cause.
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
