use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid environment: {0}")]
    InvalidEnvironment(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("rewards are identical after canonicalization; no distinguishing environment exists")]
    NoDistinguisher,

    #[error("consistent set has empty interior (inscribed radius {radius:e})")]
    EmptyInterior { radius: f64 },

    #[error("linear program solver failure: {0}")]
    Solver(String),

    #[error("trajectories disagree at state {state}: actions {first} and {second}")]
    InconsistentTrajectories {
        state: usize,
        first: usize,
        second: usize,
    },

    #[error("cannot place {needed} rewarded cells on a grid with {cells} cells")]
    Placement { needed: usize, cells: usize },

    #[error("simulation {sim}: {source}")]
    Simulation {
        sim: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_simulation(self, sim: usize) -> Self {
        Error::Simulation {
            sim,
            source: Box::new(self),
        }
    }
}
