use thiserror::Error;

/// Errors raised by the model, the solvers and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown parameter `{0}`")]
    UnknownParameter(String),

    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: &'static str, reason: String },

    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("adjustment-cost curvature eps = 1 is not supported")]
    UnsupportedCurvature,

    #[error("non-positive surplus consumption for {agent}: C - chi*X = {surplus}")]
    UtilityDomain { agent: &'static str, surplus: f64 },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("{solver}: step damping floor reached at iteration {iteration} (residual {residual:e})")]
    DampingFloor {
        solver: &'static str,
        iteration: usize,
        residual: f64,
    },

    #[error("non-finite derivative in equation `{equation}`")]
    Singularity { equation: &'static str },

    #[error("Blanchard-Kahn condition violated: {stable} stable roots for {states} predetermined states")]
    BlanchardKahn { stable: usize, states: usize },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("stochastic steady state did not converge within {iterations} iterations")]
    Divergence { iterations: usize },

    #[error("simulated path left the model domain in period {period}: {source}")]
    Path {
        period: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("terminal condition violated: state gap {gap:e} exceeds tolerance (horizon too short?)")]
    TerminalCondition { gap: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Whether the error stems from the inputs rather than from a solver.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::UnknownPreset(_)
                | Error::UnknownParameter(_)
                | Error::Validation { .. }
                | Error::UnsupportedCurvature
                | Error::Config(_)
                | Error::Io(_)
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
