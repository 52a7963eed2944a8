use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error in {function}: {detail}")]
    Domain {
        function: &'static str,
        detail: String,
    },

    #[error("branch point: z = {z} coincides with threshold n^2 = {threshold}")]
    BranchPoint { z: String, threshold: f64 },

    #[error("invalid parameter `{name}`: {detail}")]
    InvalidParameter { name: &'static str, detail: String },

    #[error("invalid surface: {0}")]
    InvalidSurface(String),

    #[error("coincident points passed to the layer kernel")]
    Coincident,

    #[error("pole collision: |Gamma_{n}(z)| = {magnitude:e} below 1e-10")]
    PoleCollision { n: u32, magnitude: f64 },

    #[error("ill-conditioned linear system ({what}): condition estimate {condition:e}")]
    IllConditioned { what: &'static str, condition: f64 },

    #[error(
        "root finder did not converge after {iterations} iterations (last |f| = {residual:e})"
    )]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("threshold collision: eigenvalue {value} lies within 1e-8 of k^2 = {threshold}")]
    ThresholdCollision { value: f64, threshold: f64 },

    #[error("rejected root: {0}")]
    RejectedRoot(String),

    #[error("fit error: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, Error>;
