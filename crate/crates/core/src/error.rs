use thiserror::Error;

use crate::model::{State, ValidationError};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),

    #[error("failed to parse parameters: {0}")]
    Json(#[from] serde_json::Error),

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid state {state:?} for horizon {horizon}")]
    InvalidState { state: State, horizon: f64 },

    #[error("time {t} lies after the outer integration time {tau}")]
    TimeOrder { t: f64, tau: f64 },

    #[error("Riccati exponent explodes at backward time {at}; phi3 is undefined over this horizon")]
    RiccatiExplosion { at: f64 },

    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol:e} (error estimate {estimate:e})")]
    Quadrature {
        a: f64,
        b: f64,
        tol: f64,
        estimate: f64,
    },

    #[error("ODE integration failed at s = {at}: {reason}")]
    Integrator { at: f64, reason: String },

    #[error("policy weight is singular at x_bar = {x_bar:e}; use the amount form")]
    SingularWeight { x_bar: f64 },

    #[error("invalid simulation configuration: {0}")]
    SimConfig(String),

    #[error("{aborted} of {n_paths} paths aborted (first: {first})")]
    TooManyAborts {
        aborted: usize,
        n_paths: usize,
        first: String,
    },
}
