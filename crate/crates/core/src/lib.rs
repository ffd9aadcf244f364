//! Optimal investment for a defined-contribution pension fund with
//! jump-diffusion stock and inflation, and a salary driven by a Heston-type
//! variance with jumps and common shocks.
//!
//! The fund minimises a quadratic loss around wealth targets at retirement
//! and at death. The value function is quadratic in real wealth and real
//! salary, and the optimal stock holding is an affine feedback rule.
//!
//! ```
//! use dcpension::{ModelParams, State, ValueFunction};
//!
//! let params = ModelParams::baseline().validate()?;
//! let vf = ValueFunction::new(params)?;
//! let state = State::initial(vf.params());
//! let value = vf.value(&state)?;
//! let policy = vf.optimal_policy(&state)?;
//! assert!(value > 0.0);
//! assert!(policy.weight.is_some());
//! # Ok::<(), dcpension::Error>(())
//! ```
//!
//! * [`model`]: parameters, validation and derived constants.
//! * [`closedform`]: the value function, its coefficients and the policy.
//! * [`montecarlo`]: path simulation and objective estimation.
//! * [`verify`]: ODE oracles, HJB residuals and simulation consistency.

pub mod closedform;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod quad;
pub mod verify;

pub use closedform::{OptimalPolicy, ValueDecomposition, ValueFunction};
pub use error::{Error, Result};
pub use model::{DerivedCoeffs, ModelParams, State, ValidatedParams, ValidationError};
pub use montecarlo::{estimate_objective, Mode, ObjectiveEstimate, PolicySpec, SimConfig};
pub use verify::ResidualReport;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/value-function.md")]
    mod value_function {}
    #[doc = include_str!("../../../book/src/policy.md")]
    mod policy {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
