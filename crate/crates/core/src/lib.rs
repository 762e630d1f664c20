//! Two-agent real business cycle model with a greenhouse-gas externality:
//! calibration, steady states, second-order perturbation, pruned simulation,
//! validation oracles and the experiment harness.

extern crate lapack_src;
extern crate openblas_src;

pub mod calibration;
pub mod dual;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod perturbation;
pub mod reference;
pub mod simulate;
pub mod steady_state;
pub mod validation;

pub use calibration::{build_calibration, Calibration};
pub use error::{Error, Result};
pub use model::{Model, Scenario, Var};
