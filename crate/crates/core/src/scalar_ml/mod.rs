//! Scalar Mittag-Leffler function, reciprocal gamma and the L1 Caputo
//! quadrature used to check trajectories against their differential equation.

mod caputo;
mod gamma;
mod series;

pub use caputo::caputo_l1;
pub use gamma::{ln_abs_gamma, recip_gamma};
pub use series::{ml_deriv, ml_eval, EvalMethod, EvalResult, MittagLeffler, MlParams, MAX_TERMS, Z_MAX};
