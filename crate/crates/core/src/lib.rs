//! Outage analysis of underlay cognitive amplify-and-forward relaying with
//! best-relay selection and maximal ratio combining of the direct link.
//!
//! Three independent engines compute the secondary outage probability:
//! [`closed_form`] evaluates the finite incomplete-gamma reduction,
//! [`quad_oracle`] integrates the conditional outage numerically, and
//! [`mc_sim`] simulates Rayleigh fading directly.

pub mod cli;
pub mod closed_form;
pub mod mc_sim;
pub mod quad_oracle;
pub mod quadrature;
pub mod scenario;
pub mod specfun;
pub mod sweep;
pub mod validate;
