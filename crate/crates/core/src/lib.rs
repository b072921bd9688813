pub mod calibration;
pub mod charfn;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod montecarlo;
pub mod operators;
pub mod pricing;
pub mod quadrature;
pub mod specfun;
pub mod validation;

pub use error::{Error, Result};
