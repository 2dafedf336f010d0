//! Continuous-time transfer function identification from sampled data with
//! the SRIVC and SRIVC-c instrumental variable estimators.

pub mod diagnostics;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod lti;
pub mod polynomial;
pub mod signals;

pub use error::{Error, Result};
