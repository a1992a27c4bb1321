//! Infrastructure-defect monitoring pipeline: screen camera frames with a
//! vision-language backend, dispatch object detectors for the defect
//! families the screener flags, and emit schema-validated maintenance
//! plans, plus the evaluation harness that scores the whole loop.

pub mod backends;
pub mod canonical;
pub mod detection;
pub mod domain;
pub mod error;
pub mod eval;
pub mod metrics;
pub mod pipeline;
pub mod planning;
pub mod schema;
pub mod screening;

pub use error::{Error, Result};
