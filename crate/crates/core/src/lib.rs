//! Fuzzy regression discontinuity estimation: local polynomial boundary
//! fits, the lambda-class estimators, inference, bandwidth rules, a seeded
//! Monte Carlo lab, theory checks, and CSV/JSON plumbing.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod dataio;
pub mod error;
pub mod estimators;
pub mod inference;
pub mod kernels;
pub mod linalg;
pub mod localpoly;
pub mod output;
pub mod simlab;
pub mod stats;
pub mod theorycheck;

pub use bandwidth::BandwidthRule;
pub use error::{FrdError, Result};
pub use estimators::{fit, EstimatorSpec, FitSpec, LambdaFit, LambdaRule};
pub use inference::{CiSpec, CritLaw, VarianceFlavor, VarianceSpec};
pub use kernels::KernelKind;
pub use localpoly::{frd_standard, Sample};
