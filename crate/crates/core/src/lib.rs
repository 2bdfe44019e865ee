// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Group sparse least squares with ℓ_{p,q} regularization: a proximal
//! gradient solver with closed-form group thresholding, recovery-bound
//! calculators and a simulation harness.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod model;
pub mod prox;
pub mod simlab;
pub mod solver;

pub use error::{Error, Result};
pub use linalg::{DenseMatrix, DenseVector};
pub use model::{GroupPartition, GroupSupport, Penalty, Problem, ProxKind, Regularizer};
