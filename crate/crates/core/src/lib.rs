//! Many-sample tests for the dimension of the linear span of `q` population
//! covariance matrices.
//!
//! The crate is organized around the pipeline of the test:
//!
//! - [`space`]: the inner-product space of symmetric matrices, Gram matrices
//!   and their averaged principal minors `M^(k)`.
//! - [`estimators`]: per-group sample covariances, the fourth-moment
//!   estimator `η̂₄` and the bias-corrected sample Gram matrix `Ĝ`.
//! - [`dimtest`]: the standardized statistic, p-values and sequential
//!   dimension estimation.
//! - [`power`]: population-level power analysis under the outlier alternative.
//! - [`simulate`]: scenario construction and the Monte-Carlo harness.
//! - [`kron`]: Kronecker-sum covariance approximation through the
//!   rearrangement operator.
//! - [`cli`]: configuration, data ingestion and reports for the `covdim` binary.
//!
//! ```
//! use covdim::space::{gram, m_pop, SymMatrix};
//!
//! let p = 10;
//! let a = SymMatrix::identity(p);
//! let b = SymMatrix::band_indicator(p, 1);
//! let mats = vec![a.clone(), b.clone(), &a + &b];
//! // three matrices spanning a plane
//! assert!(m_pop(&mats, 2).unwrap() > 0.0);
//! assert!(m_pop(&mats, 3).unwrap().abs() < 1e-12);
//! # let _ = gram(&mats).unwrap();
//! ```

pub mod cli;
pub mod dimtest;
pub mod error;
pub mod estimators;
pub mod kron;
pub mod linalg;
pub mod normal;
pub mod power;
pub mod simulate;
pub mod space;

pub use error::{Error, Result};
