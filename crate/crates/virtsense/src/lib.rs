//! Virtual-sensor identification and emulation.
//!
//! The crate clusters correlated sensors by fusing block-wise K-Means
//! solutions with an ant-colony search, selects one representative sensor
//! per cluster, and trains regressors that emulate the remaining sensors
//! from the representatives.
//!
//! Pipeline stages, each its own module:
//!
//! - [`dataset`] — CSV ingestion, cleaning, min-max normalization,
//!   block partitioning, train/test splitting
//! - [`synthgen`] — synthetic datasets with planted cluster structure via
//!   a designed correlation matrix and Cholesky sampling
//! - [`pca`] — covariance spectrum and the minimum representative-sensor
//!   count estimate
//! - [`kmeans`] — Lloyd iterations with k-means++ seeding over
//!   sensors-as-points blocks
//! - [`fac2t`] — pheromone-guided fusion of block clusterings into one
//!   global solution
//! - [`repsel`] — correlation-quality scoring and representative selection
//! - [`regress`] — linear-basis-function, MLP, and support-vector
//!   regressors, all self-contained
//! - [`pipeline`] — end-to-end orchestration, experiments, and reports

pub mod dataset;
pub mod error;
pub mod fac2t;
pub mod kmeans;
mod linalg;
pub mod pca;
pub mod pipeline;
pub mod regress;
pub mod repsel;
pub mod seeds;
pub mod synthgen;

pub use error::{Error, Result};
