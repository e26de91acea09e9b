//! Gaussian-process approximations for autocorrelated regression data,
//! built on round-robin data thinning.
//!
//! The main entry points are [`pipeline`] for end-to-end fits on a
//! [`Dataset`], [`vecchia`] for the thinned scaled-Vecchia model,
//! [`blockmodels`] for the block ensemble and local-GP strategies, and
//! [`bench`] for the robot-arm simulator and experiment protocols.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blockmodels;
pub mod conditioning;
pub mod dataset;
pub mod error;
pub mod exact;
pub mod kernels;
pub mod optim;
pub mod persist;
pub mod pipeline;
pub mod prediction;
pub mod seed;
pub mod temporal;
pub mod thinning;
pub mod vecchia;

pub use dataset::{load_csv, load_test_csv, standardize, CsvSchema, Dataset, Standardization};
pub use error::{Error, ErrorKind, Result};
pub use kernels::{Hyperparameters, KernelFamily, KernelSpec};
pub use prediction::PredictionResult;
pub use thinning::{partition, select_thinning_number, BlockPartition};
