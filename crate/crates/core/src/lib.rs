//! Push-notification ranking lab.
//!
//! A small, fully reproducible environment for comparing ranking losses when
//! only the single top-ranked candidate of every candidate set is ever shown
//! to a user:
//!
//! - [`scorer`]: dense MLP scoring function with hand-written backpropagation.
//! - [`losses`]: pointwise (cross-entropy, L2), pairwise hinge, K-OS-AUC and
//!   expected-regret losses, all with gradients w.r.t. scores.
//! - [`stats`]: seeded samplers, empirical CDFs and Beta maximum likelihood.
//! - [`simulator`]: user/candidate-set simulation, exact latent regret and
//!   logged-data generation (uniform or epsilon-greedy).
//! - [`trainer`]: pseudo-candidate sets, Adam / momentum SGD and mini-batch
//!   training with early stopping.
//! - [`experiment`]: multi-seed orchestration and report emission.

pub mod config;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod report;
pub mod scorer;
pub mod simulator;
pub mod stats;
pub mod trainer;

pub use error::{Error, Result};

/// Number of user types in the simulated population.
pub const N_USER_TYPES: usize = 7;
/// Length of a document feature vector.
pub const N_FEATURES: usize = 5;
/// Scorer input width: user-type one-hot followed by document features.
pub const INPUT_DIM: usize = N_USER_TYPES + N_FEATURES;
