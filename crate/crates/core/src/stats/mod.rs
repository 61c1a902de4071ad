//! Distribution machinery: seeded RNG streams, samplers, empirical CDFs and
//! Beta maximum-likelihood fitting.

mod beta;
mod ecdf;
mod rng;
mod sampling;
pub mod special;

pub use beta::{beta_log_likelihood, beta_method_of_moments, fit_beta_mle, BetaParams};
pub use ecdf::EmpiricalCdf;
pub use rng::{SeededRng, RNG_ALGORITHM};
pub use sampling::{
    sample_bernoulli, sample_beta, sample_categorical, sample_gaussian, validate_simplex,
};
