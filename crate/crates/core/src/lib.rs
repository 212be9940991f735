//! Differentially private estimation of several quantiles at once.
//!
//! The JointExp and inverse-sensitivity mechanisms are exponential
//! mechanisms over sorted quantile vectors, sampled exactly by a dynamic
//! program over data gaps. HSJointExp adds exchangeable noise to the data
//! before running JointExp, which repairs its behaviour on atomic data.
//!
//! All randomness flows through caller-provided generators. Tests use a
//! seeded ChaCha generator; a deployment should draw seeds from the OS.

pub mod audit;
pub mod domain;
pub mod error;
pub mod exec;
pub mod harness;
pub mod mechanisms;
pub mod oracles;
pub mod sampler;
pub mod stats;
pub mod utility;

pub use domain::{
    empirical_quantiles, hamming_distance, validate, Bounds, Dataset, PrivacyBudget,
    QuantileEstimate, QuantileSpec, RngSeed,
};
pub use error::{Error, Result, SpecViolation};
pub use exec::Execution;
pub use mechanisms::{Mechanism, NoiseConfig, NoiseFamily};
pub use sampler::{BlockSampler, MechanismFlavor};
