//! Bayesian model selection for RC-pair equivalent-circuit battery
//! impedance models.
//!
//! The library estimates the log model evidence (mean and variance) by
//! batch Bayesian quadrature over a four-layer warped Gaussian-process
//! surrogate with kernel recombination, and compares it against the
//! classical criteria (RMSE, BIC, ELPD) and identifiability diagnostics
//! (SNR, Jensen-Shannon divergence).

pub mod bayes;
pub mod criteria;
pub mod dataset;
pub mod ecm;
pub mod engine;
pub mod error;
pub mod ess;
pub mod gp;
pub mod identifiability;
pub mod montecarlo;
pub mod opt;
pub mod recombination;
pub mod warp;

pub use bayes::{log_likelihood, log_posterior_unnorm, GaussianPrior, ResidualMode, Theta};
pub use dataset::{generate, log_equispaced_grid, preset, Dataset, NoiseSpec, Preset};
pub use ecm::{impedance, to_physical, EcmParams, FrequencyStandardization};
pub use engine::{run, BasqConfig, BasqResult, EvidenceEstimate};
pub use error::{Error, Result};
