//! First-passage statistics of geometric Brownian motion with stochastic
//! resetting (srGBM), applied to income mobility.
//!
//! - [`analytics`]: closed-form MFPT, moments, stationary law, optimal resetting rate.
//! - [`simulator`]: reproducible Monte Carlo of the discretized process.
//! - [`mobility`]: quantile transition matrices and their first-passage times.
//! - [`estimation`]: year-by-year parameter fitting and time-resolved reports.
//! - [`io`]: CSV and JSON formats with provenance headers.

pub mod analytics;
pub mod error;
pub mod estimation;
pub mod io;
pub mod mobility;
pub mod optimize;
pub mod params;
pub mod rng;
pub mod simulator;

pub use analytics::{
    exponent_q1, exponent_q2, fpt_mgf_reset_free, fpt_moment, mfpt, optimal_resetting_rate,
    stationary_density, survival_laplace_reset, tail_alpha, OptimalRate, StationaryLaw,
};
pub use error::{Error, ErrorCategory, Result};
pub use mobility::{
    embedded_chain, generator_matrix, quantile_assign, stationary_distribution, tmfpt,
    tmfpt_continuous, transition_matrix, GeneratorMatrix, GeneratorVariant, MfptMatrix,
    TransitionMatrix,
};
pub use params::{FptQuery, SrgbmParams};
pub use simulator::{
    estimate_mfpt_mc, fraction_reaching, generate_panel, sample_fpt, stationary_histogram,
    step_ensemble, Ensemble, FptSampleSet, FractionEstimate, Histogram, IncomePanel,
    MfptEstimate, SimConfig, Snapshot,
};
