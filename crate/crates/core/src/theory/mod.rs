//! Empirical verifiers for the guarantees PURGE comes with: geometric
//! leakage suppression (with and without base-policy mixing), the Pinsker
//! utility bound, Hoeffding control of the retain/test proxies, and the
//! regret of unlearning relative to retraining from scratch.
//!
//! Every verifier compares a Monte Carlo measurement against a closed-form
//! bound with a statistical slack of three standard errors.

mod bounds;
mod coverage;
mod kl;
mod leakage;
mod regret;

pub use bounds::{
    hoeffding_bound, pinsker_bound, suppression_bound, verify_pinsker, verify_suppression,
    BoundCheck, BoundReport, SuppressionInputs,
};
pub use coverage::{bounded_loss, sample_population, verify_proxy_coverage, CoverageConfig, CoverageReport};
pub use kl::{categorical_kl, measure_policy_kl, KlConfig, KlEstimate};
pub use leakage::{estimate_leakage, LeakageConfig, LeakageEstimate, LeakageSeries, Mixture, Sampler};
pub use regret::{fit_loglog, regret_vs_retrain, RegretConfig, RegretReport, RetrainConfig};
