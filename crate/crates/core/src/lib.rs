//! Exact Bayes-optimal analysis of out-of-distribution (OOD) detection on
//! finite input domains.
//!
//! The crate is organised bottom-up:
//!
//! - [`dist`]: finite scenarios (labeled in-distribution, out-distribution,
//!   prior) and the exact posterior quantities derived from them.
//! - [`scores`]: scoring functions (`s1`, `s2`, `s3`, energy, MSP, likelihood
//!   ratio), monotone transforms and the rank-equivalence test.
//! - [`metrics`]: AUC and FPR at a fixed TPR, both on samples and as exact
//!   population quantities, plus the method × out-distribution report table.
//! - [`oracle`]: closed-form Bayes-optimal predictions of each training
//!   objective, and the coin scenario where `s3` provably fails.
//! - [`train`]: exact expected losses with analytic gradients, a tabular
//!   minimiser, a shared-trunk MLP and a finite-difference gradient checker.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix the scalar to `f64`, which is what the experiment
//! runner uses.

pub mod dist;
pub mod error;
pub mod metrics;
pub mod oracle;
pub mod scalar;
pub mod scores;
pub mod train;

pub use error::{OodError, Result};
pub use scalar::Scalar;

pub type FiniteDistribution64 = dist::FiniteDistribution<f64>;
pub type LabeledInDistribution64 = dist::LabeledInDistribution<f64>;
pub type Scenario64 = dist::OodScenario<f64>;
pub type ScoreVector64 = scores::ScoreVector<f64>;
pub type PredictiveTable64 = oracle::PredictiveTable<f64>;
pub type EnergyMargins64 = oracle::EnergyMargins<f64>;
pub type MetricReport64 = metrics::MetricReport<f64>;
pub type LossSpec64 = train::LossSpec<f64>;
pub type TabularLogits64 = train::TabularLogits<f64>;
pub type SharedMlp64 = train::SharedMlp<f64>;

pub type Scenario32 = dist::OodScenario<f32>;
pub type ScoreVector32 = scores::ScoreVector<f32>;
