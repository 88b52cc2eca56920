//! Conformal value adjustment and constrained auto-bidding simulation.
//!
//! The crate has three layers:
//!
//! - scalar-generic math (`conformal`, `mechanism`, `agents`, `oracle`,
//!   `metrics`, `ledger`), parameterized over [`Real`] (`f32` or `f64`);
//! - data plumbing (`data`): auction-log ingestion, pCVR binning, post-hoc
//!   true-CVR construction, seeded synthetic generation;
//! - orchestration (`runner`): end-to-end experiments behind a JSON config,
//!   fanning runs out over a thread pool and emitting CSV/JSON reports.

pub mod agents;
pub mod conformal;
pub mod data;
pub mod error;
pub mod ledger;
pub mod mechanism;
pub mod metrics;
pub mod oracle;
pub mod real;
pub mod runner;

pub use error::{Error, Result};
pub use real::Real;

/// Scalar type used by the data layer, the runner and the CLI.
pub type Scalar = f64;

/// Concrete aliases of the generic math types at the default scalar.
pub type CalibrationTable64 = conformal::CalibrationTable<Scalar>;
pub type AdjustmentCache64 = conformal::AdjustmentCache<Scalar>;
pub type DualState64 = agents::DualState<Scalar>;
pub type AuctionOutcome64 = mechanism::AuctionOutcome<Scalar>;
pub type RunLedger64 = ledger::RunLedger<Scalar>;
pub type OfflineInstance64 = oracle::OfflineInstance<Scalar>;
