//! Identity testing and KL estimation for distributions on `Q^n` under
//! conditional sampling oracles.
//!
//! Hidden distributions sit behind an [`OracleHandle`]; visible ones are
//! [`ModelSpec`]s. [`at_tester`] holds the coordinate-oracle tester,
//! [`subcube`] the subcube-oracle tester and KL estimator, [`testers`] the
//! finite-domain building blocks, and [`adversaries`] the lower-bound families.

pub mod adversaries;
pub mod at_tester;
pub mod calibration;
pub mod constants;
pub mod error;
pub mod harness;
pub mod models;
pub mod numerics;
pub mod oracles;
pub mod rng;
pub mod subcube;
pub mod testers;

pub use adversaries::{MatchedIsingSpec, SubcubeBadSpec};
pub use error::{Error, Result};
pub use models::{BalanceProfile, Configuration, ModelFile, ModelSpec, Pinning};
pub use oracles::{Backend, OracleHandle, OracleMode, QueryCounts};
pub use testers::{SmallDistribution, Verdict};
