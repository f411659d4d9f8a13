//! Federated personalization simulator and white-box attribute inference
//! attack over per-client weight snapshots.

pub mod centroid;
pub mod eval;
pub mod experiment;
pub mod features;
pub mod format;
pub mod rng;
pub mod snapshot;
pub mod sim;
