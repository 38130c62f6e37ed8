//! Finite-statistics security analysis for decoy-state quantum key
//! distribution with weak laser pulses.
//!
//! The crate simulates a four-laser decoy-state protocol, builds rigorous
//! confidence-bounded constraints on the photon-number yields, minimizes the
//! single-photon yield over the resulting convex polytope, and derives lower
//! bounds on single-photon detections plus an upper bound on the
//! single-photon bit error rate.

pub mod analysis;
pub mod error;
pub mod lp;
pub mod photonics;
pub mod polytope;
pub mod sim;
pub mod stats;

mod special;

pub use error::{Error, Result};
