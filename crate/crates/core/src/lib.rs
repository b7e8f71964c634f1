//! Sequential physical-layer authentication over non-stationary MIMO channels.
//!
//! The crate is organised around the pipeline Bob runs on every time slot:
//!
//! * [`channel`] simulates correlated Rician MIMO channels with LoS blockage
//!   and produces noisy CSI observations.
//! * [`encoder`] turns CSI into real embeddings and keeps per-state Gaussian
//!   emission statistics, optionally adapted online with an EMA.
//! * [`adversary`] produces spoofed CSI for Eve (naive, moment-matching or
//!   replayed from a trace file).
//! * [`auth`] runs the SPRT and the 2-/3-state HMM forward recursions and
//!   turns the log-posterior ratio into decisions.
//! * [`analysis`] holds the closed-form and quadrature characterisations of
//!   the detection statistic together with their Monte Carlo counterparts.
//! * [`harness`] wires everything into scenarios, ROC/AUC reports and the CLI.

pub mod adversary;
pub mod analysis;
pub mod auth;
pub mod channel;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod math;
pub mod seed;
pub mod trace;

pub use error::{Error, Result};
