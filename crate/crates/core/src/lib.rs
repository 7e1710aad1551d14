//! Online actor-critic (direct heuristic dynamic programming) tuning of the
//! impedance parameters of a four-phase knee controller so that the
//! prosthetic gait features track those of the intact knee.

pub mod config;
pub mod dhdp;
pub mod error;
pub mod fsm;
pub mod harness;
pub mod plant;
pub mod types;

pub use error::{Error, Result};
