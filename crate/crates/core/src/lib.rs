//! Multi-agent RTL generation and optimization engine.
//!
//! Three specialized agent squads iterate over a design: an exploration
//! squad debates design-change actions under a feedback-controlled point
//! budget, an implementation squad turns the plan (or defect reports) into
//! code through a programmer/reviewer loop, and a verification squad drives
//! the EDA toolchain, rates the outcome and steers the next round. Every
//! message and protocol decision lands in an append-only transcript that
//! renders into a human-readable decision path document.

pub mod doc;
pub mod domain;
pub mod eda;
pub mod error;
pub mod exploration;
pub mod implementation;
pub mod orchestrator;
pub mod points;
pub mod protocol;
pub mod runtime;
pub mod verification;

pub use error::{Error, Result};
