//! Clarify-or-commit decision making with value of information.
//!
//! An agent holds a belief over what the user wants. Each turn it either
//! asks a clarifying question or commits to an action. The VoI policy asks
//! only while the expected utility gain from the best question's answer
//! exceeds the cost of asking it.
//!
//! Layout:
//! - [`belief`]: belief states, likelihood tables and Bayes updates.
//! - [`voi`]: expected utility, value of information and the decision rule.
//! - [`policy`]: the VoI policy and baseline stopping rules.
//! - [`task`]: benchmark environments and the simulated user.
//! - [`estimator`]: exact and LLM-backed belief backends.
//! - [`harness`]: episodes, sweeps, aggregation, calibration and logs.

pub mod belief;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod policy;
pub mod task;
pub mod voi;

pub use error::{Error, Result};
