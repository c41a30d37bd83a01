//! Slot-level simulation of critical-message delivery over a massive-IoT
//! random access channel, with devices learning the number of critical
//! messages from noisy local observations.

pub mod analytics;
pub mod config;
pub mod engine;
pub mod error;
pub mod geometry;
pub mod learning;
pub mod observe;
pub mod rach;

pub use analytics::{DelaySlots, PreambleSplit, RunStats};
pub use config::{RuleCheck, SimConfig, DEFAULT_MASTER_SEED};
pub use engine::{monte_carlo, run, run_many, run_seed, Aggregate, MetricsRecord, Trace};
pub use error::{Error, Result};
pub use geometry::{Deployment, EventPlacement, Point};
pub use learning::{Decision, LearningParams, Status};
pub use observe::{ObservationModel, State};
