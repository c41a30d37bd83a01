//! Shared fixtures for the benchmarks.

use rachlearn_core::SimConfig;

/// The default scenario shrunk to `side x side`.
pub fn square(side: f64) -> SimConfig {
    SimConfig {
        width: side,
        length: side,
        ..SimConfig::default()
    }
}
