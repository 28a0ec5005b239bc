//! Experiment drivers, persistence, statistics and reporting.

pub mod checkpoint;
pub mod config;
pub mod experiments;
pub mod io;
pub mod report;
pub mod stats;
