//! Benchmark harness around the ordcast forecasting toolkit: dataset
//! synthesis, grid-search training, forecasting, evaluation, event-timing
//! analysis, and plotting, each as a deterministic batch command.
//!
//! Every command is a pure function of its JSON config, its input artifacts,
//! and the experiment seed; artifacts carry schema tags and enough metadata
//! to be reloaded without the config that produced them.

pub mod artifacts;
pub mod commands;
pub mod config;
pub mod svg;
