//! Command-line workflows: generate, collect, train, eval, rollout, solve
//! and plot-data, driven by TOML configs and replayable manifests.

pub mod cli;
pub mod commands;
pub mod config;
pub mod error;

pub use cli::run;
