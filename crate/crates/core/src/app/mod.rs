//! Application layer: configuration, pipelines, the synthetic benchmark,
//! offline replay, the HTTP service and the command line.

pub mod cli;
pub mod commands;
pub mod config;
pub mod pipeline;
pub mod replay;
pub mod service;
pub mod synth;

pub use config::AppConfig;
