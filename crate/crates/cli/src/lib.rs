//! Command-line driver and annotation server.

pub mod commands;
pub mod config;
pub mod run_dir;
pub mod server;
