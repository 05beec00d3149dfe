//! Operator CLI and HTTP API for the dual-path detector.

pub mod api;
pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod model_dir;
