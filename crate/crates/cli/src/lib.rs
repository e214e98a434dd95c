//! The `causalqa` command-line pipeline.

pub mod app;
pub mod config;
pub mod manifest;
pub mod pipeline;
