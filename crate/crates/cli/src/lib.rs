//! Command-line pipeline and the HTTP annotation endpoint.

pub mod commands;
pub mod config;
pub mod service;
pub mod store;
