//! Library surface of the command-line front end: config parsing, game
//! construction from config sections, and the command implementations.
//! The binary in `main.rs` is a thin dispatcher over these.

pub mod build;
pub mod commands;
pub mod config;
