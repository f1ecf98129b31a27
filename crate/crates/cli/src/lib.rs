//! Library half of the `skg` binary: config resolution, output files and subcommands.

pub mod commands;
pub mod config;
pub mod output;
