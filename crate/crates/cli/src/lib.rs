//! Command implementations and the labeling service of the `clarify` binary.

pub mod commands;
pub mod server;
