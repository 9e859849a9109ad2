//! Library surface of the command-line tool, so integration tests can call
//! commands directly.

pub mod args;
pub mod commands;
