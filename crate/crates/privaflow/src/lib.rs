//! Files, dataset export and the command line around `privaflow-core`.

pub mod bench;
pub mod cli;
pub mod commands;
pub mod config;
pub mod dataset;
pub mod density_io;
pub mod error;
pub mod keystore;

pub use error::{Error, Result};
