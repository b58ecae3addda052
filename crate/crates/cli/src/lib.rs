//! Command-line front end for the multicarrier Fresnel-zone localizer.

pub mod analysis;
pub mod commands;
pub mod config;
pub mod error;

pub use config::RunConfig;
pub use error::CliError;
