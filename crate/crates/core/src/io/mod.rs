//! File formats: TOML configuration, WFRF frame datasets and PGM images.

pub mod config;
pub mod pgm;
pub mod wfrf;
