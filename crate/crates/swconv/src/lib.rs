//! File formats, configuration, timed execution and the command-line front
//! end for `swconv-core`.

pub mod checks;
pub mod cli;
pub mod config;
pub mod netfile;
pub mod timing;
pub mod weights;
