//! Experiment harness for AMR policy-gradient training: TOML configs, run
//! directories, the pipelines behind each command and SVG plots.

pub mod config;
pub mod plot;
pub mod run;
