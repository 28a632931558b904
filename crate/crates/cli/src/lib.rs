//! Config handling and experiment runners behind the `capdrop` binary.

pub mod config;
pub mod run;
