//! Command-line stages and the review server for tensorsar.

pub mod cli;
pub mod serve;
pub mod stages;
