//! Command-line and HTTP front end for the bonsai reasoning engine.

pub mod commands;
pub mod serve;
pub mod setup;
