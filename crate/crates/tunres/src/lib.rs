//! Command-line pipeline around the waveguide solver library: run
//! configuration, the content-addressed coefficient store, orchestration of
//! the solver stages, and artifact emission.

pub mod cache;
pub mod config;
pub mod emit;
pub mod pipeline;
