//! Experiment drivers behind the `lagom` command.

pub mod experiments;
