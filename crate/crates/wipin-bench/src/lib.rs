//! Shared fixtures for the criterion benchmarks.

pub use wipin_core as core;
