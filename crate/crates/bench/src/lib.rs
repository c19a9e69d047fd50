//! Shared fixtures for the benchmark harness.
