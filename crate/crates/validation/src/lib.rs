//! End-to-end acceptance checks; see `tests/acceptance.rs`.
//!
//! Kept in its own package so that `cargo test --workspace` runs every other
//! test target before it.
