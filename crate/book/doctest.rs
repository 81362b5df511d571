//! Runs every code snippet in the book as a doc-test, one module per
//! chapter, so `cargo test --workspace` keeps the book and the library in
//! sync. (mdBook itself cannot execute snippets against the real crate;
//! including the chapters as rustdoc input can.)

#[doc = include_str!("src/intro.md")]
pub mod intro {}

#[doc = include_str!("src/error-strength.md")]
pub mod error_strength {}

#[doc = include_str!("src/extensions.md")]
pub mod extensions {}

#[doc = include_str!("src/simulator.md")]
pub mod simulator {}

#[doc = include_str!("src/cluster.md")]
pub mod cluster {}

#[doc = include_str!("src/compiler.md")]
pub mod compiler {}

#[doc = include_str!("src/blocks.md")]
pub mod blocks {}

#[doc = include_str!("src/noise.md")]
pub mod noise {}

#[doc = include_str!("src/optical.md")]
pub mod optical {}

#[doc = include_str!("src/cli.md")]
pub mod cli {}
