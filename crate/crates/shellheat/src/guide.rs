//! The book chapters under `book/` double as doc-tests: each chapter is
//! included here as module documentation, so `cargo test --doc` compiles and
//! runs every code listing in the guide.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/geometry.md")]
pub mod geometry_guide {}

#[doc = include_str!("../../../book/src/shell_energy.md")]
pub mod shell_energy {}

#[doc = include_str!("../../../book/src/scheme.md")]
pub mod scheme {}

#[doc = include_str!("../../../book/src/ledger.md")]
pub mod ledger {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
