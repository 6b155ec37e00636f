//! Runs the code blocks of the guide in `book/src` as doctests.
//!
//! mdbook cannot resolve crate dependencies when testing, so each chapter is
//! included as the docs of an empty module and `cargo test --doc` compiles
//! its snippets against the workspace crates.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/problem.md")]
pub mod problem {}
#[doc = include_str!("../../../book/src/stability.md")]
pub mod stability {}
#[doc = include_str!("../../../book/src/inner.md")]
pub mod inner {}
#[doc = include_str!("../../../book/src/outer.md")]
pub mod outer {}
#[doc = include_str!("../../../book/src/certificates.md")]
pub mod certificates {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
