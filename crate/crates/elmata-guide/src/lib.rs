//! The mdbook guide under `book/`, compiled as one module per chapter so
//! `cargo test --doc` runs every code snippet in the book. mdbook cannot run
//! Rust snippets as tests on its own; including the chapter sources as doc
//! comments keeps the book and the library honest with each other, and the
//! per-chapter modules make it clear which chapter a failing snippet lives
//! in.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/rationals.md")]
pub mod rationals {}

#[doc = include_str!("../../../book/src/automata.md")]
pub mod automata {}

#[doc = include_str!("../../../book/src/compilation.md")]
pub mod compilation {}

#[doc = include_str!("../../../book/src/heads.md")]
pub mod heads {}

#[doc = include_str!("../../../book/src/approximation.md")]
pub mod approximation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
