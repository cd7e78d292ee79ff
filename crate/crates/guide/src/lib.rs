//! The book's chapters as doc-tested modules.
//!
//! mdBook renders `book/` but does not compile its Rust blocks against this
//! workspace. Each module below embeds one chapter verbatim, so `cargo test`
//! runs every fenced snippet in the book as a doc-test: if the book drifts
//! from the library, the build breaks. One module per chapter keeps test
//! failures traceable to their source file.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/fairness-criteria.md")]
pub mod fairness_criteria {}

#[doc = include_str!("../../../book/src/least-squares-classifier.md")]
pub mod least_squares_classifier {}

#[doc = include_str!("../../../book/src/estimating-mi.md")]
pub mod estimating_mi {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/synthetic-scenarios.md")]
pub mod synthetic_scenarios {}

#[doc = include_str!("../../../book/src/command-line.md")]
pub mod command_line {}
