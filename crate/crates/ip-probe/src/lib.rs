//! Statistical audit harness for detecting implicit personalization in
//! black-box text-generation systems.
//!
//! The pipeline builds paired inputs that share semantics but differ in
//! background-revealing surface form, collects model responses for both
//! sides, scores each pair (numeric differences or bounded similarities),
//! and runs paired hypothesis tests with Bonferroni correction to decide
//! whether the model tailors its output to the inferred user background.

pub mod backends;
pub mod cli;
pub mod core;
pub mod metrics;
pub mod sampling;
pub mod stats;
pub mod verdict;
