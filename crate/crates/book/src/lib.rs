//! The guide under `book/src`, compiled as documentation so that every Rust
//! snippet in it runs as a doc-test.

#![doc = include_str!("../../../book/src/introduction.md")]

#[doc = include_str!("../../../book/src/marginals.md")]
pub mod marginals {}

#[doc = include_str!("../../../book/src/estimation.md")]
pub mod estimation {}

#[doc = include_str!("../../../book/src/predictive.md")]
pub mod predictive {}

#[doc = include_str!("../../../book/src/risk.md")]
pub mod risk {}

#[doc = include_str!("../../../book/src/regression.md")]
pub mod regression {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}

#[doc = include_str!("../../../README.md")]
pub mod readme {}
