//! The phnet guide, embedded chapter by chapter from `book/src/`.
//!
//! The guide is an mdBook (`mdbook build book/` renders it); including the
//! same markdown here makes rustdoc show it and — more importantly — makes
//! `cargo test --doc` compile and run every code block, so the prose can
//! never drift from the library it describes.

#[doc = include_str!("../../../book/src/overview.md")]
pub mod ch1_overview {}

#[doc = include_str!("../../../book/src/synthetic-cohorts.md")]
pub mod ch2_synthetic_cohorts {}

#[doc = include_str!("../../../book/src/preprocessing.md")]
pub mod ch3_preprocessing {}

#[doc = include_str!("../../../book/src/encoder.md")]
pub mod ch4_encoder {}

#[doc = include_str!("../../../book/src/graph-fusion.md")]
pub mod ch5_graph_fusion {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod ch6_training {}

#[doc = include_str!("../../../book/src/evaluation.md")]
pub mod ch7_evaluation {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod ch8_cli {}

#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod ch9_reproducibility {}
