//! phnet — a desk-scale multimodal pulmonary-hypertension classifier.
//!
//! The crate implements the full pipeline around a three-way PH classifier
//! that fuses two cine-MRI-style imaging modalities (a short-axis volume
//! series and a four-chamber plane series) with a small clinical record:
//!
//! * [`syn_cohort`] — a deterministic synthetic cohort generator (deforming
//!   annular phantoms plus class-conditional clinical records), so the whole
//!   pipeline can be exercised without any clinical data.
//! * [`preprocess`] — spacing resampling, ROI cropping, shape
//!   standardization, frame subsampling, and the relative-area-change (RAC)
//!   feature of the pulmonary-artery mask series.
//! * [`encoder`] — per-frame convolutional encoding followed by temporal
//!   multi-head self-attention across the five retained frames.
//! * [`fusion`] — a 22-node graph (11 image nodes + 11 clinical nodes),
//!   symmetric-normalized adjacency, two GCN layers and an MLP head.
//! * [`optim`] — mini-batch Adam training and a finite-difference gradient
//!   checker covering every parameter tensor.
//! * [`evalx`] — repeated stratified holdout, one-vs-rest AUC, ablations and
//!   the incremental-training-size sweep.
//! * [`cli`] — the `phnet` binary: data generation through evaluation, with
//!   bit-reproducible file formats ([`format`]).
//!
//! Everything is seeded: identical inputs and seeds produce byte-identical
//! artifacts, including under multi-threaded execution.

pub mod cli;
pub mod config;
pub mod encoder;
pub mod error;
pub mod evalx;
pub mod format;
pub mod fusion;
pub mod guide;
pub mod model;
pub mod ops;
pub mod optim;
pub mod params;
pub mod preprocess;
pub mod real;
pub mod report;
pub mod rng;
pub mod syn_cohort;
pub mod tape;

pub use error::{PhnetError, Result};
pub use real::{Dtype, Real};
pub use tape::{Tape, Var};
