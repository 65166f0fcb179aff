//! GINE+ graph convolutions and the tooling around them.
//!
//! The crate is split by concern:
//!
//! - [`graph`]: labelled graphs, k-hop neighbourhoods, 1-WL refinement,
//!   simple-cycle enumeration, the edge-splice counterexample and synthetic
//!   generators.
//! - [`tensor`]: a small dense tensor type with a reverse-mode tape, the
//!   neural primitives used by the model, Adam and checkpoints.
//! - [`nn`]: GCN, GINE, NaiveGINE+ and GINE+ convolutions, the virtual node,
//!   and full model assembly.
//! - [`data`]: datasets with missing labels, file IO, splits, task-union
//!   augmentation and batching.
//! - [`train`]: masked multi-task training, ROC-AUC / PRC-AUC and replicate
//!   aggregation.

pub mod data;
pub mod error;
pub mod graph;
pub mod nn;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
