//! Perceptual grouping of free-hand sketches.
//!
//! A sketch is a sequence of pen offsets. A recurrent variational encoder–decoder
//! embeds every segment, a pairwise classifier turns those embeddings into a
//! same-group affinity matrix, and agglomerative clustering turns the matrix into
//! a partition. Around that sit the training loop, partition metrics (VOI, Rand
//! index, segmentation covering) and an importance-driven sketch abstraction
//! pipeline.

pub mod abstraction;
pub mod autodiff;
mod error;
pub mod inference;
mod io;
pub mod metrics;
pub mod model;
pub mod par;
pub mod render;
pub mod stroke;
pub mod train;

pub use error::{Error, Result};
pub use io::write_atomic;
