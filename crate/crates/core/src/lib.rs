//! Audio-text embedding toolkit: a DSP front-end and reference encoders,
//! contrastive training of a projection head, cross-modal retrieval
//! metrics, text-guided equalization and prompt conditioning for image
//! generators. Embeddings from external models enter through the TCLP and
//! TCPM file formats.

pub mod audio;
mod binfmt;
pub mod cli;
pub mod embedding;
pub mod encoders;
pub mod eq;
pub mod error;
pub mod prompt;
pub mod retrieval;
pub mod train;

pub use error::{Error, Result};
