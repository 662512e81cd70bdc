//! Video summarization as binary node classification on sparse temporal
//! frame graphs, with a small reverse-mode gradient engine underneath.

pub mod cli;
pub mod dataio;
pub mod diffcore;
pub mod error;
pub mod gnn;
pub mod metrics;
pub mod summarize;
pub mod tgraph;
pub mod train;

pub use error::{Error, Result};
