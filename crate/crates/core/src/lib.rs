//! Sublinear spectral clustering oracle for well-clusterable bounded-degree graphs.
//!
//! The crate answers two kinds of local queries on a d-regular graph using only random
//! walks: approximate dot products between spectral embeddings of two vertices, and the
//! cluster label of a vertex under a fixed, seed-determined partition.

pub mod error;
pub mod cluster;
pub mod exact;
pub mod graph;
pub mod harness;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod subspace;
pub mod walks;

pub use error::{Error, Result};
pub use rng::Seed;
