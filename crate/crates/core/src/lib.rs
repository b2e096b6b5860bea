//! Multi-level structural node embeddings.
//!
//! The pipeline is: load a [`graph::Graph`], count shared triads and
//! community co-memberships ([`structure`]), detect or import communities
//! ([`community`]), sample biased random walks ([`walker`]), merge all three
//! signals into one [`structure::PairWeightTable`] and fit node vectors with a
//! weighted negative-sampling objective ([`trainer`]). The [`eval`] module
//! scores embeddings on node classification and network reconstruction.

pub mod community;
pub mod error;
pub mod eval;
pub mod graph;
pub mod io;
pub mod rng;
pub mod structure;
pub mod trainer;
pub mod walker;

pub use error::{Error, Result};
pub use graph::{Graph, LabelTable, NodeId};
