//! Ownership verification for graph neural networks against model
//! extraction: boundary-node signatures, surrogate/independent model pools,
//! optimal-transport and label-agreement matching, and perturbation bounds.

pub mod bounds;
pub mod error;
pub mod extraction;
pub mod graph;
pub mod io;
pub mod matrix;
pub mod nn;
pub mod seed;
pub mod signature;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{build_graph, normalized_adjacency, sbm_generate, Graph, SbmConfig, SparseMatrix, Splits};
pub use matrix::DenseMatrix;
pub use nn::{forward, ModelParams, Provenance, TrainConfig};
pub use signature::{build_signature, BoundaryConfig, SignatureSet};
pub use verify::{Level, VerificationReport};
