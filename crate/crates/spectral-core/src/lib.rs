//! Learned spectral embeddings with an exact eigendecomposition oracle.
//!
//! The crate trains a feed-forward map whose outputs span the bottom
//! eigenspace of a graph Laplacian built from minibatch affinities. The
//! output layer is a frozen linear map obtained from a Cholesky-based QR
//! step, which keeps the batch outputs orthonormal while the remaining
//! weights follow the gradient of a spectral loss. Affinities come from a
//! Gaussian kernel over Euclidean or learned (Siamese) distances, cluster
//! assignments from k-means in the embedding space, and everything can be
//! checked against a dense eigensolver on the full graph.
//!
//! `no_std` + `alloc`: all numerics route through [`libm`], so results are
//! identical across platforms. File formats and the command-line interface
//! live in the companion `spectral-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod affinity;
pub mod cluster;
pub mod datasets;
pub mod error;
pub mod linalg;
mod math;
pub mod nn;
pub mod oracle;
pub mod siamese;
pub mod spectral;

pub use error::Error;
pub use linalg::Matrix;
