//! Multi-view graph construction with K-nearest hyperplanes.
//!
//! Every entity is observed through several views. Each view is factorized
//! (truncated SVD for matrices, CP/ALS for three-way count tensors), the
//! resulting view matrices are projected into a shared space by (tensor)
//! canonical correlation analysis, and each entity becomes the affine flat
//! spanned by its projected points. Flats are linked to their K nearest
//! flats and labels are spread over the graph with linearized belief
//! propagation.
//!
//! Modules:
//! - [`linalg`]: dense matrices, sparse 3-way tensors, truncated SVD, CP/ALS
//! - [`correlate`]: centering, covariance tensors, CCA and TCCA
//! - [`flats`]: hyperplanes, entity flats, point/flat distances
//! - [`graphkit`]: K-nearest sparsification, KNH and baseline graphs
//! - [`propagate`]: FaBP, label splits and classification metrics
//! - [`ingest`]: file formats, the term-term-article tensor, synthetic data
//! - [`pipeline`]: configuration-driven classification runs and sweeps

pub mod correlate;
pub mod error;
pub mod flats;
pub mod graphkit;
pub mod ingest;
pub mod linalg;
pub mod pipeline;
pub mod propagate;

pub use error::{KnhError, Result};
