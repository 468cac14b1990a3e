//! Spectral clustering of entities described by one-dimensional empirical
//! distributions (for example, merchants by their transaction amounts),
//! using the exact 1-Wasserstein distance between ECDFs.
//!
//! The pipeline is: [`ecdf`] builds and standardizes the ECDFs,
//! [`similarity`] turns pairwise distances into an exponential-kernel graph,
//! [`spectral`] embeds entities through the normalized Laplacian (optionally
//! from a column subsample) and [`kmeans`] clusters the embedding.
//! [`evaluation`] scores partitions and [`simgen`] generates benchmark data.

pub mod cover_tree;
pub mod ecdf;
pub mod eigen;
pub mod error;
pub mod evaluation;
pub mod io;
pub mod kmeans;
pub mod rng;
pub mod similarity;
pub mod simgen;
pub mod spectral;

pub use ecdf::{build_ecdf, cap_transactions, standardize, wasserstein, Dataset, Ecdf, TransactionBatch};
pub use error::{Error, Result};
pub use evaluation::{evaluate, MetricReport, Partition};
pub use similarity::{build_similarity, knn_sparsify, pairwise_distances, DistanceMatrix, SimilarityMatrix};
pub use spectral::{subwsc, wsc, ClusteringOutcome, SpectralConfig, SubsamplePlan};
