//! Sparse subspace clustering of images.
//!
//! [`ssc_solve`] expresses every image as a sparse affine combination of the
//! other images, [`affinity`] turns the coefficients into a symmetric graph and
//! [`spectral_cluster`] partitions that graph into `k` groups.

mod kmeans;
mod spectral;
mod ssc;

pub use kmeans::{kmeans, KMeansOutcome};
pub use spectral::{eigengap_k, spectral_cluster, spectral_embedding, ClusterAssignment};
pub use ssc::{affinity, ssc_solve, SelfRepresentation, SscConfig, SscResiduals};
