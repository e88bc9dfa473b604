//! Image tag completion and refinement.
//!
//! The pipeline runs in two stages. Images are first grouped by sparse
//! subspace clustering ([`subspace`]) and tags are shared inside each cluster
//! by neighbor voting ([`sharing`]), which densifies the tag matrix. The
//! completed matrix is then refined by inductive matrix completion with a
//! discounted loss on unannotated positions and graph-Laplacian smoothing over
//! images and tags ([`refine`]).
//!
//! This crate is `no_std` (it needs `alloc`). File formats, the command line
//! runner and thread-level parallelism live in the `smc` crate.

#![cfg_attr(not(any(feature = "std", test)), no_std)]
// Index loops mirror the formulas; `!(x > 0.0)` also rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod error;
pub use error::{Error, Result};

pub mod cg;
pub mod metrics;
pub mod pipeline;
pub mod refine;
pub mod sharing;
pub mod subspace;
pub mod tagmat;
pub mod testkit;

pub use nalgebra::DMatrix;

pub(crate) fn seeded_rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
