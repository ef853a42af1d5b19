//! Cold-start video relevance models over pre-extracted content features.
//!
//! Three rankers share one data model:
//!
//! * [`forest`]: a random-forest regressor over seven pairwise distances
//!   between video-level vectors, trained on balanced positive/negative pairs.
//! * [`nn`]: a two-branch network (time-distributed dense + LSTM over frames,
//!   dense over the video vector) regressing a multi-hot relevance vector.
//! * [`deeplda`]: a fully connected embedding trained by pushing up the
//!   smallest eigenvalues of a per-batch generalized LDA eigenproblem.
//!
//! [`evaluation`] scores rankings with recall@K and hit@K.
//!
//! The crate is `no_std` and needs only `alloc`. File formats, the CLI and
//! parallel training live in the `icebreaker` crate.
#![no_std]
// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod dataset;
pub mod deeplda;
pub mod distances;
mod error;
pub mod evaluation;
pub mod forest;
pub mod linalg;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
