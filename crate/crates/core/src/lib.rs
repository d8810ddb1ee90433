//! Estimation of structured matrices `θ = X B Zᵀ` from noisy and possibly
//! incomplete observations.
//!
//! The crate is organised bottom-up:
//!
//! - [`model`]: alphabets, structure specs, factorizations, observations and norms.
//! - [`simulate`]: Bernoulli masks, sub-Gaussian noise and ground-truth generators.
//! - [`estimators`]: least squares (exhaustive and block-coordinate), SVD hard
//!   thresholding and the sparsity-adaptive penalized estimator.
//! - [`rates`]: closed-form rates, lower-bound values, covering bounds, the
//!   adaptive penalty, the critical radius and the Gaussian KL divergence.
//! - [`packing`]: sparse binary packings, sign embeddings and hypothesis sets.
//! - [`bench`]: Monte Carlo risk experiments and their summaries.
//!
//! Data-parallel loops (restarts, grid cells, replicas, pairwise checks) go
//! through [`par`], which uses rayon when the `parallel` feature is enabled and
//! falls back to plain iterators otherwise.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod packing;
pub mod par;
pub mod rates;
pub mod rng;
pub mod simulate;

pub use error::{Error, Result};
pub use model::{Alphabet, Factorization, Norms, Observation, StructureSpec};
