//! Critical Galton-Watson trees, their one- and two-spine size-biased
//! relatives, and the exact generating-function machinery needed to verify
//! Kolmogorov's survival estimate, Yaglom's exponential limit, and the
//! `k(k-1)`-biased change of measure.
//!
//! The crate is organised around five pieces:
//!
//! - [`offspring`]: offspring laws `μ` on the non-negative integers, the
//!   size-biased laws `k·μ(k)` and `k(k-1)·μ(k)/σ²`, and generating-function
//!   evaluation.
//! - [`tree`]: finite Ulam-Harris trees stored as breadth-first child-count
//!   sequences, exhaustive enumeration of small tree spaces, and exact
//!   evaluation of the plain and size-biased tree measures.
//! - [`sampler`]: Monte Carlo generators for the plain process, the
//!   one-spine tree, and the two-spine tree, plus the nearest-spine-ancestor
//!   bush decomposition.
//! - [`exact`]: deterministic extinction/survival sequences, conditional
//!   means, and Laplace transforms of the plain and biased populations,
//!   including the two-spine product decomposition.
//! - [`analysis`]: empirical transforms, goodness-of-fit tests, and the
//!   distributional-equation characterizations of the exponential law.

pub mod analysis;
pub mod error;
pub mod exact;
pub mod offspring;
pub mod rng;
pub mod sampler;
pub mod tree;

pub use error::{Error, Result};
pub use offspring::{BiasedKind, OffspringDistribution, OffspringSpec};
pub use sampler::{PopulationPath, Sampler, SpinedTree, TwoSpinedTree};
pub use tree::Tree;
