//! Gaussian linear structural causal models with latent confounders.
//!
//! The crate represents a linear SCM over a known causal diagram in a
//! centralized form: every latent confounder is a standard normal, node
//! noises are zero-mean, and the whole system reduces to
//!
//! ```text
//! X = Bᵀμ + BᵀCᵀU + Bᵀε
//! ```
//!
//! where `B` accumulates directed-path influence between endogenous
//! variables and `C` holds confounder loadings. On top of that form it
//! provides:
//!
//! * exact observational and joint `(U, X)` distributions ([`model`]),
//! * seeded, bit-reproducible dataset generation ([`sampler`]),
//! * an EM estimator with masked gradient-ascent M-steps that learns
//!   `(B, C, μ)` from finite observational samples ([`estimation`]),
//! * recovery of direct edge weights from the aggregate influence matrix
//!   ([`edge_recovery`]),
//! * analytic interventional `do`-queries by mechanism surgery ([`query`]).
//!
//! The built-in frontdoor and napkin generators used by the CLI benchmarks
//! live in [`benchmarks`].

pub mod benchmarks;
pub mod edge_recovery;
mod error;
pub mod estimation;
pub mod graph;
mod linalg;
pub mod model;
pub mod query;
pub mod sampler;

pub use error::{Error, Result};
pub use graph::{CausalDiagram, MaskSet};
pub use model::{gl_to_cgl, total_influence, CglScm, GaussianDist, GlScm};
pub use query::{DoQuery, Gaussian1D};
pub use sampler::Dataset;
