//! Self-supervised node representation learning on class-imbalanced graphs,
//! built around centrality-guided progressively balanced sampling, plus a
//! numerical test bench for the convergence theory of iterative pseudo-label
//! rebalancing on a two-Gaussian mixture.
//!
//! The crate is organized as a set of small, independently testable modules:
//!
//! - [`graph`]: immutable CSR graphs, renormalized adjacency, subgraphs, disk format
//! - [`synth`]: imbalanced class-size laws, SBM generator, dataset splits
//! - [`centrality`]: PageRank scores and centrality-modulated keep probabilities
//! - [`clustering`]: constrained k-means pseudo-labeling with minimum cluster sizes
//! - [`sampling`]: class sampling strategies, the progressive schedule, Bernoulli masks
//! - [`encoder`]: two-layer GCN forward/backward and stochastic augmentations
//! - [`objectives`]: InfoNCE and feature-decorrelation losses with analytic gradients
//! - [`train`]: the full training loop (baseline and rebalanced modes)
//! - [`eval`]: linear probe and imbalance-aware metrics
//! - [`theory`]: exact mixture dynamics for the rebalancing contraction rate

pub mod centrality;
pub mod clustering;
pub mod config;
pub mod encoder;
pub mod error;
pub mod eval;
pub mod graph;
pub mod objectives;
pub mod rng;
pub mod sampling;
pub mod synth;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
