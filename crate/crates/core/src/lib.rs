//! Bayesian inference for exponential random graph models by kernel-weighted
//! approximate Bayesian computation, with an exchange-algorithm baseline.
//!
//! The usual pipeline: read a [`Graph`], declare a [`ModelSpec`], fit the
//! maximum pseudolikelihood estimate with [`fit_mple`], then run
//! [`kabc_ais`] (or [`kabc_is`]) and summarize the weighted draws with
//! [`summarize`].

pub mod abc;
pub mod aea;
pub mod bench;
pub mod cli;
pub mod config;
pub mod error;
pub mod graph;
pub mod kernel_stats;
pub mod model;
pub mod mple;
pub mod output;
pub mod posterior;
pub mod rng;
pub mod sampler;

pub use aea::{aea_run, AeaConfig, AeaOutput, AeaProposal};
pub use abc::{kabc_ais, kabc_is, rabc, run_batch, AbcConfig, AbcOutput, AbcProblem};
pub use error::{Error, Result};
pub use graph::{Dyad, Graph, NodeAttributes};
pub use kernel_stats::{GaussianPrior, GridPrior, Prior, ProposalT};
pub use model::{compute_stats, ModelSpec, StatVector, SummarySpec, Term, Transform};
pub use mple::{fit_mple, MpleResult};
pub use posterior::{summarize, PosteriorSummary, WeightedDraw};
pub use sampler::{simulate, ProposalKind, SimConfig};
