//! Structural re-weighting for graph domain adaptation on node classification.
//!
//! The crate covers synthetic shifted-graph generation ([`csbm`]), shift
//! diagnostics ([`shift`]), edge re-weighting ([`reweight`]), a small
//! reverse-mode autodiff engine ([`autodiff`]), message-passing models
//! ([`gnn`]), the training pipelines ([`train`]) and empirical checks of the
//! missing-value construction and attribute alignment ([`theory`]).

pub mod autodiff;
pub mod cli;
pub mod csbm;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod reweight;
pub mod rng;
pub mod sampling;
pub mod shift;
pub mod theory;
pub mod train;

pub use error::{Error, Result};
pub use graph::{DomainPair, LabeledGraph};
pub use shift::BlockMatrix;
