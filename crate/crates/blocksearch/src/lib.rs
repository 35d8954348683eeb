//! Random search over residual CNN building blocks.
//!
//! A building block is a bottlenecked residual unit whose parallel branches
//! (plain, factorized, or depthwise-separable convolutions) and merge rule
//! are sampled from a small closed space. Sampled blocks are compiled into
//! full networks, trained under a fixed protocol, and the best trials are
//! combined into a softmax-averaging ensemble.
//!
//! Module map:
//! - [`blockspace`]: the block search space, sampling, and the config text format
//! - [`archgraph`]: compiling a block into a network graph with shapes, parameter
//!   and MAC counts
//! - [`tensor`] / [`engine`]: a minimal differentiable executor for the operator
//!   set the graphs use
//! - [`datasets`]: CIFAR-10 binary and idx loaders, synthetic data, splits
//! - [`trainer`]: SGD-with-momentum training under the step-decay schedule
//! - [`search`] / [`manifest`]: resumable multi-trial random search
//! - [`ensemble`]: top-k ensembles and block-component histograms
//! - [`cli`]: the `blocksearch` command-line surface

pub mod archgraph;
pub mod blockspace;
pub mod cli;
pub mod datasets;
pub mod engine;
pub mod ensemble;
pub mod error;
pub mod manifest;
pub mod rng;
pub mod search;
pub mod tensor;
pub mod trainer;

pub use archgraph::{build_architecture, ArchGraph, MacroConfig};
pub use blockspace::{BlockConfig, BranchOp, CombinerKind, SearchSpace};
pub use error::{Error, Result};
pub use tensor::Tensor;
