//! Heterogeneity-aware serving of graph neural network inference across fog nodes.
//!
//! The crate is `no_std` (it needs `alloc`) and carries the algorithmic core:
//!
//! - [`graph`]: graph model, degree statistics, RMAT generation, subgraph sampling
//! - [`gnn`]: reference GCN / GAT / GraphSAGE inference over whole graphs or partitions
//! - [`profiler`]: regression latency models and online load factors
//! - [`planner`]: balanced partitioning and min-max partition-to-fog assignment
//! - [`quant`]: degree-aware quantization, bit shuffling and the packed stream codec
//! - [`sim`]: deterministic BSP serving simulator
//! - [`scheduler`]: load indicators, diffusion adjustment and the dual-mode scheduler
//!
//! File formats, the CLI and everything touching the OS live in the `fogserve` crate.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

mod error;
mod rng;
pub mod gnn;
pub mod graph;
pub mod planner;
pub mod profiler;
pub mod quant;
pub mod scheduler;
pub mod sim;

pub use error::{Error, Result};
pub use graph::{Cardinality, DegreeCdf, Graph, VertexId};
