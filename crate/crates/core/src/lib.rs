//! Proximal-free decentralized ADMM over a simplest bipartite graph.
//!
//! A connected network is first reduced, by two message-passing protocols, to
//! a spanning tree whose nodes are split into two sets `H` and `T` with every
//! tree edge crossing the split. Over that topology consensus problems
//! `min sum_i f_i(x) + g_i(x)` become plain two-block ADMM whose subproblems
//! decouple node by node, so no proximal linearization term is needed.
//!
//! Modules:
//! - [`graph`]: graphs, Laplacian and incidence matrices, the bipartition type.
//! - [`netsim`]: synchronous round-based message passing with traffic counters.
//! - [`topology`]: spanning-tree and labeling protocols.
//! - [`prox`]: per-node subproblem evaluators.
//! - [`solver`]: the decentralized solvers and their matrix-form oracles.
//! - [`baselines`]: centralized consensus ADMM and distributed subgradient descent.
//! - [`experiments`]: compressed-sensing generators, metrics and the experiment runner.

pub mod baselines;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod metrics;
pub mod netsim;
pub mod prox;
pub mod solver;
pub mod topology;

pub use error::{Error, Result};
pub use graph::{DenseMatrix, Graph, Label, SimplestBipartiteGraph};
