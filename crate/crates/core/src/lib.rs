//! Scalable permutation-equivariant / permutation-invariant (PE/PI) networks
//! for cooperative learning over a time-varying client graph.
//!
//! Every PE/PI layer is described by two shared sub-matrices `S` and `O` plus
//! one bias vector. A client with `K - 1` neighbours runs the layer at scale
//! `K`: its effective weight matrix is a `K x K` block grid with `S` on the
//! diagonal and `O` everywhere else. Because the trainable parameters do not
//! depend on `K`, clients with different neighbourhoods can still average their
//! models at a server.
//!
//! Crate layout:
//!
//! - [`nn`]: small deterministic training engine (dense, conv + pool, softmax
//!   cross-entropy, SGD, finite-difference checks).
//! - [`pepi`]: the block-structured layer, the scalable model, rescaling and
//!   parameter accounting.
//! - [`topology`]: adjacency schedules and neighbour queries.
//! - [`data`]: IDX loading, partitioning, AWGN and multi-view sample building.
//! - [`federation`]: local training, FedAvg aggregation, schedule execution
//!   and checkpoints.
//! - [`metrics`]: the append-only metrics log.

pub mod data;
pub mod error;
pub mod federation;
pub mod metrics;
pub mod nn;
pub mod pepi;
pub mod seed;
pub mod topology;

pub use error::{Error, Result};
