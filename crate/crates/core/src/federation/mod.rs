//! Federated training over a time-varying topology.
//!
//! Each round every active client trains locally, uploads its parameters and
//! the server replaces the global model with the sample-weighted mean. PE/PI
//! models share one parameter shape regardless of a client's scale, which is
//! what makes the averaging well defined across different neighbourhoods.

mod aggregate;
pub mod checkpoint;
mod client;
mod model;
mod params;
mod runner;

pub use aggregate::aggregate;
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use client::{evaluate, local_train, ClientState, LocalStats, TrainHyper};
pub use model::{Method, Network, PaddedDenseModel};
pub use params::{GlobalParams, LayerParams, LocalUpdate};
pub use runner::{run_schedule, ClientData, RunConfig, RunReport, SlotCheckpoint, Transition};
