//! Server-less federated learning over device-to-device graphs.
//!
//! Devices hold private shards of a dataset and train a shared neural network
//! by exchanging models (CFA) or models plus gradients (CFA-GE) with their
//! graph neighbors. The crate also implements the classical baselines
//! (centralized training, federated averaging with a server, and isolated
//! training) and a deterministic round-based simulator that accounts for
//! every byte a device transmits.
//!
//! Module map:
//!
//! * [`nn`]: dense / 1-D conv / pooling networks with explicit backprop.
//! * [`data`]: dataset containers, file formats, synthetic generators, partitioning.
//! * [`topology`]: interaction graphs, mixing weights, time-varying schedules.
//! * [`algos`]: per-node round transitions for every learning regime.
//! * [`sim`]: the round orchestrator, overhead accounting and metrics.
//! * [`sweep`]: hyper-parameter grids over the simulator.

pub mod algos;
pub mod data;
pub mod error;
pub mod nn;
pub mod seed;
pub mod sim;
pub mod sweep;
pub mod topology;

pub use error::{Error, Result};
