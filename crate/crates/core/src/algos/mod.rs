//! Round transitions for every learning regime.
//!
//! Each function maps a node's state, a frozen inbox of the previous round's
//! messages and the node's own shard to a new state and an outgoing message.
//! Nothing is shared or mutated across nodes, so a round can be evaluated for
//! all nodes in any order or in parallel.

mod baseline;
mod cfa;
mod cfa_ge;
mod consensus;
mod hyper;
mod quantize;
mod state;

use std::fmt;
use std::str::FromStr;

pub use baseline::{centralized_epoch, centralized_step, fa_round, isolated_round, shard_gradient};
pub use cfa::cfa_round;
pub use cfa_ge::{cfa_ge_round_2stage, cfa_ge_round_4stage, mewma_update, momentum_velocity, SyncView};
pub use consensus::consensus_aggregate;
pub use hyper::{HyperParams, SharePoint, Preset};
pub use quantize::{quantize, quantize_params, QuantBits};
pub use state::{local_update, ExchangeMsg, NodeState, Payload, RoundCtx};

use crate::error::Error;

/// Learning regimes the simulator can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    /// Consensus-based federated averaging: exchange models only.
    Cfa,
    /// CFA with gradient exchange (four-stage warm-up, then two-stage).
    CfaGe,
    /// Server-side federated averaging of device gradients.
    Fa,
    /// All data pooled on the server.
    Centralized,
    /// Every device trains alone.
    Isolated,
}

impl Algorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Cfa => "cfa",
            Algorithm::CfaGe => "cfa-ge",
            Algorithm::Fa => "fa",
            Algorithm::Centralized => "centralized",
            Algorithm::Isolated => "isolated",
        }
    }

    /// Whether devices exchange messages with graph neighbors.
    pub fn is_consensus(self) -> bool {
        matches!(self, Algorithm::Cfa | Algorithm::CfaGe)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "cfa" => Ok(Algorithm::Cfa),
            "cfa-ge" | "cfage" => Ok(Algorithm::CfaGe),
            "fa" | "fedavg" => Ok(Algorithm::Fa),
            "centralized" | "central" => Ok(Algorithm::Centralized),
            "isolated" => Ok(Algorithm::Isolated),
            other => Err(Error::Argument(format!("unknown algorithm '{other}'"))),
        }
    }
}
