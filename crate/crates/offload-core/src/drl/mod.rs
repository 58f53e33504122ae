//! Learning agents and their training/evaluation harness.
//!
//! Three algorithm families (discrete Q-learning, deterministic
//! actor-critic, and maximum-entropy actor-critic) run in two topologies: a
//! centralized controller observing the whole fleet and emitting every
//! follower's action, or one parameter-shared policy queried per follower
//! on a compact local observation. All agents act through the same
//! interface: observation vector in, follower action(s) out.

pub mod baseline;
pub mod checkpoint;
pub mod ddpg;
pub mod dqn;
pub mod ou;
pub mod presets;
pub mod replay;
pub mod sac;
pub mod state;
pub mod train;

pub use baseline::BaselineKind;
pub use ddpg::DdpgAgent;
pub use dqn::DqnAgent;
pub use replay::{ActionRecord, ReplayBuffer, Transition};
pub use sac::SacAgent;
pub use train::{evaluate, train, EpisodeRecord, EvalPolicy, EvalSummary, TrainResult, TrainedAgent};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algo {
    Dqn,
    Ddpg,
    Sac,
}

impl Algo {
    pub fn name(self) -> &'static str {
        match self {
            Algo::Dqn => "dqn",
            Algo::Ddpg => "ddpg",
            Algo::Sac => "sac",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "dqn" => Some(Algo::Dqn),
            "ddpg" => Some(Algo::Ddpg),
            "sac" => Some(Algo::Sac),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Topology {
    Centralized,
    Decentralized,
}

impl Topology {
    pub fn name(self) -> &'static str {
        match self {
            Topology::Centralized => "centralized",
            Topology::Decentralized => "decentralized",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "centralized" => Some(Topology::Centralized),
            "decentralized" => Some(Topology::Decentralized),
            _ => None,
        }
    }
}
