//! Durable storage for trained policies.
//!
//! A checkpoint is a binary file (network weights, optimizer state, and the
//! interface header) plus a JSON sidecar at `<path>.json` holding the
//! hyperparameters needed to resume or re-instantiate the agent, readable
//! without the binary.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::AgentConfig;
use crate::cost::Objective;
use crate::drl::train::{AgentNet, TrainedAgent};
use crate::drl::{Algo, Topology};
use crate::drl::{DdpgAgent, DqnAgent, SacAgent};
use crate::nn::NnError;

const MAGIC: &[u8; 4] = b"OFA1";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),
    #[error("network blob: {0}")]
    Net(#[from] NnError),
    #[error("not a policy checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated")]
    Truncated,
    #[error("unknown {field} tag {value}")]
    BadTag { field: &'static str, value: u8 },
    #[error("manifest disagrees with binary header on {0}")]
    Mismatch(&'static str),
}

/// Human-readable sidecar; the source of hyperparameters when loading.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub algo: Algo,
    pub topology: Topology,
    pub objective: Objective,
    pub n_vehicles: usize,
    pub agent: AgentConfig,
}

fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_os_string();
    s.push(".json");
    PathBuf::from(s)
}

fn algo_tag(a: Algo) -> u8 {
    match a {
        Algo::Dqn => 0,
        Algo::Ddpg => 1,
        Algo::Sac => 2,
    }
}

fn topology_tag(t: Topology) -> u8 {
    match t {
        Topology::Centralized => 0,
        Topology::Decentralized => 1,
    }
}

fn objective_tag(o: Objective) -> u8 {
    match o {
        Objective::Time => 0,
        Objective::Energy => 1,
    }
}

pub fn save_agent(path: &Path, agent: &TrainedAgent, agent_cfg: &AgentConfig) -> Result<(), CheckpointError> {
    let blob = match &agent.net {
        AgentNet::Dqn(a) => a.to_bytes(),
        AgentNet::Ddpg(a) => a.to_bytes(),
        AgentNet::Sac(a) => a.to_bytes(),
    };
    let mut out = Vec::with_capacity(blob.len() + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(algo_tag(agent.algo));
    out.push(topology_tag(agent.topology));
    out.push(objective_tag(agent.objective));
    out.extend_from_slice(&(agent.n_vehicles as u32).to_le_bytes());
    out.extend_from_slice(&(blob.len() as u64).to_le_bytes());
    out.extend_from_slice(&blob);
    fs::write(path, out)?;

    let manifest = CheckpointManifest {
        algo: agent.algo,
        topology: agent.topology,
        objective: agent.objective,
        n_vehicles: agent.n_vehicles,
        agent: agent_cfg.clone(),
    };
    fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn load_agent(path: &Path) -> Result<(TrainedAgent, AgentConfig), CheckpointError> {
    let manifest: CheckpointManifest =
        serde_json::from_str(&fs::read_to_string(manifest_path(path))?)?;
    let bytes = fs::read(path)?;
    if bytes.len() < 23 {
        return Err(CheckpointError::Truncated);
    }
    if &bytes[0..4] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let algo = match bytes[8] {
        0 => Algo::Dqn,
        1 => Algo::Ddpg,
        2 => Algo::Sac,
        v => return Err(CheckpointError::BadTag { field: "algo", value: v }),
    };
    let topology = match bytes[9] {
        0 => Topology::Centralized,
        1 => Topology::Decentralized,
        v => return Err(CheckpointError::BadTag { field: "topology", value: v }),
    };
    let objective = match bytes[10] {
        0 => Objective::Time,
        1 => Objective::Energy,
        v => return Err(CheckpointError::BadTag { field: "objective", value: v }),
    };
    let n_vehicles = u32::from_le_bytes(bytes[11..15].try_into().unwrap()) as usize;
    let blob_len = u64::from_le_bytes(bytes[15..23].try_into().unwrap()) as usize;
    let blob = bytes.get(23..23 + blob_len).ok_or(CheckpointError::Truncated)?;

    if manifest.algo != algo {
        return Err(CheckpointError::Mismatch("algo"));
    }
    if manifest.topology != topology {
        return Err(CheckpointError::Mismatch("topology"));
    }
    if manifest.objective != objective {
        return Err(CheckpointError::Mismatch("objective"));
    }
    if manifest.n_vehicles != n_vehicles {
        return Err(CheckpointError::Mismatch("n_vehicles"));
    }

    let net = match algo {
        Algo::Dqn => AgentNet::Dqn(DqnAgent::from_bytes(blob, &manifest.agent)?),
        Algo::Ddpg => AgentNet::Ddpg(DdpgAgent::from_bytes(blob, &manifest.agent)?),
        Algo::Sac => AgentNet::Sac(SacAgent::from_bytes(blob, &manifest.agent)?),
    };
    Ok((TrainedAgent { algo, topology, objective, n_vehicles, net }, manifest.agent))
}
