//! Simulator for cooperative data offloading in a vehicular cluster.
//!
//! A platoon of vehicles drives past a base station. Each slot, every
//! follower splits its sensed data chunk between a V2V link to an elected
//! leader and a direct V2I link to the base station. The leader deduplicates
//! what it receives and uploads only unique bytes. Costs are wall-clock
//! completion time or radio+compute energy, with soft per-slot budgets.
//!
//! The crate bundles the channel and dedup models, the per-slot cost chain,
//! the episode simulator, a small dense neural network with hand-written
//! reverse-mode gradients, DQN/DDPG/SAC agents in centralized and
//! decentralized layouts, fixed-rule reference policies, and an exhaustive
//! per-slot grid-search oracle.

pub mod channel;
pub mod config;
pub mod cost;
pub mod dedup;
pub mod drl;
pub mod nn;
pub mod oracle;
pub mod sim;

pub use config::{AgentConfig, ExperimentConfig, SimConfig};
