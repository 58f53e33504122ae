//! Training and evaluation loops tying agents to the slot simulator.
//!
//! One experience is collected per slot (centralized) or per follower per
//! slot (decentralized, parameter-shared), and at most one gradient update
//! runs per environment slot once the warmup fill is reached. Evaluation is
//! always greedy and draws its episodes from a seed stream disjoint from
//! training, so every policy evaluated under the same master seed faces the
//! same traffic and fading.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SimConfig};
use crate::cost::{reward, FollowerAction, Objective};
use crate::drl::baseline::BaselineKind;
use crate::drl::ddpg::DdpgAgent;
use crate::drl::dqn::DqnAgent;
use crate::drl::presets::{decode, PRESET_COUNT};
use crate::drl::replay::{ActionRecord, ReplayBuffer, Transition};
use crate::drl::sac::SacAgent;
use crate::drl::state;
use crate::drl::{Algo, Topology};
use crate::sim::{mix_seed, streams, EpisodeState};

/// Map a flat [0,1] vector (3 entries per follower) to concrete actions.
pub fn continuous_to_actions(raw: &[f64], p_max_w: f64) -> Vec<FollowerAction> {
    assert_eq!(raw.len() % 3, 0, "3 action components per follower");
    raw.chunks_exact(3)
        .map(|c| FollowerAction { delta: c[0], p_v2v_w: c[1] * p_max_w, p_v2i_w: c[2] * p_max_w })
        .collect()
}

/// Map one preset index per follower to concrete actions.
pub fn presets_to_actions(indices: &[usize], p_max_w: f64) -> Vec<FollowerAction> {
    indices.iter().map(|&i| decode(i, p_max_w)).collect()
}

/// Trailing moving average; entry `i` covers the window ending at `i`.
/// Output length is `xs.len() - window + 1`.
pub fn moving_average(xs: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1 && window <= xs.len());
    let mut out = Vec::with_capacity(xs.len() - window + 1);
    let mut sum: f64 = xs[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..xs.len() {
        sum += xs[i] - xs[i - window];
        out.push(sum / window as f64);
    }
    out
}

#[derive(Debug, Clone)]
pub enum AgentNet {
    Dqn(DqnAgent),
    Ddpg(DdpgAgent),
    Sac(SacAgent),
}

/// A policy network bundled with the interface contract it was trained
/// under. Everything needed to act greedily in a compatible episode.
#[derive(Debug, Clone)]
pub struct TrainedAgent {
    pub algo: Algo,
    pub topology: Topology,
    pub objective: Objective,
    pub n_vehicles: usize,
    pub net: AgentNet,
}

impl TrainedAgent {
    pub fn label(&self) -> String {
        format!("{}-{}-{}", self.algo.name(), self.topology.name(), self.objective.name())
    }

    /// Deterministic actions for the current slot. `prev_reward` feeds the
    /// decentralized observation and is ignored by centralized policies.
    pub fn greedy_actions(&self, ep: &EpisodeState, prev_reward: Option<f64>) -> Vec<FollowerAction> {
        assert_eq!(ep.cfg().n_vehicles, self.n_vehicles, "policy trained for a different fleet size");
        let p_max = ep.cfg().p_max_w;
        match self.topology {
            Topology::Centralized => {
                let s = state::centralized(ep);
                match &self.net {
                    AgentNet::Dqn(a) => presets_to_actions(&a.greedy(&s), p_max),
                    AgentNet::Ddpg(a) => continuous_to_actions(&a.greedy(&s), p_max),
                    AgentNet::Sac(a) => continuous_to_actions(&a.greedy(&s), p_max),
                }
            }
            Topology::Decentralized => ep
                .follower_ids()
                .into_iter()
                .map(|f| {
                    let s = state::decentralized(ep, f, prev_reward);
                    match &self.net {
                        AgentNet::Dqn(a) => decode(a.greedy(&s)[0], p_max),
                        AgentNet::Ddpg(a) => continuous_to_actions(&a.greedy(&s), p_max)[0],
                        AgentNet::Sac(a) => continuous_to_actions(&a.greedy(&s), p_max)[0],
                    }
                })
                .collect(),
        }
    }

    /// Exploration/temperature parameter worth logging for this algorithm.
    pub fn epsilon_or_alpha(&self) -> f64 {
        match &self.net {
            AgentNet::Dqn(a) => a.epsilon,
            AgentNet::Ddpg(_) => f64::NAN,
            AgentNet::Sac(a) => a.alpha(),
        }
    }
}

/// Per-episode training log row.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    /// Sum over slots of the capped objective cost (no penalty terms).
    pub objective_total: f64,
    /// Total constraint violations across slots and vehicles.
    pub violations: usize,
    /// Epsilon (value-based), NaN (deterministic-policy), or alpha (max-ent).
    pub epsilon_or_alpha: f64,
    /// Milliseconds since training started.
    pub wallclock_ms: u64,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub agent: TrainedAgent,
    pub episodes: Vec<EpisodeRecord>,
}

fn continuous_action_dim(topology: Topology, n_followers: usize) -> usize {
    match topology {
        Topology::Centralized => 3 * n_followers,
        Topology::Decentralized => 3,
    }
}

/// Run the full training loop and return the trained policy plus the
/// per-episode log. `episodes_override` trims or extends the configured
/// episode count (used by short smoke runs).
pub fn train(
    cfg: &ExperimentConfig,
    algo: Algo,
    topology: Topology,
    objective: Objective,
    master_seed: u64,
    episodes_override: Option<usize>,
) -> TrainResult {
    let sim = &cfg.sim;
    let ac = &cfg.agent;
    let n_followers = sim.n_followers();
    let episodes = episodes_override.unwrap_or(ac.episodes);
    let mut agent_rng = ChaCha12Rng::seed_from_u64(mix_seed(master_seed, streams::AGENT, 0));
    let state_dim = match topology {
        Topology::Centralized => sim.centralized_state_dim(),
        Topology::Decentralized => sim.decentralized_state_dim(),
    };
    let mut net = match algo {
        Algo::Dqn => {
            let heads = match topology {
                Topology::Centralized => n_followers,
                Topology::Decentralized => 1,
            };
            AgentNet::Dqn(DqnAgent::new(state_dim, heads, PRESET_COUNT, ac, &mut agent_rng))
        }
        Algo::Ddpg => AgentNet::Ddpg(DdpgAgent::new(
            state_dim,
            continuous_action_dim(topology, n_followers),
            ac,
            &mut agent_rng,
        )),
        Algo::Sac => AgentNet::Sac(SacAgent::new(
            state_dim,
            continuous_action_dim(topology, n_followers),
            ac,
            &mut agent_rng,
        )),
    };

    let mut buffer = ReplayBuffer::new(ac.buffer_capacity);
    let mut records = Vec::with_capacity(episodes);
    let started = Instant::now();

    for epi in 0..episodes {
        let mut ep = EpisodeState::init(sim, mix_seed(master_seed, streams::TRAIN_ENV, epi as u64));
        let mut objective_total = 0.0;
        let mut violations = 0usize;
        let mut prev_reward: Option<f64> = None;

        while !ep.done() {
            match topology {
                Topology::Centralized => {
                    let s = state::centralized(&ep);
                    let (record, actions) = act_on(&mut net, &s, sim.p_max_w, &mut agent_rng);
                    let breakdown = ep.advance_slot(&actions);
                    let r = reward(sim, objective, &breakdown);
                    objective_total += breakdown.objective_value(objective).min(sim.objective_cap);
                    violations += breakdown.violations.count();
                    let done = ep.done();
                    let next_state = state::centralized(&ep);
                    buffer.push(Transition { state: s, action: record, reward: r, next_state, done });
                }
                Topology::Decentralized => {
                    let followers = ep.follower_ids();
                    let mut states = Vec::with_capacity(followers.len());
                    let mut recs = Vec::with_capacity(followers.len());
                    let mut actions = Vec::with_capacity(followers.len());
                    for &f in &followers {
                        let s = state::decentralized(&ep, f, prev_reward);
                        let (record, mut acts) = act_on(&mut net, &s, sim.p_max_w, &mut agent_rng);
                        debug_assert_eq!(acts.len(), 1);
                        states.push(s);
                        recs.push(record);
                        actions.push(acts.pop().unwrap());
                    }
                    let breakdown = ep.advance_slot(&actions);
                    let r = reward(sim, objective, &breakdown);
                    objective_total += breakdown.objective_value(objective).min(sim.objective_cap);
                    violations += breakdown.violations.count();
                    let done = ep.done();
                    for (i, &f) in followers.iter().enumerate() {
                        let next_state = state::decentralized(&ep, f, Some(r));
                        buffer.push(Transition {
                            state: std::mem::take(&mut states[i]),
                            action: recs[i].clone(),
                            reward: r,
                            next_state,
                            done,
                        });
                    }
                    prev_reward = Some(r);
                }
            }

            if buffer.len() >= ac.warmup_experiences {
                let batch = buffer.sample(ac.batch_size, &mut agent_rng);
                match &mut net {
                    AgentNet::Dqn(a) => {
                        a.update(&batch);
                    }
                    AgentNet::Ddpg(a) => {
                        a.update(&batch);
                    }
                    AgentNet::Sac(a) => {
                        a.update(&batch, &mut agent_rng);
                    }
                }
            }
        }

        match &mut net {
            AgentNet::Dqn(a) => a.decay_epsilon(),
            AgentNet::Ddpg(a) => a.end_episode(),
            AgentNet::Sac(_) => {}
        }
        records.push(EpisodeRecord {
            episode: epi,
            objective_total,
            violations,
            epsilon_or_alpha: match &net {
                AgentNet::Dqn(a) => a.epsilon,
                AgentNet::Ddpg(_) => f64::NAN,
                AgentNet::Sac(a) => a.alpha(),
            },
            wallclock_ms: started.elapsed().as_millis() as u64,
        });
    }

    TrainResult {
        agent: TrainedAgent { algo, topology, objective, n_vehicles: sim.n_vehicles, net },
        episodes: records,
    }
}

/// One exploratory step of whichever agent is active. Returns the replay
/// record plus the decoded per-follower action(s) the state vector covers.
fn act_on<R: Rng + ?Sized>(
    net: &mut AgentNet,
    state: &[f64],
    p_max_w: f64,
    rng: &mut R,
) -> (ActionRecord, Vec<FollowerAction>) {
    match net {
        AgentNet::Dqn(a) => {
            let idx = a.act(state, rng);
            let actions = presets_to_actions(&idx, p_max_w);
            (ActionRecord::Presets(idx), actions)
        }
        AgentNet::Ddpg(a) => {
            let raw = a.act(state, rng);
            let actions = continuous_to_actions(&raw, p_max_w);
            (ActionRecord::Continuous(raw), actions)
        }
        AgentNet::Sac(a) => {
            let raw = a.act(state, rng);
            let actions = continuous_to_actions(&raw, p_max_w);
            (ActionRecord::Continuous(raw), actions)
        }
    }
}

/// What to run during greedy evaluation.
#[derive(Debug, Clone, Copy)]
pub enum EvalPolicy<'a> {
    Baseline(BaselineKind),
    Trained(&'a TrainedAgent),
}

impl EvalPolicy<'_> {
    pub fn label(&self) -> String {
        match self {
            EvalPolicy::Baseline(k) => k.name().to_string(),
            EvalPolicy::Trained(t) => t.label(),
        }
    }
}

/// Aggregate greedy-evaluation statistics over a batch of fresh episodes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub label: String,
    pub episodes: usize,
    pub mean_time_s: f64,
    pub std_time_s: f64,
    pub mean_energy_j: f64,
    pub std_energy_j: f64,
    /// Mean constraint violations per episode.
    pub mean_violations: f64,
    /// Action-component means over all slots and followers.
    pub mean_delta: f64,
    pub mean_v2v_frac: f64,
    pub mean_v2i_frac: f64,
    /// Mean split ratio per slot index, averaged over followers and episodes.
    pub per_slot_mean_delta: Vec<f64>,
    /// Per-episode totals, in evaluation order (paired across policies that
    /// share a master seed).
    pub episode_time_s: Vec<f64>,
    pub episode_energy_j: Vec<f64>,
}

impl EvalSummary {
    pub fn mean_objective(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Time => self.mean_time_s,
            Objective::Energy => self.mean_energy_j,
        }
    }

    /// Half-width of the normal-approximation 95% confidence interval.
    pub fn ci95_time(&self) -> f64 {
        1.96 * self.std_time_s / (self.episodes as f64).sqrt()
    }

    pub fn ci95_energy(&self) -> f64 {
        1.96 * self.std_energy_j / (self.episodes as f64).sqrt()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn sample_std(xs: &[f64], m: f64) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// Greedy evaluation on a fresh episode stream. Episode `i` always uses the
/// same seed for a given `master_seed`, so different policies can be
/// compared with common random numbers.
pub fn evaluate(sim: &SimConfig, policy: EvalPolicy<'_>, episodes: usize, master_seed: u64) -> EvalSummary {
    assert!(episodes > 0);
    let n_followers = sim.n_followers();
    let horizon = sim.horizon_slots;
    let mut episode_time = Vec::with_capacity(episodes);
    let mut episode_energy = Vec::with_capacity(episodes);
    let mut violations_total = 0usize;
    let mut delta_sum = 0.0;
    let mut v2v_sum = 0.0;
    let mut v2i_sum = 0.0;
    let mut per_slot_delta = vec![0.0; horizon];

    for i in 0..episodes {
        let mut ep = EpisodeState::init(sim, mix_seed(master_seed, streams::EVAL_ENV, i as u64));
        let mut prev_reward: Option<f64> = None;
        let mut time_total = 0.0;
        let mut energy_total = 0.0;
        while !ep.done() {
            let slot = ep.slot;
            let actions = match &policy {
                EvalPolicy::Baseline(k) => vec![k.action(sim.p_max_w); n_followers],
                EvalPolicy::Trained(t) => t.greedy_actions(&ep, prev_reward),
            };
            for a in &actions {
                delta_sum += a.delta;
                v2v_sum += a.p_v2v_w / sim.p_max_w;
                v2i_sum += a.p_v2i_w / sim.p_max_w;
                per_slot_delta[slot] += a.delta;
            }
            let breakdown = ep.advance_slot(&actions);
            if let EvalPolicy::Trained(t) = &policy {
                prev_reward = Some(reward(sim, t.objective, &breakdown));
            }
            time_total += breakdown.f_time.min(sim.objective_cap);
            energy_total += breakdown.f_energy.min(sim.objective_cap);
            violations_total += breakdown.violations.count();
        }
        episode_time.push(time_total);
        episode_energy.push(energy_total);
    }

    let action_count = (episodes * horizon * n_followers) as f64;
    let mean_time_s = mean(&episode_time);
    let mean_energy_j = mean(&episode_energy);
    EvalSummary {
        label: policy.label(),
        episodes,
        mean_time_s,
        std_time_s: sample_std(&episode_time, mean_time_s),
        mean_energy_j,
        std_energy_j: sample_std(&episode_energy, mean_energy_j),
        mean_violations: violations_total as f64 / episodes as f64,
        mean_delta: delta_sum / action_count,
        mean_v2v_frac: v2v_sum / action_count,
        mean_v2i_frac: v2i_sum / action_count,
        per_slot_mean_delta: per_slot_delta
            .into_iter()
            .map(|s| s / (episodes * n_followers) as f64)
            .collect(),
        episode_time_s: episode_time,
        episode_energy_j: episode_energy,
    }
}
