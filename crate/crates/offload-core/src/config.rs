//! Experiment configuration and the flat `key = value` config file format.
//!
//! Files contain one `key = value` pair per line, `#` starts a comment,
//! blank lines are ignored. Every key has a default; unknown or duplicate
//! keys are hard errors carrying the offending line number.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::FadingMode;

/// Physical scenario: road, fleet, channel, data, dedup and budget constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    // --- fleet and road ---
    pub n_vehicles: usize,
    pub horizon_slots: usize,
    pub slot_seconds: f64,
    pub road_length_m: f64,
    pub spawn_max_m: f64,
    pub speed_min_mps: f64,
    pub speed_max_mps: f64,
    pub bs_x_m: f64,
    pub bs_y_m: f64,

    // --- channel ---
    pub bandwidth_v2v_hz: f64,
    pub bandwidth_v2i_hz: f64,
    pub noise_psd_w_per_hz: f64,
    pub p_max_w: f64,
    pub leader_upload_power_w: f64,
    pub ref_distance_m: f64,
    pub ref_gain_v2v: f64,
    pub ref_gain_v2i: f64,
    pub pathloss_exp_v2v: f64,
    pub pathloss_exp_v2i: f64,
    pub fading: FadingMode,
    pub shadowing_sigma_db: f64,

    // --- data and dedup ---
    pub chunk_bits: f64,
    /// Analytical per-follower redundancy ratio used when no byte-level
    /// payloads are simulated.
    pub redundancy: f64,
    pub cycles_per_bit: f64,
    pub cycles_per_subchunk: f64,
    pub avg_subchunk_bits: f64,
    pub cycles_per_chunk: f64,
    pub leader_cpu_hz: f64,
    pub cpu_energy_coeff: f64,
    /// Weight of leader CPU frequency in the leader election score.
    pub leader_cpu_weight: f64,

    // --- soft budgets and reward shaping ---
    pub t_max_s: f64,
    pub e_max_j: f64,
    pub penalty_weight: f64,
    /// Infeasible transmissions keep a +inf sentinel in logs but enter
    /// rewards clamped to this value.
    pub objective_cap: f64,

    // --- byte-level dedup (content-defined sub-chunking) ---
    pub subchunk_min_bytes: usize,
    pub subchunk_avg_bytes: usize,
    pub subchunk_max_bytes: usize,
    /// Retain the leader's fingerprint store across slots instead of
    /// resetting it every slot.
    pub cross_slot_store: bool,

    // --- observation scaling ---
    pub distance_norm_m: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_vehicles: 5,
            horizon_slots: 30,
            slot_seconds: 1.0,
            road_length_m: 1000.0,
            spawn_max_m: 50.0,
            speed_min_mps: 10.0,
            speed_max_mps: 15.0,
            bs_x_m: 200.0,
            bs_y_m: 0.0,
            bandwidth_v2v_hz: 1e7,
            bandwidth_v2i_hz: 2e7,
            noise_psd_w_per_hz: 4e-21,
            p_max_w: 0.2,
            leader_upload_power_w: 0.9,
            ref_distance_m: 1.0,
            ref_gain_v2v: 2e-5,
            ref_gain_v2i: 2e-5,
            pathloss_exp_v2v: 3.5,
            pathloss_exp_v2i: 3.5,
            fading: FadingMode::RayleighMean,
            shadowing_sigma_db: 0.0,
            chunk_bits: 2e7,
            redundancy: 0.5,
            cycles_per_bit: 10.0,
            cycles_per_subchunk: 0.0,
            avg_subchunk_bits: 65536.0,
            cycles_per_chunk: 1e6,
            leader_cpu_hz: 2.8e9,
            cpu_energy_coeff: 1e-27,
            leader_cpu_weight: 0.0,
            t_max_s: 1.0,
            e_max_j: 1.0,
            penalty_weight: 1.0,
            objective_cap: 1e6,
            subchunk_min_bytes: 2048,
            subchunk_avg_bytes: 8192,
            subchunk_max_bytes: 65536,
            cross_slot_store: false,
            distance_norm_m: 1000.0,
        }
    }
}

impl SimConfig {
    pub fn n_followers(&self) -> usize {
        self.n_vehicles - 1
    }

    /// Observation width for the joint (centralized) controller:
    /// follower V2I gains, follower V2V gains, all vehicle distances,
    /// slot fraction.
    pub fn centralized_state_dim(&self) -> usize {
        3 * self.n_vehicles - 1
    }

    /// Observation width for the per-follower (decentralized) controller.
    pub fn decentralized_state_dim(&self) -> usize {
        6
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n_vehicles < 2 {
            return Err(ConfigError::Invalid("n_vehicles must be at least 2".into()));
        }
        if self.horizon_slots == 0 {
            return Err(ConfigError::Invalid("horizon_slots must be positive".into()));
        }
        if !(self.redundancy >= 0.0 && self.redundancy <= 1.0) {
            return Err(ConfigError::Invalid("redundancy must lie in [0, 1]".into()));
        }
        if self.speed_min_mps > self.speed_max_mps {
            return Err(ConfigError::Invalid("speed_min_mps exceeds speed_max_mps".into()));
        }
        if self.subchunk_min_bytes == 0
            || self.subchunk_min_bytes > self.subchunk_avg_bytes
            || self.subchunk_avg_bytes > self.subchunk_max_bytes
        {
            return Err(ConfigError::Invalid(
                "subchunk sizes must satisfy 0 < min <= avg <= max".into(),
            ));
        }
        if self.p_max_w <= 0.0 || self.leader_upload_power_w <= 0.0 {
            return Err(ConfigError::Invalid("transmit powers must be positive".into()));
        }
        Ok(())
    }
}

/// Learning hyperparameters shared by every agent variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub buffer_capacity: usize,
    pub warmup_experiences: usize,
    pub batch_size: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub lr_dqn: f64,
    pub lr_ddpg_actor: f64,
    pub lr_ddpg_critic: f64,
    pub lr_sac: f64,
    pub epsilon_start: f64,
    pub epsilon_floor: f64,
    pub epsilon_decay: f64,
    pub target_copy_interval: usize,
    pub tau_ddpg: f64,
    pub tau_sac: f64,
    pub ou_theta: f64,
    pub ou_sigma: f64,
    pub ou_scale: f64,
    pub sac_alpha_init: f64,
    pub grad_clip_dqn: f64,
    pub grad_clip_ddpg: f64,
    pub grad_clip_sac: f64,
    pub episodes: usize,
    pub eval_episodes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            buffer_capacity: 500_000,
            warmup_experiences: 10_000,
            batch_size: 256,
            hidden_width: 256,
            hidden_layers: 2,
            lr_dqn: 1e-4,
            lr_ddpg_actor: 1e-5,
            lr_ddpg_critic: 5e-4,
            lr_sac: 1e-4,
            epsilon_start: 0.3,
            epsilon_floor: 0.05,
            epsilon_decay: 0.999,
            target_copy_interval: 100,
            tau_ddpg: 0.001,
            tau_sac: 0.005,
            ou_theta: 0.1,
            ou_sigma: 0.05,
            ou_scale: 0.1,
            sac_alpha_init: 0.05,
            grad_clip_dqn: 1.0,
            grad_clip_ddpg: 0.5,
            grad_clip_sac: 1.0,
            episodes: 5000,
            eval_episodes: 100,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub sim: SimConfig,
    pub agent: AgentConfig,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    DuplicateKey { line: usize, key: String },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Malformed { line: usize, text: String },
    #[error("line {line}: bad value for `{key}`: {message}")]
    BadValue { line: usize, key: String, message: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

macro_rules! setters {
    ($($key:literal => $field:ident : $kind:ident),+ $(,)?) => {
        fn apply(cfg: &mut ExperimentConfig, key: &str, value: &str, line: usize)
            -> Result<bool, ConfigError>
        {
            match key {
                $($key => {
                    setters!(@set cfg, $field, $kind, key, value, line);
                    Ok(true)
                })+
                _ => Ok(false),
            }
        }
    };
    (@set $cfg:ident, $field:ident, sim_f64, $key:ident, $value:ident, $line:ident) => {
        $cfg.sim.$field = parse_f64($key, $value, $line)?
    };
    (@set $cfg:ident, $field:ident, sim_usize, $key:ident, $value:ident, $line:ident) => {
        $cfg.sim.$field = parse_usize($key, $value, $line)?
    };
    (@set $cfg:ident, $field:ident, sim_bool, $key:ident, $value:ident, $line:ident) => {
        $cfg.sim.$field = parse_bool($key, $value, $line)?
    };
    (@set $cfg:ident, $field:ident, sim_fading, $key:ident, $value:ident, $line:ident) => {
        $cfg.sim.$field = parse_fading($key, $value, $line)?
    };
    (@set $cfg:ident, $field:ident, agent_f64, $key:ident, $value:ident, $line:ident) => {
        $cfg.agent.$field = parse_f64($key, $value, $line)?
    };
    (@set $cfg:ident, $field:ident, agent_usize, $key:ident, $value:ident, $line:ident) => {
        $cfg.agent.$field = parse_usize($key, $value, $line)?
    };
}

setters! {
    "n_vehicles" => n_vehicles: sim_usize,
    "horizon_slots" => horizon_slots: sim_usize,
    "slot_seconds" => slot_seconds: sim_f64,
    "road_length_m" => road_length_m: sim_f64,
    "spawn_max_m" => spawn_max_m: sim_f64,
    "speed_min_mps" => speed_min_mps: sim_f64,
    "speed_max_mps" => speed_max_mps: sim_f64,
    "bs_x_m" => bs_x_m: sim_f64,
    "bs_y_m" => bs_y_m: sim_f64,
    "bandwidth_v2v_hz" => bandwidth_v2v_hz: sim_f64,
    "bandwidth_v2i_hz" => bandwidth_v2i_hz: sim_f64,
    "noise_psd_w_per_hz" => noise_psd_w_per_hz: sim_f64,
    "p_max_w" => p_max_w: sim_f64,
    "leader_upload_power_w" => leader_upload_power_w: sim_f64,
    "ref_distance_m" => ref_distance_m: sim_f64,
    "ref_gain_v2v" => ref_gain_v2v: sim_f64,
    "ref_gain_v2i" => ref_gain_v2i: sim_f64,
    "pathloss_exp_v2v" => pathloss_exp_v2v: sim_f64,
    "pathloss_exp_v2i" => pathloss_exp_v2i: sim_f64,
    "fading" => fading: sim_fading,
    "shadowing_sigma_db" => shadowing_sigma_db: sim_f64,
    "chunk_bits" => chunk_bits: sim_f64,
    "redundancy" => redundancy: sim_f64,
    "cycles_per_bit" => cycles_per_bit: sim_f64,
    "cycles_per_subchunk" => cycles_per_subchunk: sim_f64,
    "avg_subchunk_bits" => avg_subchunk_bits: sim_f64,
    "cycles_per_chunk" => cycles_per_chunk: sim_f64,
    "leader_cpu_hz" => leader_cpu_hz: sim_f64,
    "cpu_energy_coeff" => cpu_energy_coeff: sim_f64,
    "leader_cpu_weight" => leader_cpu_weight: sim_f64,
    "t_max_s" => t_max_s: sim_f64,
    "e_max_j" => e_max_j: sim_f64,
    "penalty_weight" => penalty_weight: sim_f64,
    "objective_cap" => objective_cap: sim_f64,
    "subchunk_min_bytes" => subchunk_min_bytes: sim_usize,
    "subchunk_avg_bytes" => subchunk_avg_bytes: sim_usize,
    "subchunk_max_bytes" => subchunk_max_bytes: sim_usize,
    "cross_slot_store" => cross_slot_store: sim_bool,
    "distance_norm_m" => distance_norm_m: sim_f64,
    "gamma" => gamma: agent_f64,
    "buffer_capacity" => buffer_capacity: agent_usize,
    "warmup_experiences" => warmup_experiences: agent_usize,
    "batch_size" => batch_size: agent_usize,
    "hidden_width" => hidden_width: agent_usize,
    "hidden_layers" => hidden_layers: agent_usize,
    "lr_dqn" => lr_dqn: agent_f64,
    "lr_ddpg_actor" => lr_ddpg_actor: agent_f64,
    "lr_ddpg_critic" => lr_ddpg_critic: agent_f64,
    "lr_sac" => lr_sac: agent_f64,
    "epsilon_start" => epsilon_start: agent_f64,
    "epsilon_floor" => epsilon_floor: agent_f64,
    "epsilon_decay" => epsilon_decay: agent_f64,
    "target_copy_interval" => target_copy_interval: agent_usize,
    "tau_ddpg" => tau_ddpg: agent_f64,
    "tau_sac" => tau_sac: agent_f64,
    "ou_theta" => ou_theta: agent_f64,
    "ou_sigma" => ou_sigma: agent_f64,
    "ou_scale" => ou_scale: agent_f64,
    "sac_alpha_init" => sac_alpha_init: agent_f64,
    "grad_clip_dqn" => grad_clip_dqn: agent_f64,
    "grad_clip_ddpg" => grad_clip_ddpg: agent_f64,
    "grad_clip_sac" => grad_clip_sac: agent_f64,
    "episodes" => episodes: agent_usize,
    "eval_episodes" => eval_episodes: agent_usize,
}

fn parse_f64(key: &str, value: &str, line: usize) -> Result<f64, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: format!("`{value}` is not a number"),
    })
}

fn parse_usize(key: &str, value: &str, line: usize) -> Result<usize, ConfigError> {
    value.parse().map_err(|_| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: format!("`{value}` is not a non-negative integer"),
    })
}

fn parse_bool(key: &str, value: &str, line: usize) -> Result<bool, ConfigError> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(ConfigError::BadValue {
            line,
            key: key.to_string(),
            message: format!("`{value}` is not `true` or `false`"),
        }),
    }
}

fn parse_fading(key: &str, value: &str, line: usize) -> Result<FadingMode, ConfigError> {
    FadingMode::from_name(value).ok_or_else(|| ConfigError::BadValue {
        line,
        key: key.to_string(),
        message: format!("`{value}` is not one of unit, rayleigh, rayleigh_mean"),
    })
}

/// Parse a flat config file, overlaying defaults. Unknown keys, duplicate
/// keys, malformed lines and out-of-range results are errors.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = ExperimentConfig::default();
    let mut seen = std::collections::HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = match raw.find('#') {
            Some(pos) => &raw[..pos],
            None => raw,
        };
        let content = content.trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| ConfigError::Malformed {
            line,
            text: content.to_string(),
        })?;
        let key = key.trim();
        let value = value.trim();
        if key.is_empty() || value.is_empty() {
            return Err(ConfigError::Malformed { line, text: content.to_string() });
        }
        if !seen.insert(key.to_string()) {
            return Err(ConfigError::DuplicateKey { line, key: key.to_string() });
        }
        if !apply(&mut cfg, key, value, line)? {
            return Err(ConfigError::UnknownKey { line, key: key.to_string() });
        }
    }
    cfg.sim.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_empty_file() {
        let cfg = parse_config("").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
    }

    #[test]
    fn parses_overrides_and_comments() {
        let text = "
            # scenario
            n_vehicles = 7
            redundancy = 0.3   # trailing comment
            fading = unit
            cross_slot_store = true
            lr_sac = 3e-4
        ";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.sim.n_vehicles, 7);
        assert_eq!(cfg.sim.redundancy, 0.3);
        assert_eq!(cfg.sim.fading, FadingMode::Unit);
        assert!(cfg.sim.cross_slot_store);
        assert_eq!(cfg.agent.lr_sac, 3e-4);
    }

    #[test]
    fn unknown_key_reports_line() {
        let err = parse_config("n_vehicles = 5\nn_vehicle = 5\n").unwrap_err();
        match err {
            ConfigError::UnknownKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "n_vehicle");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_key_reports_line() {
        let err = parse_config("gamma = 0.9\ngamma = 0.8\n").unwrap_err();
        match err {
            ConfigError::DuplicateKey { line, key } => {
                assert_eq!(line, 2);
                assert_eq!(key, "gamma");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn malformed_line_and_bad_value_are_errors() {
        assert!(matches!(parse_config("just words\n"), Err(ConfigError::Malformed { line: 1, .. })));
        assert!(matches!(
            parse_config("n_vehicles = many\n"),
            Err(ConfigError::BadValue { line: 1, .. })
        ));
        assert!(matches!(parse_config("redundancy = 1.5\n"), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn state_dims_follow_cluster_size() {
        let mut sim = SimConfig::default();
        assert_eq!(sim.centralized_state_dim(), 14);
        sim.n_vehicles = 3;
        assert_eq!(sim.centralized_state_dim(), 8);
        assert_eq!(sim.decentralized_state_dim(), 6);
    }
}
