//! Per-slot cost chain.
//!
//! Followers split their sensing chunk between a V2V hop to the leader
//! (fraction delta) and a direct V2I upload (fraction 1 - delta). The leader
//! deduplicates what it received and uploads the unique remainder on its own
//! V2I link at a fixed transmit power. Slot latency under the time objective
//! is the sum of every follower's transmission time plus the leader's dedup
//! and upload stages; the energy objective sums the matching radio and CPU
//! energies. Infeasible transmissions (positive data over a zero-rate link)
//! propagate +inf, which the reward caps while logs keep the raw value.

use serde::{Deserialize, Serialize};

use crate::channel::shannon_rate;
use crate::config::SimConfig;
use crate::dedup::{data_volumes, dedup_energy, dedup_time, DedupParams};

/// One follower's control decision for a slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FollowerAction {
    /// Fraction of the chunk relayed through the leader, in [0, 1].
    pub delta: f64,
    /// V2V transmit power in watts.
    pub p_v2v_w: f64,
    /// V2I transmit power in watts.
    pub p_v2i_w: f64,
}

impl FollowerAction {
    pub fn new(delta: f64, p_v2v_w: f64, p_v2i_w: f64) -> Self {
        FollowerAction { delta, p_v2v_w, p_v2i_w }
    }
}

/// Channel and data state of one follower at the moment costs are computed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FollowerLink {
    /// Power gain of the follower's V2V link to the leader.
    pub v2v_gain: f64,
    /// Power gain of the follower's V2I link to the base station.
    pub v2i_gain: f64,
    /// Chunk size in bits.
    pub chunk_bits: f64,
    /// Redundancy ratio of this follower's chunk at the leader.
    pub redundancy: f64,
}

/// Which objective the scalar slot cost aggregates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    Time,
    Energy,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Time => "time",
            Objective::Energy => "energy",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "time" => Some(Objective::Time),
            "energy" => Some(Objective::Energy),
            _ => None,
        }
    }
}

/// Per-constraint breach flags for one slot.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Violations {
    pub follower_time: Vec<bool>,
    pub follower_energy: Vec<bool>,
    pub leader_time: bool,
    pub leader_energy: bool,
}

impl Violations {
    pub fn count(&self) -> usize {
        self.follower_time.iter().filter(|&&v| v).count()
            + self.follower_energy.iter().filter(|&&v| v).count()
            + usize::from(self.leader_time)
            + usize::from(self.leader_energy)
    }
}

/// Every intermediate of one slot's cost computation, per follower where
/// applicable. Values may be +inf when a link with positive traffic has
/// zero rate; aggregation preserves that.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotCostBreakdown {
    pub t_v2v: Vec<f64>,
    pub t_v2i: Vec<f64>,
    /// Per-follower transmission latency, max of the two paths.
    pub t_trans: Vec<f64>,
    pub e_trans: Vec<f64>,
    pub received_bits: f64,
    pub unique_bits: f64,
    pub t_dedup: f64,
    pub e_dedup: f64,
    pub t_upload: f64,
    pub e_upload: f64,
    /// Slot latency: sum of follower latencies plus dedup plus upload.
    pub f_time: f64,
    /// Slot energy: radio energies plus dedup CPU energy.
    pub f_energy: f64,
    pub violations: Violations,
}

impl SlotCostBreakdown {
    pub fn objective_value(&self, objective: Objective) -> f64 {
        match objective {
            Objective::Time => self.f_time,
            Objective::Energy => self.f_energy,
        }
    }

    /// Header row for the per-slot CSV log.
    pub fn csv_header(n_followers: usize) -> String {
        let mut cols = vec!["slot".to_string()];
        for tag in ["t_v2v", "t_v2i", "t_trans", "e_trans"] {
            for j in 0..n_followers {
                cols.push(format!("{tag}_{j}"));
            }
        }
        for tag in [
            "received_bits",
            "unique_bits",
            "t_dedup",
            "e_dedup",
            "t_upload",
            "e_upload",
            "f_time",
            "f_energy",
            "violations",
        ] {
            cols.push(tag.to_string());
        }
        cols.join(",")
    }

    /// One CSV row; infinite latencies print as `inf`.
    pub fn csv_row(&self, slot: usize) -> String {
        fn fmt(x: f64) -> String {
            if x.is_infinite() {
                "inf".to_string()
            } else {
                format!("{x:.9e}")
            }
        }
        let mut cols = vec![slot.to_string()];
        for series in [&self.t_v2v, &self.t_v2i, &self.t_trans, &self.e_trans] {
            cols.extend(series.iter().map(|&x| fmt(x)));
        }
        for x in [
            self.received_bits,
            self.unique_bits,
            self.t_dedup,
            self.e_dedup,
            self.t_upload,
            self.e_upload,
            self.f_time,
            self.f_energy,
        ] {
            cols.push(fmt(x));
        }
        cols.push(self.violations.count().to_string());
        cols.join(",")
    }
}

/// Transmission time for `bits` over a link of rate `rate_bps`, with the
/// convention that zero data costs zero time even on a dead link.
fn transfer_time(bits: f64, rate_bps: f64) -> f64 {
    if bits <= 0.0 {
        0.0
    } else if rate_bps <= 0.0 {
        f64::INFINITY
    } else {
        bits / rate_bps
    }
}

/// Compute the full cost chain for one slot.
pub fn slot_costs(
    cfg: &SimConfig,
    followers: &[FollowerLink],
    actions: &[FollowerAction],
    leader_v2i_gain: f64,
) -> SlotCostBreakdown {
    assert_eq!(followers.len(), actions.len(), "one action per follower");
    let n = followers.len();
    let mut t_v2v = Vec::with_capacity(n);
    let mut t_v2i = Vec::with_capacity(n);
    let mut t_trans = Vec::with_capacity(n);
    let mut e_trans = Vec::with_capacity(n);
    let mut deltas = Vec::with_capacity(n);
    let mut chunk_bits = Vec::with_capacity(n);
    let mut redundancy = Vec::with_capacity(n);

    for (link, act) in followers.iter().zip(actions) {
        debug_assert!((0.0..=1.0).contains(&act.delta));
        let r_v2v = shannon_rate(act.p_v2v_w, link.v2v_gain, cfg.bandwidth_v2v_hz, cfg.noise_psd_w_per_hz);
        let r_v2i = shannon_rate(act.p_v2i_w, link.v2i_gain, cfg.bandwidth_v2i_hz, cfg.noise_psd_w_per_hz);
        let tv = transfer_time(act.delta * link.chunk_bits, r_v2v);
        let ti = transfer_time((1.0 - act.delta) * link.chunk_bits, r_v2i);
        t_v2v.push(tv);
        t_v2i.push(ti);
        t_trans.push(tv.max(ti));
        // 0 W * inf s would be NaN; a powered-off path spends nothing.
        let ev = if act.p_v2v_w > 0.0 { act.p_v2v_w * tv } else { 0.0 };
        let ei = if act.p_v2i_w > 0.0 { act.p_v2i_w * ti } else { 0.0 };
        e_trans.push(ev + ei);
        deltas.push(act.delta);
        chunk_bits.push(link.chunk_bits);
        redundancy.push(link.redundancy);
    }

    let (received_bits, unique_bits) = data_volumes(&deltas, &chunk_bits, &redundancy);
    let params = DedupParams::from_config(cfg);
    let t_dedup = dedup_time(received_bits, n, &params, cfg.leader_cpu_hz);
    let e_dedup = dedup_energy(cfg.cpu_energy_coeff, cfg.leader_cpu_hz, t_dedup);

    let r_up = shannon_rate(
        cfg.leader_upload_power_w,
        leader_v2i_gain,
        cfg.bandwidth_v2i_hz,
        cfg.noise_psd_w_per_hz,
    );
    let t_upload = transfer_time(unique_bits, r_up);
    let e_upload = if cfg.leader_upload_power_w > 0.0 && t_upload > 0.0 {
        cfg.leader_upload_power_w * t_upload
    } else {
        0.0
    };

    let f_time = t_trans.iter().sum::<f64>() + t_dedup + t_upload;
    let f_energy = e_trans.iter().sum::<f64>() + e_dedup + e_upload;

    let violations = Violations {
        follower_time: t_trans.iter().map(|&t| t > cfg.t_max_s).collect(),
        follower_energy: e_trans.iter().map(|&e| e > cfg.e_max_j).collect(),
        leader_time: t_dedup + t_upload > cfg.t_max_s,
        leader_energy: e_dedup + e_upload > cfg.e_max_j,
    };

    SlotCostBreakdown {
        t_v2v,
        t_v2i,
        t_trans,
        e_trans,
        received_bits,
        unique_bits,
        t_dedup,
        e_dedup,
        t_upload,
        e_upload,
        f_time,
        f_energy,
        violations,
    }
}

/// Scalar reward: negated objective value, capped so infeasible slots stay
/// finite, minus the weighted count of budget violations.
pub fn reward(cfg: &SimConfig, objective: Objective, breakdown: &SlotCostBreakdown) -> f64 {
    let f = breakdown.objective_value(objective).min(cfg.objective_cap);
    -f - cfg.penalty_weight * breakdown.violations.count() as f64
}
