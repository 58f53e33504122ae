//! Observation vectors.
//!
//! Channel gains enter as log10 (they span many decades), distances are
//! normalized by a fixed constant, and time enters as the fraction of the
//! horizon elapsed. The decentralized view adds the previous slot's system
//! reward, scaled and clipped to [-1, 1].

use crate::sim::EpisodeState;

/// Scale constant for the previous-reward feature.
const REWARD_NORM: f64 = 10.0;

pub fn reward_feature(prev_system_reward: Option<f64>) -> f64 {
    match prev_system_reward {
        None => 0.0,
        Some(r) => (r / REWARD_NORM).clamp(-1.0, 1.0),
    }
}

/// Fleet-wide observation: follower V2I gains (log10, ascending vehicle
/// index), follower V2V-to-leader gains (log10, same order), every
/// vehicle's normalized base-station distance (ascending index), and the
/// slot fraction. Length 3N - 1.
pub fn centralized(ep: &EpisodeState) -> Vec<f64> {
    let cfg = ep.cfg();
    let followers = ep.follower_ids();
    let mut s = Vec::with_capacity(cfg.centralized_state_dim());
    for &i in &followers {
        s.push(ep.v2i_gain_of(i).log10());
    }
    for &i in &followers {
        s.push(ep.v2v_gain_between(i, ep.leader).log10());
    }
    for i in 0..cfg.n_vehicles {
        s.push(ep.bs_distance(i) / cfg.distance_norm_m);
    }
    s.push(ep.slot_fraction());
    debug_assert_eq!(s.len(), cfg.centralized_state_dim());
    s
}

/// One follower's local observation: own V2I gain (log10), own link to the
/// leader (log10), own and leader normalized base-station distances, slot
/// fraction, previous system reward feature. Length 6.
pub fn decentralized(ep: &EpisodeState, follower: usize, prev_system_reward: Option<f64>) -> Vec<f64> {
    debug_assert_ne!(follower, ep.leader);
    let cfg = ep.cfg();
    vec![
        ep.v2i_gain_of(follower).log10(),
        ep.v2v_gain_between(follower, ep.leader).log10(),
        ep.bs_distance(follower) / cfg.distance_norm_m,
        ep.bs_distance(ep.leader) / cfg.distance_norm_m,
        ep.slot_fraction(),
        reward_feature(prev_system_reward),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::SimConfig;
    use approx::assert_relative_eq;

    #[test]
    fn centralized_layout_and_length() {
        let cfg = SimConfig::default();
        let ep = EpisodeState::init(&cfg, 4);
        let s = centralized(&ep);
        assert_eq!(s.len(), 14);
        let followers = ep.follower_ids();
        assert_relative_eq!(s[0], ep.v2i_gain_of(followers[0]).log10(), max_relative = 1e-12);
        assert_relative_eq!(
            s[4],
            ep.v2v_gain_between(followers[0], ep.leader).log10(),
            max_relative = 1e-12
        );
        assert_relative_eq!(s[8], ep.bs_distance(0) / 1000.0, max_relative = 1e-12);
        // First slot: no time has elapsed.
        assert_eq!(s[13], 0.0);
    }

    #[test]
    fn decentralized_layout_and_reward_feature() {
        let cfg = SimConfig::default();
        let ep = EpisodeState::init(&cfg, 4);
        let f = ep.follower_ids()[1];
        let s = decentralized(&ep, f, None);
        assert_eq!(s.len(), 6);
        assert_relative_eq!(s[0], ep.v2i_gain_of(f).log10(), max_relative = 1e-12);
        assert_relative_eq!(s[3], ep.bs_distance(ep.leader) / 1000.0, max_relative = 1e-12);
        assert_eq!(s[5], 0.0);

        assert_relative_eq!(reward_feature(Some(-5.0)), -0.5, max_relative = 1e-12);
        assert_eq!(reward_feature(Some(-1e9)), -1.0);
        assert_eq!(reward_feature(Some(1e9)), 1.0);
    }

    #[test]
    fn gains_enter_on_a_log_scale() {
        let cfg = SimConfig::default();
        let ep = EpisodeState::init(&cfg, 11);
        for (k, &i) in ep.follower_ids().iter().enumerate() {
            let s = centralized(&ep);
            let g = ep.v2i_gain_of(i);
            assert_relative_eq!(s[k], g.log10(), max_relative = 1e-12);
            assert!(s[k] < 0.0, "desk-scale gains sit far below unity");
        }
    }

    #[test]
    fn slot_fraction_advances_with_time() {
        let cfg = SimConfig::default();
        let mut ep = EpisodeState::init(&cfg, 5);
        let acts = vec![crate::cost::FollowerAction::new(0.0, 0.0, 0.2); 4];
        ep.advance_slot(&acts);
        ep.advance_slot(&acts);
        let s = centralized(&ep);
        assert_relative_eq!(s[13], 2.0 / 30.0, max_relative = 1e-12);
        let d = decentralized(&ep, ep.follower_ids()[0], Some(-2.0));
        assert_relative_eq!(d[4], 2.0 / 30.0, max_relative = 1e-12);
        assert_relative_eq!(d[5], -0.2, max_relative = 1e-12);
    }
}
