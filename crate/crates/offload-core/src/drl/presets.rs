//! The 25-entry discrete action catalogue for Q-learning agents.
//!
//! Each preset is (delta, p_v2v / p_max, p_v2i / p_max). The list spans the
//! two pure strategies, a ladder of offload fractions at full power, and
//! reduced-power variants of each fraction.

use crate::cost::FollowerAction;

pub const PRESET_COUNT: usize = 25;

pub const PRESETS: [(f64, f64, f64); PRESET_COUNT] = [
    (0.0, 0.0, 1.0),
    (1.0, 1.0, 0.0),
    (0.1, 1.0, 1.0),
    (0.1, 0.6, 0.8),
    (0.2, 1.0, 1.0),
    (0.2, 0.6, 0.8),
    (0.3, 1.0, 1.0),
    (0.3, 0.6, 0.8),
    (0.4, 1.0, 1.0),
    (0.4, 0.7, 0.7),
    (0.5, 1.0, 1.0),
    (0.5, 0.7, 0.7),
    (0.6, 1.0, 1.0),
    (0.6, 0.7, 0.7),
    (0.3, 0.4, 0.6),
    (0.4, 0.5, 0.6),
    (0.5, 0.5, 0.5),
    (0.6, 0.6, 0.5),
    (0.7, 0.6, 0.4),
    (0.7, 1.0, 1.0),
    (0.7, 0.8, 0.6),
    (0.8, 1.0, 1.0),
    (0.8, 0.8, 0.6),
    (0.9, 1.0, 1.0),
    (0.9, 0.8, 0.6),
];

/// Map a preset index to a concrete action, scaling powers by `p_max_w`.
/// Panics on an out-of-range index.
pub fn decode(index: usize, p_max_w: f64) -> FollowerAction {
    let (delta, v2v, v2i) = PRESETS[index];
    FollowerAction::new(delta, v2v * p_max_w, v2i * p_max_w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalogue_has_twenty_five_distinct_entries() {
        assert_eq!(PRESETS.len(), 25);
        for i in 0..PRESETS.len() {
            for j in i + 1..PRESETS.len() {
                assert_ne!(PRESETS[i], PRESETS[j], "presets {i} and {j} collide");
            }
        }
    }

    #[test]
    fn endpoints_and_midpoint_decode_as_documented() {
        let p = 0.2;
        assert_eq!(decode(0, p), FollowerAction::new(0.0, 0.0, 0.2));
        assert_eq!(decode(1, p), FollowerAction::new(1.0, 0.2, 0.0));
        assert_eq!(decode(2, p), FollowerAction::new(0.1, 0.2, 0.2));
        assert_eq!(decode(16, p), FollowerAction::new(0.5, 0.1, 0.1));
        assert_eq!(decode(24, p), FollowerAction::new(0.9, 0.8 * p, 0.6 * p));
    }

    #[test]
    fn every_preset_is_a_legal_action() {
        for i in 0..PRESET_COUNT {
            let a = decode(i, 0.2);
            assert!((0.0..=1.0).contains(&a.delta));
            assert!((0.0..=0.2).contains(&a.p_v2v_w));
            assert!((0.0..=0.2).contains(&a.p_v2i_w));
        }
    }

    #[test]
    #[should_panic]
    fn out_of_range_index_panics() {
        decode(25, 0.2);
    }
}
