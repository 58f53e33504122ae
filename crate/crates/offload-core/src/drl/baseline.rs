//! Fixed offloading policies used as evaluation references.

use crate::cost::FollowerAction;

/// A static per-follower policy applied at every slot regardless of state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    /// Keep everything local to the follower's own uplink: delta = 0,
    /// no V2V spend, full power on V2I.
    AllBase,
    /// Route everything through the relay: delta = 1, full power on V2V,
    /// V2I idle.
    AllLeader,
    /// Split evenly with full power on both links.
    Balanced,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] =
        [BaselineKind::AllBase, BaselineKind::AllLeader, BaselineKind::Balanced];

    pub fn name(self) -> &'static str {
        match self {
            BaselineKind::AllBase => "all-base",
            BaselineKind::AllLeader => "all-leader",
            BaselineKind::Balanced => "balanced",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "all-base" => Some(BaselineKind::AllBase),
            "all-leader" => Some(BaselineKind::AllLeader),
            "balanced" => Some(BaselineKind::Balanced),
            _ => None,
        }
    }

    pub fn action(self, p_max_w: f64) -> FollowerAction {
        match self {
            BaselineKind::AllBase => FollowerAction { delta: 0.0, p_v2v_w: 0.0, p_v2i_w: p_max_w },
            BaselineKind::AllLeader => FollowerAction { delta: 1.0, p_v2v_w: p_max_w, p_v2i_w: 0.0 },
            BaselineKind::Balanced => {
                FollowerAction { delta: 0.5, p_v2v_w: p_max_w, p_v2i_w: p_max_w }
            }
        }
    }
}
