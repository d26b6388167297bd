//! Rule-based ego controller.
//!
//! The vehicle under test is pluggable: anything implementing [`EgoPolicy`]
//! can drive. The default follows the same IDM longitudinal law as the
//! background traffic plus an evasive rule that prefers an escape lane over
//! emergency braking when the lead time-to-collision drops below a threshold.

use serde::{Deserialize, Serialize};

use crate::sim::background::{discretize_accel, idm_accel, BackgroundParams};
use crate::sim::{occupies_lane, KinematicAction, VehicleState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EgoParams {
    /// Desired speed, m/s.
    pub v0: f64,
    /// IDM comfortable acceleration, m/s^2.
    pub a_idm: f64,
    /// IDM comfortable braking, m/s^2.
    pub b_idm: f64,
    /// Standstill minimum gap, m.
    pub s0: f64,
    /// Desired time headway, s.
    pub t_headway: f64,
    /// Lead TTC below which the evasive rule engages, s.
    pub ttc_evade: f64,
    /// Clearance required ahead in an escape lane, m.
    pub side_gap_lead: f64,
    /// Clearance required behind in an escape lane, m.
    pub side_gap_rear: f64,
    /// IDM acceleration advantage that justifies an overtake, m/s^2.
    pub overtake_threshold: f64,
}

impl Default for EgoParams {
    fn default() -> Self {
        Self {
            v0: 32.0,
            a_idm: 2.0,
            b_idm: 2.5,
            s0: 2.0,
            t_headway: 1.2,
            ttc_evade: 1.5,
            side_gap_lead: 12.0,
            side_gap_rear: 8.0,
            overtake_threshold: 0.4,
        }
    }
}

impl EgoParams {
    fn as_idm(&self) -> BackgroundParams {
        BackgroundParams {
            a_idm: self.a_idm,
            b_idm: self.b_idm,
            s0: self.s0,
            t_headway: self.t_headway,
            v0: self.v0,
            v0_spread: 0.0,
            ..BackgroundParams::default()
        }
    }
}

/// A replaceable controller for the vehicle under test. Implementations must
/// be pure functions of the observed world.
pub trait EgoPolicy {
    fn act(&self, world: &WorldState) -> KinematicAction;
}

/// The default rule-based ego.
#[derive(Debug, Clone, Default)]
pub struct RuleBasedEgo {
    pub params: EgoParams,
}

impl EgoPolicy for RuleBasedEgo {
    fn act(&self, world: &WorldState) -> KinematicAction {
        default_ego_action(world, &self.params)
    }
}

fn gap_ahead(world: &WorldState, me: &VehicleState, lane: usize) -> Option<(f64, f64)> {
    world
        .vehicles
        .iter()
        .filter(|o| o.id != me.id && o.x > me.x && occupies_lane(o, lane))
        .map(|o| (o.x - me.front(), o.v))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn gap_behind(world: &WorldState, me: &VehicleState, lane: usize) -> Option<f64> {
    world
        .vehicles
        .iter()
        .filter(|o| o.id != me.id && o.x <= me.x && occupies_lane(o, lane))
        .map(|o| me.x - o.front())
        .min_by(f64::total_cmp)
}

/// Evasive-then-IDM rule. Pure in `world` and `params`; the caps used for
/// discretization are the ego defaults.
pub fn default_ego_action(world: &WorldState, params: &EgoParams) -> KinematicAction {
    let ego = world.ego();
    if ego.changing_lane() {
        return KinematicAction::KeepSpeed;
    }

    let lead = gap_ahead(world, ego, ego.lane);
    let lead_ttc = lead.and_then(|(gap, v_lead)| {
        if gap > 0.0 && ego.v > v_lead {
            Some(gap / (ego.v - v_lead))
        } else {
            None
        }
    });

    if let (Some(ttc), Some((own_gap, _))) = (lead_ttc, lead) {
        if ttc < params.ttc_evade {
            // Escape lane: strictly more room ahead and clear alongside.
            let mut escape: Option<(KinematicAction, f64)> = None;
            let candidates = [
                (ego.lane + 1, KinematicAction::LaneLeft),
                (ego.lane.wrapping_sub(1), KinematicAction::LaneRight),
            ];
            for (lane, action) in candidates {
                if lane >= world.geometry.lane_count {
                    continue;
                }
                let front = gap_ahead(world, ego, lane).map(|(g, _)| g).unwrap_or(f64::INFINITY);
                let rear = gap_behind(world, ego, lane).unwrap_or(f64::INFINITY);
                if front > own_gap && front >= params.side_gap_lead && rear >= params.side_gap_rear
                {
                    match escape {
                        // Strict comparison keeps the left lane on ties.
                        Some((_, best)) if best >= front => {}
                        _ => escape = Some((action, front)),
                    }
                }
            }
            if let Some((action, _)) = escape {
                return action;
            }
            return KinematicAction::DecelMax;
        }
    }

    let idm = params.as_idm();
    let accel = idm_accel(ego.v, params.v0, lead, &idm);

    // Overtake: the leader is costing acceleration and a side lane is both
    // clearer and safe. Keeps the vehicle under test speed-seeking instead of
    // settling behind slower traffic.
    if lead.is_some() {
        let mut best: Option<(KinematicAction, f64)> = None;
        let candidates = [
            (ego.lane + 1, KinematicAction::LaneLeft),
            (ego.lane.wrapping_sub(1), KinematicAction::LaneRight),
        ];
        for (lane, action) in candidates {
            if lane >= world.geometry.lane_count {
                continue;
            }
            let side_lead = gap_ahead(world, ego, lane);
            let front = side_lead.map(|(g, _)| g).unwrap_or(f64::INFINITY);
            let rear = gap_behind(world, ego, lane).unwrap_or(f64::INFINITY);
            if front < params.side_gap_lead || rear < params.side_gap_rear {
                continue;
            }
            let side_accel = idm_accel(ego.v, params.v0, side_lead, &idm);
            let advantage = side_accel - accel;
            if advantage > params.overtake_threshold {
                match best {
                    Some((_, b)) if b >= advantage => {}
                    _ => best = Some((action, advantage)),
                }
            }
        }
        if let Some((action, _)) = best {
            return action;
        }
    }

    discretize_accel(accel, &crate::sim::RoleCaps::default())
}
