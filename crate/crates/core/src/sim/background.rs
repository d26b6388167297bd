//! Surrogate background-traffic behavior.
//!
//! Longitudinal control is the Intelligent Driver Model,
//!
//! ```text
//! a = a_idm * (1 - (v/v0)^4 - (s*/s)^2)
//! s* = s0 + v*T + v*dv / (2*sqrt(a_idm*b_idm))
//! ```
//!
//! discretized onto the five-action space by thresholding at half the
//! acceleration cap. Lane changes use an incentive rule with a politeness
//! term, hard safety gaps, and stochastic hesitation drawn from the world's
//! seeded stream.

use serde::{Deserialize, Serialize};

use crate::rng::StreamRng;
use crate::sim::{occupies_lane, KinematicAction, RoleCaps, VehicleId, VehicleState, WorldState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackgroundParams {
    /// IDM comfortable acceleration, m/s^2.
    pub a_idm: f64,
    /// IDM comfortable braking, m/s^2.
    pub b_idm: f64,
    /// Standstill minimum gap, m.
    pub s0: f64,
    /// Desired time headway, s.
    pub t_headway: f64,
    /// Fleet-median desired speed, m/s.
    pub v0: f64,
    /// Half-range of per-vehicle desired-speed variation, m/s.
    pub v0_spread: f64,
    /// Weight of the new follower's loss in the lane-change incentive.
    pub politeness: f64,
    /// Net acceleration advantage required to change lanes, m/s^2.
    pub lc_threshold: f64,
    /// Hard minimum gap to the new leader when changing, m.
    pub min_lc_gap_lead: f64,
    /// Hard minimum gap to the new follower when changing, m.
    pub min_lc_gap_rear: f64,
    /// Maximum braking a change may force on the new follower, m/s^2.
    pub b_safe: f64,
    /// Probability of postponing an otherwise accepted lane change.
    pub hesitation: f64,
}

impl Default for BackgroundParams {
    fn default() -> Self {
        Self {
            a_idm: 1.5,
            b_idm: 2.0,
            s0: 2.0,
            t_headway: 1.5,
            v0: 26.0,
            v0_spread: 4.0,
            politeness: 0.3,
            lc_threshold: 0.2,
            min_lc_gap_lead: 10.0,
            min_lc_gap_rear: 10.0,
            b_safe: 3.0,
            hesitation: 0.5,
        }
    }
}

impl BackgroundParams {
    /// Per-vehicle desired speed: the fleet median plus a deterministic
    /// id-keyed offset in [-v0_spread, +v0_spread].
    pub fn desired_speed(&self, id: VehicleId) -> f64 {
        const GOLDEN: f64 = 0.618_033_988_749_895;
        let frac = (f64::from(id.0) * GOLDEN).fract();
        self.v0 + self.v0_spread * (2.0 * frac - 1.0)
    }
}

/// IDM acceleration for follower speed `v`, desired speed `v0`, and an
/// optional leader `(gap, v_lead)`.
pub fn idm_accel(v: f64, v0: f64, leader: Option<(f64, f64)>, params: &BackgroundParams) -> f64 {
    let free = 1.0 - (v / v0).powi(4);
    let interaction = match leader {
        None => 0.0,
        Some((gap, v_lead)) => {
            let dv = v - v_lead;
            let s_star =
                params.s0 + v * params.t_headway + v * dv / (2.0 * (params.a_idm * params.b_idm).sqrt());
            // Only the physical part of the desired gap; a negative s* would
            // otherwise reward tailgating a faster leader.
            let s_star = s_star.max(0.0);
            let gap = gap.max(1e-3);
            (s_star / gap).powi(2)
        }
    };
    params.a_idm * (free - interaction)
}

/// Map a continuous acceleration request onto the discrete action set by
/// thresholding at half the role's acceleration cap.
pub fn discretize_accel(a: f64, caps: &RoleCaps) -> KinematicAction {
    let threshold = 0.5 * caps.accel;
    if a > threshold {
        KinematicAction::AccelMax
    } else if a < -threshold {
        KinematicAction::DecelMax
    } else {
        KinematicAction::KeepSpeed
    }
}

fn neighbor_ahead(world: &WorldState, me: &VehicleState, lane: usize) -> Option<(f64, f64)> {
    world
        .vehicles
        .iter()
        .filter(|o| o.id != me.id && o.x > me.x && occupies_lane(o, lane))
        .map(|o| (o.x - me.front(), o.v))
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn neighbor_behind<'a>(
    world: &'a WorldState,
    me: &VehicleState,
    lane: usize,
) -> Option<(&'a VehicleState, f64)> {
    world
        .vehicles
        .iter()
        .filter(|o| o.id != me.id && o.x <= me.x && occupies_lane(o, lane))
        .map(|o| (o, me.x - o.front()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
}

/// Decide the next action for one background vehicle. Deterministic given the
/// world and its stream state; never commands a lane change into a gap below
/// the configured safety gaps.
pub fn background_action(
    vehicle: &VehicleState,
    world: &WorldState,
    params: &BackgroundParams,
    caps: &RoleCaps,
    rng: &mut StreamRng,
) -> KinematicAction {
    if vehicle.changing_lane() {
        return KinematicAction::KeepSpeed;
    }
    let v0 = params.desired_speed(vehicle.id);
    let own_leader = neighbor_ahead(world, vehicle, vehicle.lane);
    let a_current = idm_accel(vehicle.v, v0, own_leader, params);

    // Evaluate both adjacent lanes; keep the best admissible candidate.
    let mut best: Option<(KinematicAction, f64)> = None;
    let candidates = [
        (vehicle.lane + 1, KinematicAction::LaneLeft),
        (vehicle.lane.wrapping_sub(1), KinematicAction::LaneRight),
    ];
    for (lane, action) in candidates {
        if lane >= world.geometry.lane_count {
            continue; // wrapping_sub(1) from lane 0 lands here too
        }
        let new_leader = neighbor_ahead(world, vehicle, lane);
        if let Some((gap, _)) = new_leader {
            if gap < params.min_lc_gap_lead {
                continue;
            }
        }
        let new_follower = neighbor_behind(world, vehicle, lane);
        let mut follower_delta = 0.0;
        if let Some((follower, rear_gap)) = new_follower {
            if rear_gap < params.min_lc_gap_rear {
                continue;
            }
            let f_v0 = params.desired_speed(follower.id);
            let f_before = idm_accel(follower.v, f_v0, neighbor_ahead(world, follower, lane), params);
            let f_after =
                idm_accel(follower.v, f_v0, Some((vehicle.x - follower.front(), vehicle.v)), params);
            if f_after < -params.b_safe {
                continue;
            }
            follower_delta = f_after - f_before;
        }
        let a_target = idm_accel(vehicle.v, v0, new_leader, params);
        let incentive = a_target - a_current + params.politeness * follower_delta;
        if incentive > params.lc_threshold {
            match best {
                Some((_, best_inc)) if best_inc >= incentive => {}
                _ => best = Some((action, incentive)),
            }
        }
    }

    if let Some((action, _)) = best {
        if !rng.chance(params.hesitation) {
            return action;
        }
    }

    discretize_accel(a_current, caps)
}

/// Decide actions for every background vehicle, in id order, appending to
/// `actions` (which already holds the ego's and attacker's commands).
///
/// Lane-change commitments made earlier in the same step are provisionally
/// marked on the world so later deciders see them; otherwise two vehicles in
/// the outer lanes can both claim the same center-lane gap simultaneously.
pub fn plan_background_actions(
    world: &mut WorldState,
    params: &BackgroundParams,
    caps: &RoleCaps,
    actions: &mut crate::sim::ActionMap,
) {
    use crate::sim::Role;

    let lane_count = world.geometry.lane_count;
    let target_of = |v: &VehicleState, action: KinematicAction| -> Option<usize> {
        match action {
            KinematicAction::LaneLeft if v.lane + 1 < lane_count => Some(v.lane + 1),
            KinematicAction::LaneRight => v.lane.checked_sub(1),
            _ => None,
        }
    };

    let mut marked: Vec<crate::sim::VehicleId> = Vec::new();
    // Pre-committed commands (ego, attacker) become visible first.
    let pre: Vec<(crate::sim::VehicleId, KinematicAction)> =
        actions.iter().map(|(&id, &a)| (id, a)).collect();
    for (id, action) in pre {
        if let Some(v) = world.vehicle_mut(id) {
            if v.target_lane.is_none() {
                if let Some(target) = target_of(&v.clone(), action) {
                    v.target_lane = Some(target);
                    marked.push(id);
                }
            }
        }
    }

    let ids: Vec<crate::sim::VehicleId> = world
        .vehicles
        .iter()
        .filter(|v| v.role == Role::Background)
        .map(|v| v.id)
        .collect();
    let mut rng = std::mem::replace(&mut world.rng, StreamRng::new(0, crate::rng::STREAM_ENV));
    for id in ids {
        let vehicle = world.vehicle(id).expect("listed above").clone();
        let action = background_action(&vehicle, world, params, caps, &mut rng);
        actions.insert(id, action);
        if let Some(target) = target_of(&vehicle, action) {
            if let Some(v) = world.vehicle_mut(id) {
                v.target_lane = Some(target);
                marked.push(id);
            }
        }
    }
    world.rng = rng;

    // Clear the provisional marks; step_world initiates the changes properly.
    for id in marked {
        if let Some(v) = world.vehicle_mut(id) {
            v.target_lane = None;
        }
    }
}
