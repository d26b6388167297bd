//! Scenario-criticality measures and per-step training rewards.
//!
//! The classical car-following metrics (time-to-collision, time-to-brake,
//! required deceleration) drive the baseline reward kinds. The region reward
//! weighs the per-layer overlap areas of each NPC with the ego's nested
//! safety regions; summing it over an episode gives the scenario criticality
//! objective.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::{build_region_layers, overlap_areas, RegionOverlap, SafetyParams};
use crate::sim::{Role, VehicleId, VehicleState, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum CriticalityError {
    #[error("gap must be positive, got {0}")]
    DegenerateGap(f64),
}

/// Time until contact if both vehicles hold speed; `None` when the gap is not
/// closing.
pub fn ttc(gap: f64, v_follow: f64, v_lead: f64) -> Result<Option<f64>, CriticalityError> {
    if gap <= 0.0 {
        return Err(CriticalityError::DegenerateGap(gap));
    }
    if v_follow > v_lead {
        Ok(Some(gap / (v_follow - v_lead)))
    } else {
        Ok(None)
    }
}

/// Time budget before the follower must brake at `a_max_dece` to match the
/// lead speed: TTC plus half the speed surplus over the braking rate.
pub fn ttb(
    gap: f64,
    v_follow: f64,
    v_lead: f64,
    a_max_dece: f64,
) -> Result<Option<f64>, CriticalityError> {
    Ok(ttc(gap, v_follow, v_lead)?.map(|t| t + (v_follow - v_lead) / (2.0 * a_max_dece)))
}

/// Constant deceleration the follower needs to avoid contact; 0 when the gap
/// is opening.
pub fn drac(gap: f64, v_follow: f64, v_lead: f64) -> Result<f64, CriticalityError> {
    if gap <= 0.0 {
        return Err(CriticalityError::DegenerateGap(gap));
    }
    if v_follow > v_lead {
        let dv = v_follow - v_lead;
        Ok(dv * dv / (2.0 * gap))
    } else {
        Ok(0.0)
    }
}

/// Reward weights for presence in each region layer. These are weights, not a
/// normalized distribution; the boundary layer carries the largest weight so
/// that threatening-but-reactable positions dominate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionProbabilities {
    pub p_danger: f64,
    pub p_boundary: f64,
    pub p_safety: f64,
}

impl Default for RegionProbabilities {
    fn default() -> Self {
        Self {
            p_danger: 0.2,
            p_boundary: 0.6,
            p_safety: 0.2,
        }
    }
}

impl RegionProbabilities {
    pub fn validate(&self) -> Result<(), String> {
        if self.p_danger < 0.0 || self.p_boundary < 0.0 || self.p_safety < 0.0 {
            return Err("region weights must be nonnegative".into());
        }
        if self.p_boundary < self.p_danger || self.p_boundary < self.p_safety {
            return Err("boundary weight must dominate danger and safety".into());
        }
        Ok(())
    }

    pub fn weigh(&self, overlap: &RegionOverlap) -> f64 {
        self.p_danger * overlap.s_danger
            + self.p_boundary * overlap.s_boundary
            + self.p_safety * overlap.s_safety
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    #[default]
    Region,
    Ttc,
    Ttb,
    Drac,
}

impl RewardKind {
    pub const ALL: [RewardKind; 4] = [
        RewardKind::Region,
        RewardKind::Ttc,
        RewardKind::Ttb,
        RewardKind::Drac,
    ];

    pub fn name(self) -> &'static str {
        match self {
            RewardKind::Region => "region",
            RewardKind::Ttc => "ttc",
            RewardKind::Ttb => "ttb",
            RewardKind::Drac => "drac",
        }
    }
}

impl std::str::FromStr for RewardKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "region" => Ok(RewardKind::Region),
            "ttc" => Ok(RewardKind::Ttc),
            "ttb" => Ok(RewardKind::Ttb),
            "drac" => Ok(RewardKind::Drac),
            other => Err(format!(
                "unknown reward kind '{other}'; valid kinds: region, ttc, ttb, drac"
            )),
        }
    }
}

impl std::fmt::Display for RewardKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalityConfig {
    pub probabilities: RegionProbabilities,
    pub reward_kind: RewardKind,
    /// TTC saturation threshold for the ttc reward, s.
    pub ttc_threshold: f64,
    /// TTB saturation threshold for the ttb reward, s.
    pub ttb_threshold: f64,
    /// DRAC cap for the drac reward, m/s^2.
    pub drac_cap: f64,
    /// Restrict the region sum to the attacker instead of all NPCs.
    pub attacker_only: bool,
}

impl Default for CriticalityConfig {
    fn default() -> Self {
        Self {
            probabilities: RegionProbabilities::default(),
            reward_kind: RewardKind::Region,
            ttc_threshold: 4.0,
            ttb_threshold: 5.0,
            drac_cap: 4.0,
            attacker_only: false,
        }
    }
}

impl CriticalityConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.probabilities.validate()?;
        if self.ttc_threshold <= 0.0 || self.ttb_threshold <= 0.0 || self.drac_cap <= 0.0 {
            return Err("criticality thresholds must be positive".into());
        }
        Ok(())
    }
}

/// Weighted region overlap of one NPC with the ego's layers.
pub fn npc_region_overlap(
    ego: &VehicleState,
    npc: &VehicleState,
    params: &SafetyParams,
) -> RegionOverlap {
    let layers = build_region_layers(ego, npc.v, npc.lateral_v, params);
    overlap_areas(&npc.body(), &layers)
}

/// Region-kind reward: the weighted overlap areas summed over NPC vehicles
/// (or the attacker alone when configured).
pub fn region_step_reward(
    world: &WorldState,
    attacker_id: VehicleId,
    config: &CriticalityConfig,
    params: &SafetyParams,
) -> f64 {
    let ego = world.ego();
    world
        .vehicles
        .iter()
        .filter(|v| v.role != Role::Ego)
        .filter(|v| !config.attacker_only || v.id == attacker_id)
        .map(|npc| config.probabilities.weigh(&npc_region_overlap(ego, npc, params)))
        .sum()
}

/// Car-following geometry between the ego and the attacker: follower speed,
/// leader speed, and bumper-to-bumper gap along the lane axis. `None` when
/// they neither share a lane nor overlap laterally, or when the gap is not
/// positive.
fn ego_attacker_following(world: &WorldState, attacker_id: VehicleId) -> Option<(f64, f64, f64)> {
    let ego = world.ego();
    let npc = world.vehicle(attacker_id)?;
    let lateral_overlap = {
        let a = ego.body();
        let b = npc.body();
        a.y_min.max(b.y_min) < a.y_max.min(b.y_max)
    };
    if !(ego.lane == npc.lane || lateral_overlap) {
        return None;
    }
    let (follower, leader) = if ego.x <= npc.x { (ego, npc) } else { (npc, ego) };
    let gap = leader.x - follower.front();
    if gap <= 0.0 {
        return None;
    }
    Some((gap, follower.v, leader.v))
}

/// Per-step training reward for the configured kind. All kinds are
/// nonnegative; the baselines are linear saturating transforms that preserve
/// the "smaller TTC / larger DRAC is more critical" ordering.
pub fn step_reward(
    world: &WorldState,
    attacker_id: VehicleId,
    config: &CriticalityConfig,
    params: &SafetyParams,
) -> f64 {
    match config.reward_kind {
        RewardKind::Region => region_step_reward(world, attacker_id, config, params),
        RewardKind::Ttc => match ego_attacker_following(world, attacker_id) {
            Some((gap, vf, vl)) => match ttc(gap, vf, vl) {
                Ok(Some(t)) => ((config.ttc_threshold - t) / config.ttc_threshold).max(0.0),
                _ => 0.0,
            },
            None => 0.0,
        },
        RewardKind::Ttb => match ego_attacker_following(world, attacker_id) {
            Some((gap, vf, vl)) => match ttb(gap, vf, vl, params.a_max_dece) {
                Ok(Some(t)) => ((config.ttb_threshold - t) / config.ttb_threshold).max(0.0),
                _ => 0.0,
            },
            None => 0.0,
        },
        RewardKind::Drac => match ego_attacker_following(world, attacker_id) {
            Some((gap, vf, vl)) => match drac(gap, vf, vl) {
                Ok(d) => d.min(config.drac_cap) / config.drac_cap,
                _ => 0.0,
            },
            None => 0.0,
        },
    }
}

/// Scenario-criticality objective of a finished episode: the region-kind
/// step rewards recomputed from the logged states and summed over all steps,
/// independent of the reward kind used for training.
pub fn episode_criticality(
    log: &crate::episode::EpisodeLog,
    config: &CriticalityConfig,
    params: &SafetyParams,
) -> f64 {
    log.steps[1..]
        .iter()
        .map(|record| {
            let world = WorldState {
                t: record.t,
                step_index: record.step,
                vehicles: record.vehicle_states(&log.header.config),
                geometry: log.header.config.geometry,
                rng: crate::rng::StreamRng::new(0, crate::rng::STREAM_ENV),
            };
            region_step_reward(&world, record.attacker, config, params)
        })
        .sum()
}
