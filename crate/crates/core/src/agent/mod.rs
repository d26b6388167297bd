//! Adversarial agent: observation extraction, attacker selection, and a
//! Q-learning controller over the five-action space.

mod net;
mod replay;
mod trainer;

pub use net::{Adam, Gradients, QNet};
pub use replay::ReplayBuffer;
pub use trainer::{
    evaluate_policy, run_training, EpisodeStat, EvalSummary, PolicyInstance, PolicySpec,
    TrainConfig, Trainer, TrainingOutput,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::region::{
    boundary_distance_x, danger_distance_x, safety_distance_x, SafetyParams,
};
use crate::sim::{Role, VehicleId, WorldState};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("no non-ego vehicles to select an attacker from")]
    NoCandidates,
    #[error("replay buffer holds {len} transitions, need {need}")]
    BufferUnderflow { len: usize, need: usize },
    #[error("attacker {0} missing from world")]
    MissingAttacker(VehicleId),
}

/// The observation: ten scalars encoding the nine observed quantities (the
/// NPC position contributes two).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdpState {
    pub d_x_danger: f64,
    pub d_x_boundary: f64,
    pub d_x_safety: f64,
    pub x_npc: f64,
    pub y_npc: f64,
    /// 1.0 when the attacker and ego resolve to the same lane, else 0.0.
    pub same_lane: f64,
    /// Signed rear-bumper offset, attacker minus ego.
    pub d_x_ego_npc: f64,
    /// Signed lateral center offset, attacker minus ego.
    pub d_y_ego_npc: f64,
    pub d_rel: f64,
    /// Signed speed difference, attacker minus ego.
    pub v_rel: f64,
}

pub const STATE_DIM: usize = 10;

/// Normalization applied before the value network; raw values stay in logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScales {
    pub distance: f64,
    pub speed: f64,
}

impl Default for FeatureScales {
    fn default() -> Self {
        Self {
            distance: 100.0,
            speed: 40.0,
        }
    }
}

impl MdpState {
    pub fn features(&self, scales: &FeatureScales) -> [f64; STATE_DIM] {
        let d = scales.distance;
        let s = scales.speed;
        [
            self.d_x_danger / d,
            self.d_x_boundary / d,
            self.d_x_safety / d,
            self.x_npc / d,
            self.y_npc / d,
            self.same_lane,
            self.d_x_ego_npc / d,
            self.d_y_ego_npc / d,
            self.d_rel / d,
            self.v_rel / s,
        ]
    }
}

/// One replay-buffer entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub state: MdpState,
    pub action: usize,
    pub reward: f64,
    pub next_state: MdpState,
    pub terminal: bool,
}

/// Epsilon-greedy over the network's action values; greedy ties resolve to
/// the lowest action index.
pub fn epsilon_greedy_action(
    net: &QNet,
    features: &[f64],
    epsilon: f64,
    rng: &mut crate::rng::StreamRng,
) -> usize {
    if rng.chance(epsilon) {
        rng.below(crate::sim::ACTION_COUNT)
    } else {
        net.argmax_action(features)
    }
}

/// Observe the world from the attacker's perspective.
pub fn extract_state(
    world: &WorldState,
    attacker_id: VehicleId,
    params: &SafetyParams,
) -> Result<MdpState, AgentError> {
    let npc = world
        .vehicle(attacker_id)
        .ok_or(AgentError::MissingAttacker(attacker_id))?;
    let ego = world.ego();
    let d_x = npc.x - ego.x;
    let d_y = npc.y - ego.y;
    Ok(MdpState {
        d_x_danger: danger_distance_x(ego.v, npc.v, params),
        d_x_boundary: boundary_distance_x(ego.v, npc.v, params),
        d_x_safety: safety_distance_x(ego.v, npc.v, params),
        x_npc: npc.x,
        y_npc: npc.y,
        same_lane: if npc.lane == ego.lane { 1.0 } else { 0.0 },
        d_x_ego_npc: d_x,
        d_y_ego_npc: d_y,
        d_rel: (d_x * d_x + d_y * d_y).sqrt(),
        v_rel: npc.v - ego.v,
    })
}

/// Pick the vehicle to hand to RL control: the nearest slower NPC ahead of
/// the ego within `attacker_range`, falling back to the overall nearest NPC.
/// Ties break toward the lower id.
pub fn select_attacker(
    world: &WorldState,
    attacker_range: f64,
) -> Result<VehicleId, AgentError> {
    let ego = world.ego();
    let npcs: Vec<_> = world
        .vehicles
        .iter()
        .filter(|v| v.role != Role::Ego)
        .collect();
    if npcs.is_empty() {
        return Err(AgentError::NoCandidates);
    }

    let threat = npcs
        .iter()
        .filter(|v| {
            let ahead = v.x - ego.x;
            ahead > 0.0 && ahead <= attacker_range && v.v < ego.v
        })
        .min_by(|a, b| {
            (a.x - ego.x)
                .total_cmp(&(b.x - ego.x))
                .then(a.id.cmp(&b.id))
        });
    if let Some(v) = threat {
        return Ok(v.id);
    }

    let nearest = npcs
        .iter()
        .min_by(|a, b| {
            let da = (a.x - ego.x).hypot(a.y - ego.y);
            let db = (b.x - ego.x).hypot(b.y - ego.y);
            da.total_cmp(&db).then(a.id.cmp(&b.id))
        })
        .expect("non-empty");
    Ok(nearest.id)
}
