//! Deterministic discrete-time kinematics on a straight multi-lane highway.
//!
//! Vehicles are axis-aligned rectangles; there is no heading state. A lane
//! change is a pure lateral translation at constant rate, and longitudinal
//! motion uses a trapezoidal position update that is exact for piecewise
//! constant acceleration.

mod background;
mod ego;
mod init;
mod step;

pub use background::{background_action, plan_background_actions, BackgroundParams};
pub use ego::{default_ego_action, EgoParams, EgoPolicy, RuleBasedEgo};
pub use init::init_scenario;
pub use step::{detect_collisions, step_world, ActionMap, IllegalActionKind, StepOutcome};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::StreamRng;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("cannot place {requested} background vehicles: only {available} feasible slots")]
    InfeasiblePlacement { requested: usize, available: usize },
    #[error("invalid scenario config: {0}")]
    InvalidConfig(String),
    #[error("vehicle {0} not found")]
    UnknownVehicle(VehicleId),
}

/// Stable vehicle identifier; id 0 is always the ego.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Ego,
    RlAttacker,
    Background,
}

/// Straight road made of parallel lanes; lane `i` is centered at
/// `(i + 0.5) * lane_width`, with `i` increasing toward +y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneGeometry {
    pub lane_count: usize,
    pub lane_width: f64,
    pub road_length: f64,
}

impl Default for LaneGeometry {
    fn default() -> Self {
        Self {
            lane_count: 3,
            lane_width: 4.0,
            road_length: 500.0,
        }
    }
}

impl LaneGeometry {
    pub fn lane_center(&self, lane: usize) -> f64 {
        (lane as f64 + 0.5) * self.lane_width
    }

    /// Index of the lane whose center is nearest to `y` (clamped to the road).
    pub fn nearest_lane(&self, y: f64) -> usize {
        if y <= 0.0 {
            return 0;
        }
        let idx = (y / self.lane_width).floor() as usize;
        idx.min(self.lane_count - 1)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.lane_count < 2 {
            return Err(SimError::InvalidConfig("lane_count must be >= 2".into()));
        }
        if self.lane_width <= 0.0 {
            return Err(SimError::InvalidConfig("lane_width must be > 0".into()));
        }
        if self.road_length <= 0.0 {
            return Err(SimError::InvalidConfig("road_length must be > 0".into()));
        }
        Ok(())
    }
}

/// Kinematic state of one vehicle. `x` is the rear-bumper reference and `y`
/// the lateral body center; the body occupies `[x, x + length] x [y - width/2,
/// y + width/2]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub role: Role,
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub lateral_v: f64,
    pub lane: usize,
    pub length: f64,
    pub width: f64,
    pub target_lane: Option<usize>,
}

impl VehicleState {
    pub fn front(&self) -> f64 {
        self.x + self.length
    }

    pub fn body(&self) -> crate::region::Rect {
        crate::region::Rect::new(
            self.x,
            self.front(),
            self.y - 0.5 * self.width,
            self.y + 0.5 * self.width,
        )
    }

    pub fn changing_lane(&self) -> bool {
        self.target_lane.is_some()
    }
}

/// The five discrete maneuvers a controlled vehicle can command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KinematicAction {
    LaneLeft,
    LaneRight,
    DecelMax,
    KeepSpeed,
    AccelMax,
}

pub const ACTION_COUNT: usize = 5;

impl KinematicAction {
    pub const ALL: [KinematicAction; ACTION_COUNT] = [
        KinematicAction::LaneLeft,
        KinematicAction::LaneRight,
        KinematicAction::DecelMax,
        KinematicAction::KeepSpeed,
        KinematicAction::AccelMax,
    ];

    pub fn index(self) -> usize {
        match self {
            KinematicAction::LaneLeft => 0,
            KinematicAction::LaneRight => 1,
            KinematicAction::DecelMax => 2,
            KinematicAction::KeepSpeed => 3,
            KinematicAction::AccelMax => 4,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl std::fmt::Display for KinematicAction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            KinematicAction::LaneLeft => "lane_left",
            KinematicAction::LaneRight => "lane_right",
            KinematicAction::DecelMax => "decel_max",
            KinematicAction::KeepSpeed => "keep_speed",
            KinematicAction::AccelMax => "accel_max",
        };
        f.write_str(s)
    }
}

/// Longitudinal acceleration/deceleration caps and the speed ceiling applied
/// when integrating an action.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleCaps {
    pub accel: f64,
    pub decel: f64,
    pub v_max: f64,
}

impl Default for RoleCaps {
    fn default() -> Self {
        Self {
            accel: 2.0,
            decel: 4.0,
            v_max: 40.0,
        }
    }
}

/// Contact between two vehicle rectangles with strictly positive overlap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub a: VehicleId,
    pub b: VehicleId,
    pub overlap_area: f64,
    /// Longitudinal speed of `a` minus that of `b` at contact.
    pub rel_v: f64,
    pub lateral_v_a: f64,
    pub lateral_v_b: f64,
}

impl ContactEvent {
    pub fn involves(&self, id: VehicleId) -> bool {
        self.a == id || self.b == id
    }

    pub fn other(&self, id: VehicleId) -> Option<VehicleId> {
        if self.a == id {
            Some(self.b)
        } else if self.b == id {
            Some(self.a)
        } else {
            None
        }
    }
}

/// Full simulation state; `t` and `step_index` satisfy `t = step_index * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldState {
    pub t: f64,
    pub step_index: u64,
    pub vehicles: Vec<VehicleState>,
    pub geometry: LaneGeometry,
    pub rng: StreamRng,
}

impl WorldState {
    pub fn vehicle(&self, id: VehicleId) -> Option<&VehicleState> {
        self.vehicles.iter().find(|v| v.id == id)
    }

    pub fn vehicle_mut(&mut self, id: VehicleId) -> Option<&mut VehicleState> {
        self.vehicles.iter_mut().find(|v| v.id == id)
    }

    pub fn ego(&self) -> &VehicleState {
        self.vehicles
            .iter()
            .find(|v| v.role == Role::Ego)
            .expect("world has no ego vehicle")
    }

    /// Nearest same-lane vehicle strictly ahead of `id`, with the
    /// bumper-to-bumper gap (negative while bodies overlap longitudinally).
    /// Mid-change vehicles count as occupying both source and target lane.
    pub fn leader_of(&self, id: VehicleId) -> Option<(&VehicleState, f64)> {
        let me = self.vehicle(id)?;
        self.vehicles
            .iter()
            .filter(|o| o.id != id && o.x > me.x && occupies_lane(o, me.lane))
            .map(|o| (o, o.x - me.front()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// Whether a vehicle occupies `lane` for car-following purposes: its resolved
/// lane, or the lane it is currently moving into.
pub fn occupies_lane(v: &VehicleState, lane: usize) -> bool {
    v.lane == lane || v.target_lane == Some(lane)
}

/// Scenario initialization and physics parameters for one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub geometry: LaneGeometry,
    pub dt: f64,
    pub episode_max_steps: u64,
    pub n_background: usize,
    pub spawn_speed_range: [f64; 2],
    pub spawn_gap_min: f64,
    pub ego_route_length: f64,
    pub lane_change_duration: f64,
    pub ego_caps: RoleCaps,
    pub npc_caps: RoleCaps,
    pub background_params: BackgroundParams,
    pub ego_params: EgoParams,
    /// Steps between ego policy decisions; the last command holds in between.
    /// Mirrors the coarse control rate of the system under test.
    pub ego_decision_period: u64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            geometry: LaneGeometry::default(),
            dt: 0.1,
            episode_max_steps: 250,
            n_background: 10,
            spawn_speed_range: [20.0, 28.0],
            spawn_gap_min: 30.0,
            ego_route_length: 420.0,
            lane_change_duration: 1.0,
            ego_caps: RoleCaps::default(),
            npc_caps: RoleCaps::default(),
            background_params: BackgroundParams::default(),
            ego_params: EgoParams::default(),
            ego_decision_period: 10,
            vehicle_length: 5.0,
            vehicle_width: 2.0,
            seed: 0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        self.geometry.validate()?;
        if self.dt <= 0.0 {
            return Err(SimError::InvalidConfig("dt must be > 0".into()));
        }
        if self.episode_max_steps == 0 {
            return Err(SimError::InvalidConfig(
                "episode_max_steps must be > 0".into(),
            ));
        }
        if self.spawn_gap_min <= self.vehicle_length {
            return Err(SimError::InvalidConfig(
                "spawn_gap_min must exceed vehicle length".into(),
            ));
        }
        if self.spawn_speed_range[0] > self.spawn_speed_range[1] {
            return Err(SimError::InvalidConfig(
                "spawn_speed_range must be ordered".into(),
            ));
        }
        if self.lane_change_duration <= 0.0 {
            return Err(SimError::InvalidConfig(
                "lane_change_duration must be > 0".into(),
            ));
        }
        if self.ego_decision_period == 0 {
            return Err(SimError::InvalidConfig(
                "ego_decision_period must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn caps_for(&self, role: Role) -> RoleCaps {
        match role {
            Role::Ego => self.ego_caps,
            _ => self.npc_caps,
        }
    }

    /// Copy with the episode-specific seed of a batch member.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c
    }
}
