//! Episode execution, structured logs, and replay verification.
//!
//! A [`SimSession`] owns one world for one episode: it runs the ego and
//! background policies, applies the externally supplied attacker action,
//! scores each step, and accumulates a line-oriented log that replays
//! bit-exactly from its seed and action stream.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{extract_state, select_attacker, AgentError, MdpState};
use crate::criticality::{region_step_reward, step_reward, CriticalityConfig};
use crate::region::SafetyParams;
use crate::sim::{
    init_scenario, plan_background_actions, step_world, ActionMap, ContactEvent, EgoPolicy,
    KinematicAction, Role, ScenarioConfig, SimError, VehicleId, VehicleState, WorldState,
};
use crate::sim::{IllegalActionKind, StepOutcome};

pub const LOG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeHeader {
    pub schema_version: u32,
    pub episode_id: u64,
    pub seed: u64,
    pub config: ScenarioConfig,
}

/// Per-vehicle snapshot after a step, with the action commanded that step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: VehicleId,
    pub role: Role,
    pub x: f64,
    pub y: f64,
    pub lane: usize,
    pub v: f64,
    pub lateral_v: f64,
    pub target_lane: Option<usize>,
    pub action: Option<KinematicAction>,
}

impl VehicleRecord {
    fn capture(v: &VehicleState, action: Option<KinematicAction>) -> Self {
        Self {
            id: v.id,
            role: v.role,
            x: v.x,
            y: v.y,
            lane: v.lane,
            v: v.v,
            lateral_v: v.lateral_v,
            target_lane: v.target_lane,
            action,
        }
    }

    pub fn to_state(&self, config: &ScenarioConfig) -> VehicleState {
        VehicleState {
            id: self.id,
            role: self.role,
            x: self.x,
            y: self.y,
            v: self.v,
            lateral_v: self.lateral_v,
            lane: self.lane,
            length: config.vehicle_length,
            width: config.vehicle_width,
            target_lane: self.target_lane,
        }
    }
}

/// Attacker-versus-ego region distances and overlap areas at one step.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionTrace {
    pub d_x_danger: f64,
    pub d_x_boundary: f64,
    pub d_x_safety: f64,
    pub s_danger: f64,
    pub s_boundary: f64,
    pub s_safety: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IllegalFlag {
    pub id: VehicleId,
    pub kind: IllegalActionKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub step: u64,
    pub attacker: VehicleId,
    pub vehicles: Vec<VehicleRecord>,
    pub events: Vec<ContactEvent>,
    pub illegal: Vec<IllegalFlag>,
    /// Training reward earned by this step's transition.
    pub reward: f64,
    /// Region-kind criticality contribution of this step.
    pub j_region: f64,
    pub region: RegionTrace,
}

impl StepRecord {
    /// Rebuild the vehicle states recorded at this step.
    pub fn vehicle_states(&self, config: &ScenarioConfig) -> Vec<VehicleState> {
        self.vehicles.iter().map(|r| r.to_state(config)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalKind {
    Collision,
    RouteComplete,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalRecord {
    pub kind: TerminalKind,
    pub step: u64,
    pub t: f64,
    pub sum_reward: f64,
    pub j_region: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub header: EpisodeHeader,
    /// Index 0 is the initial state (no actions, zero reward).
    pub steps: Vec<StepRecord>,
    pub terminal: TerminalRecord,
}

impl EpisodeLog {
    pub fn collision_step(&self) -> Option<&StepRecord> {
        if self.terminal.kind == TerminalKind::Collision {
            self.steps.last()
        } else {
            None
        }
    }
}

/// One JSONL line of an episode log.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum LogLine {
    Header(EpisodeHeader),
    Step(StepRecord),
    Terminal(TerminalRecord),
}

impl EpisodeLog {
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut emit = |line: &LogLine| -> std::io::Result<()> {
            let json = serde_json::to_string(line).expect("log serialization cannot fail");
            writeln!(w, "{json}")
        };
        emit(&LogLine::Header(self.header.clone()))?;
        for step in &self.steps {
            emit(&LogLine::Step(step.clone()))?;
        }
        emit(&LogLine::Terminal(self.terminal.clone()))
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self, ReplayError> {
        let mut header = None;
        let mut steps = Vec::new();
        let mut terminal = None;
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| ReplayError::Malformed(format!("line {idx}: {e}")))?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: LogLine = serde_json::from_str(&line)
                .map_err(|e| ReplayError::Malformed(format!("line {idx}: {e}")))?;
            match parsed {
                LogLine::Header(h) => header = Some(h),
                LogLine::Step(s) => steps.push(s),
                LogLine::Terminal(t) => terminal = Some(t),
            }
        }
        let header = header.ok_or_else(|| ReplayError::Malformed("missing header".into()))?;
        let terminal = terminal.ok_or_else(|| ReplayError::Malformed("missing terminal".into()))?;
        if steps.is_empty() {
            return Err(ReplayError::Malformed("log has no step records".into()));
        }
        Ok(Self {
            header,
            steps,
            terminal,
        })
    }
}

/// Attacker rotation cadence and eligibility radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionParams {
    pub switch_interval: f64,
    pub attacker_range: f64,
}

impl Default for SessionParams {
    fn default() -> Self {
        Self {
            switch_interval: 5.0,
            attacker_range: 75.0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StepResult {
    pub reward: f64,
    pub j_region: f64,
    pub terminal: Option<TerminalKind>,
    /// True when the step landed on a switch boundary: the transition stream
    /// ends here and the attacker is re-selected before the next action.
    pub switch_boundary: bool,
}

pub struct SimSession<'a> {
    pub world: WorldState,
    scenario: ScenarioConfig,
    safety: &'a SafetyParams,
    criticality: &'a CriticalityConfig,
    ego_policy: &'a dyn EgoPolicy,
    held_ego_action: KinematicAction,
    attacker: VehicleId,
    attacker_range: f64,
    switch_steps: u64,
    steps: Vec<StepRecord>,
    header: EpisodeHeader,
    sum_reward: f64,
    sum_j: f64,
    terminal: Option<TerminalKind>,
}

impl<'a> SimSession<'a> {
    pub fn new(
        episode_id: u64,
        scenario: ScenarioConfig,
        safety: &'a SafetyParams,
        criticality: &'a CriticalityConfig,
        session: SessionParams,
        ego_policy: &'a dyn EgoPolicy,
    ) -> Result<Self, EpisodeError> {
        let mut world = init_scenario(&scenario)?;
        let attacker = select_attacker(&world, session.attacker_range)?;
        if let Some(v) = world.vehicle_mut(attacker) {
            v.role = Role::RlAttacker;
        }
        let switch_steps = ((session.switch_interval / scenario.dt).round() as u64).max(1);
        let header = EpisodeHeader {
            schema_version: LOG_SCHEMA_VERSION,
            episode_id,
            seed: scenario.seed,
            config: scenario.clone(),
        };
        let region = attacker_region_trace(&world, attacker, safety);
        let initial = StepRecord {
            t: 0.0,
            step: 0,
            attacker,
            vehicles: world
                .vehicles
                .iter()
                .map(|v| VehicleRecord::capture(v, None))
                .collect(),
            events: Vec::new(),
            illegal: Vec::new(),
            reward: 0.0,
            j_region: 0.0,
            region,
        };
        Ok(Self {
            world,
            scenario,
            safety,
            criticality,
            ego_policy,
            held_ego_action: KinematicAction::KeepSpeed,
            attacker,
            attacker_range: session.attacker_range,
            switch_steps,
            steps: vec![initial],
            header,
            sum_reward: 0.0,
            sum_j: 0.0,
            terminal: None,
        })
    }

    pub fn attacker(&self) -> VehicleId {
        self.attacker
    }

    pub fn done(&self) -> bool {
        self.terminal.is_some()
    }

    pub fn observe(&self) -> MdpState {
        extract_state(&self.world, self.attacker, self.safety)
            .expect("attacker exists while session is live")
    }

    /// Re-select the attacker. Call at switch boundaries before the next
    /// action; returns the (possibly unchanged) attacker id.
    pub fn rotate_attacker(&mut self) -> Result<VehicleId, EpisodeError> {
        let next = select_attacker(&self.world, self.attacker_range)?;
        if next != self.attacker {
            if let Some(old) = self.world.vehicle_mut(self.attacker) {
                old.role = Role::Background;
            }
            if let Some(new) = self.world.vehicle_mut(next) {
                new.role = Role::RlAttacker;
            }
            self.attacker = next;
        }
        Ok(self.attacker)
    }

    /// Apply one attacker action and advance the world.
    pub fn advance(&mut self, attacker_action: KinematicAction) -> StepResult {
        assert!(self.terminal.is_none(), "session already terminated");

        // The ego re-decides only on its decision grid; the last command
        // holds in between, like a controller running slower than the sim.
        if self.world.step_index % self.scenario.ego_decision_period == 0 {
            self.held_ego_action = self.ego_policy.act(&self.world);
        }
        let mut ego_action = self.held_ego_action;
        if matches!(
            ego_action,
            KinematicAction::LaneLeft | KinematicAction::LaneRight
        ) && self.world.ego().changing_lane()
        {
            // A held lane command is spent once the maneuver starts.
            ego_action = KinematicAction::KeepSpeed;
        }
        let mut actions = ActionMap::new();
        actions.insert(VehicleId(0), ego_action);
        actions.insert(self.attacker, attacker_action);
        plan_background_actions(
            &mut self.world,
            &self.scenario.background_params,
            &self.scenario.npc_caps,
            &mut actions,
        );

        let StepOutcome { events, illegal } = step_world(&mut self.world, &actions, &self.scenario);

        let reward = step_reward(&self.world, self.attacker, self.criticality, self.safety);
        let j_region = region_step_reward(&self.world, self.attacker, self.criticality, self.safety);
        self.sum_reward += reward;
        self.sum_j += j_region;

        let terminal = if !events.is_empty() {
            Some(TerminalKind::Collision)
        } else if self.world.ego().x >= self.scenario.ego_route_length {
            Some(TerminalKind::RouteComplete)
        } else if self.world.step_index >= self.scenario.episode_max_steps {
            Some(TerminalKind::MaxSteps)
        } else {
            None
        };
        self.terminal = terminal;

        let region = attacker_region_trace(&self.world, self.attacker, self.safety);
        self.steps.push(StepRecord {
            t: self.world.t,
            step: self.world.step_index,
            attacker: self.attacker,
            vehicles: self
                .world
                .vehicles
                .iter()
                .map(|v| VehicleRecord::capture(v, actions.get(&v.id).copied()))
                .collect(),
            events,
            illegal: illegal
                .into_iter()
                .map(|(id, kind)| IllegalFlag { id, kind })
                .collect(),
            reward,
            j_region,
            region,
        });

        StepResult {
            reward,
            j_region,
            terminal,
            switch_boundary: terminal.is_none() && self.world.step_index % self.switch_steps == 0,
        }
    }

    pub fn finish(self) -> EpisodeLog {
        let kind = self.terminal.expect("finish called on a live session");
        EpisodeLog {
            header: self.header,
            terminal: TerminalRecord {
                kind,
                step: self.world.step_index,
                t: self.world.t,
                sum_reward: self.sum_reward,
                j_region: self.sum_j,
            },
            steps: self.steps,
        }
    }
}

fn attacker_region_trace(
    world: &WorldState,
    attacker: VehicleId,
    safety: &SafetyParams,
) -> RegionTrace {
    let ego = world.ego();
    match world.vehicle(attacker) {
        Some(npc) => {
            let layers = crate::region::build_region_layers(ego, npc.v, npc.lateral_v, safety);
            let overlap = crate::region::overlap_areas(&npc.body(), &layers);
            RegionTrace {
                d_x_danger: layers.d_x_danger,
                d_x_boundary: layers.d_x_boundary,
                d_x_safety: layers.d_x_safety,
                s_danger: overlap.s_danger,
                s_boundary: overlap.s_boundary,
                s_safety: overlap.s_safety,
            }
        }
        None => RegionTrace::default(),
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("malformed log: {0}")]
    Malformed(String),
    #[error("replay diverged at step {step}: {detail}")]
    Divergence { step: u64, detail: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// Re-simulate a log from its seed and recorded action stream, checking that
/// every recorded state is reproduced bit-exactly.
pub fn verify_replay(log: &EpisodeLog) -> Result<(), ReplayError> {
    let mut world = init_scenario(&log.header.config)?;

    compare_vehicles(0, &world, &log.steps[0])?;
    for record in &log.steps[1..] {
        let mut actions = ActionMap::new();
        for v in &record.vehicles {
            if let Some(a) = v.action {
                actions.insert(v.id, a);
            }
        }
        step_world(&mut world, &actions, &log.header.config);
        compare_vehicles(record.step, &world, record)?;
    }
    Ok(())
}

fn compare_vehicles(step: u64, world: &WorldState, record: &StepRecord) -> Result<(), ReplayError> {
    if world.vehicles.len() != record.vehicles.len() {
        return Err(ReplayError::Divergence {
            step,
            detail: format!(
                "vehicle count {} vs logged {}",
                world.vehicles.len(),
                record.vehicles.len()
            ),
        });
    }
    for rec in &record.vehicles {
        let v = world.vehicle(rec.id).ok_or_else(|| ReplayError::Divergence {
            step,
            detail: format!("vehicle {} missing", rec.id),
        })?;
        let same = v.x == rec.x
            && v.y == rec.y
            && v.v == rec.v
            && v.lateral_v == rec.lateral_v
            && v.lane == rec.lane
            && v.target_lane == rec.target_lane;
        if !same {
            return Err(ReplayError::Divergence {
                step,
                detail: format!(
                    "vehicle {}: sim ({}, {}, {}, {}) vs log ({}, {}, {}, {})",
                    rec.id, v.x, v.y, v.v, v.lateral_v, rec.x, rec.y, rec.v, rec.lateral_v
                ),
            });
        }
    }
    Ok(())
}
