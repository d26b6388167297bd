//! Flat `key = value` run configuration.
//!
//! One namespace covers the scenario, safety, criticality, and training
//! parameter groups. `#` starts a comment; unknown keys are hard errors so a
//! typo cannot silently change an experiment.

use thiserror::Error;

use crate::agent::TrainConfig;
use crate::criticality::{CriticalityConfig, RewardKind};
use crate::region::{LateralMode, SafetyParams};
use crate::sim::ScenarioConfig;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown config key '{0}'")]
    UnknownKey(String),
    #[error("invalid value for key '{key}': {detail}")]
    InvalidValue { key: String, detail: String },
    #[error("malformed line {line}: expected 'key = value'")]
    MalformedLine { line: usize },
    #[error("invalid config: {0}")]
    Inconsistent(String),
}

/// Everything a run needs, with spec'd defaults.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub scenario: ScenarioConfig,
    pub safety: SafetyParams,
    pub criticality: CriticalityConfig,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scenario
            .validate()
            .map_err(|e| ConfigError::Inconsistent(e.to_string()))?;
        self.safety.validate().map_err(ConfigError::Inconsistent)?;
        self.criticality
            .validate()
            .map_err(ConfigError::Inconsistent)?;
        self.train.validate().map_err(ConfigError::Inconsistent)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut config = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::MalformedLine { line: idx + 1 })?;
            config.apply(key.trim(), value.trim())?;
        }
        config.validate()?;
        Ok(config)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let bad = |detail: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            detail: detail.to_string(),
        };
        macro_rules! f64_field {
            ($target:expr) => {{
                $target = value.parse::<f64>().map_err(|e| bad(&e.to_string()))?;
            }};
        }
        macro_rules! int_field {
            ($target:expr, $ty:ty) => {{
                $target = value.parse::<$ty>().map_err(|e| bad(&e.to_string()))?;
            }};
        }
        match key {
            // lane geometry
            "lane_count" => int_field!(self.scenario.geometry.lane_count, usize),
            "lane_width" => f64_field!(self.scenario.geometry.lane_width),
            "road_length" => f64_field!(self.scenario.geometry.road_length),
            // scenario
            "dt" => f64_field!(self.scenario.dt),
            "episode_max_steps" => int_field!(self.scenario.episode_max_steps, u64),
            "n_background" => int_field!(self.scenario.n_background, usize),
            "spawn_speed_range" => {
                let (lo, hi) = value
                    .split_once(',')
                    .ok_or_else(|| bad("expected 'lo,hi'"))?;
                let lo = lo.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?;
                let hi = hi.trim().parse::<f64>().map_err(|e| bad(&e.to_string()))?;
                self.scenario.spawn_speed_range = [lo, hi];
            }
            "spawn_gap_min" => f64_field!(self.scenario.spawn_gap_min),
            "ego_route_length" => f64_field!(self.scenario.ego_route_length),
            "lane_change_duration" => f64_field!(self.scenario.lane_change_duration),
            "ego_decision_period" => int_field!(self.scenario.ego_decision_period, u64),
            "vehicle_length" => f64_field!(self.scenario.vehicle_length),
            "vehicle_width" => f64_field!(self.scenario.vehicle_width),
            "seed" => int_field!(self.scenario.seed, u64),
            // role caps
            "ego_accel_cap" => f64_field!(self.scenario.ego_caps.accel),
            "ego_decel_cap" => f64_field!(self.scenario.ego_caps.decel),
            "ego_v_max" => f64_field!(self.scenario.ego_caps.v_max),
            "npc_accel_cap" => f64_field!(self.scenario.npc_caps.accel),
            "npc_decel_cap" => f64_field!(self.scenario.npc_caps.decel),
            "npc_v_max" => f64_field!(self.scenario.npc_caps.v_max),
            // background surrogate
            "bg_a_idm" => f64_field!(self.scenario.background_params.a_idm),
            "bg_b_idm" => f64_field!(self.scenario.background_params.b_idm),
            "bg_s0" => f64_field!(self.scenario.background_params.s0),
            "bg_t_headway" => f64_field!(self.scenario.background_params.t_headway),
            "bg_v0" => f64_field!(self.scenario.background_params.v0),
            "bg_v0_spread" => f64_field!(self.scenario.background_params.v0_spread),
            "bg_politeness" => f64_field!(self.scenario.background_params.politeness),
            "bg_lc_threshold" => f64_field!(self.scenario.background_params.lc_threshold),
            "bg_min_lc_gap_lead" => f64_field!(self.scenario.background_params.min_lc_gap_lead),
            "bg_min_lc_gap_rear" => f64_field!(self.scenario.background_params.min_lc_gap_rear),
            "bg_b_safe" => f64_field!(self.scenario.background_params.b_safe),
            "bg_hesitation" => f64_field!(self.scenario.background_params.hesitation),
            // ego policy
            "ego_v0" => f64_field!(self.scenario.ego_params.v0),
            "ego_a_idm" => f64_field!(self.scenario.ego_params.a_idm),
            "ego_b_idm" => f64_field!(self.scenario.ego_params.b_idm),
            "ego_s0" => f64_field!(self.scenario.ego_params.s0),
            "ego_t_headway" => f64_field!(self.scenario.ego_params.t_headway),
            "ego_ttc_evade" => f64_field!(self.scenario.ego_params.ttc_evade),
            "ego_side_gap_lead" => f64_field!(self.scenario.ego_params.side_gap_lead),
            "ego_side_gap_rear" => f64_field!(self.scenario.ego_params.side_gap_rear),
            "ego_overtake_threshold" => f64_field!(self.scenario.ego_params.overtake_threshold),
            // safety region
            "a_max_dece" => f64_field!(self.safety.a_max_dece),
            "a_max_accel" => f64_field!(self.safety.a_max_accel),
            "a_min_dece" => f64_field!(self.safety.a_min_dece),
            "rho" => f64_field!(self.safety.rho),
            "d_y_danger" => f64_field!(self.safety.d_y_danger),
            "d_y_boundary" => f64_field!(self.safety.d_y_boundary),
            "d_y_safety" => f64_field!(self.safety.d_y_safety),
            "lateral_mode" => {
                self.safety.lateral_mode = match value {
                    "fixed" => LateralMode::Fixed,
                    "dynamic" => LateralMode::Dynamic,
                    _ => return Err(bad("expected 'fixed' or 'dynamic'")),
                };
            }
            // criticality
            "p_danger" => f64_field!(self.criticality.probabilities.p_danger),
            "p_boundary" => f64_field!(self.criticality.probabilities.p_boundary),
            "p_safety" => f64_field!(self.criticality.probabilities.p_safety),
            "reward_kind" => {
                self.criticality.reward_kind =
                    value.parse::<RewardKind>().map_err(|e| bad(&e))?;
            }
            "ttc_threshold" => f64_field!(self.criticality.ttc_threshold),
            "ttb_threshold" => f64_field!(self.criticality.ttb_threshold),
            "drac_cap" => f64_field!(self.criticality.drac_cap),
            "attacker_only" => {
                self.criticality.attacker_only =
                    value.parse::<bool>().map_err(|e| bad(&e.to_string()))?;
            }
            // training
            "episodes" => int_field!(self.train.episodes, u64),
            "gamma" => f64_field!(self.train.gamma),
            "epsilon_start" => f64_field!(self.train.epsilon_start),
            "epsilon_end" => f64_field!(self.train.epsilon_end),
            "epsilon_decay_episodes" => {
                let n = value.parse::<u64>().map_err(|e| bad(&e.to_string()))?;
                self.train.epsilon_decay_episodes = Some(n);
            }
            "buffer_capacity" => int_field!(self.train.buffer_capacity, usize),
            "batch_size" => int_field!(self.train.batch_size, usize),
            "learn_rate" => f64_field!(self.train.learn_rate),
            "target_sync_steps" => int_field!(self.train.target_sync_steps, u64),
            "hidden_layers" => {
                let layers: Result<Vec<usize>, _> = value
                    .split(',')
                    .map(|part| part.trim().parse::<usize>())
                    .collect();
                self.train.hidden_layers = layers.map_err(|e| bad(&e.to_string()))?;
            }
            "switch_interval" => f64_field!(self.train.switch_interval),
            "attacker_range" => f64_field!(self.train.attacker_range),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }
}
