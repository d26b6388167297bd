//! Batch scenario generation and collision analytics.
//!
//! Collisions split four ways by who strikes whom (the RL attacker, a
//! background vehicle, or the ego), and only ego-striker collisions count as
//! valid test scenarios. For valid lane-change collisions, the cut-in
//! distance and the cut-in-to-collision interval measure how reactable the
//! generated scenario was.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::PolicySpec;
use crate::criticality::CriticalityConfig;
use crate::episode::{EpisodeError, EpisodeLog, SessionParams, SimSession};
use crate::region::SafetyParams;
use crate::sim::{ContactEvent, Role, RuleBasedEgo, ScenarioConfig, VehicleId};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Histogram bin widths for the authenticity statistics.
pub const D_CUT_IN_BIN_WIDTH: f64 = 2.0;
pub const T_INTERVAL_BIN_WIDTH: f64 = 0.25;

#[derive(Debug, Error, PartialEq)]
pub enum LabError {
    #[error("collision between {a} and {b} does not involve the ego")]
    NonEgoCollision { a: VehicleId, b: VehicleId },
    #[error("contact pair not found in the log")]
    ContactNotInLog,
    #[error("no report tagged 'ttc' to use as the baseline")]
    MissingBaseline,
}

/// Who strikes whom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CollisionType4 {
    RlToEgo,
    NddToEgo,
    EgoToRl,
    EgoToNdd,
}

impl CollisionType4 {
    pub fn name(self) -> &'static str {
        match self {
            CollisionType4::RlToEgo => "rl_to_ego",
            CollisionType4::NddToEgo => "ndd_to_ego",
            CollisionType4::EgoToRl => "ego_to_rl",
            CollisionType4::EgoToNdd => "ego_to_ndd",
        }
    }

    /// Valid test scenarios are those where the ego is the striker.
    pub fn valid(self) -> bool {
        matches!(self, CollisionType4::EgoToRl | CollisionType4::EgoToNdd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollisionRecord {
    pub episode_id: u64,
    pub t_collision: f64,
    pub striker_id: VehicleId,
    pub struck_id: VehicleId,
    pub striker_role: Role,
    pub struck_role: Role,
    pub type4: CollisionType4,
    pub valid: bool,
    pub striker_mid_lane_change: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthenticityRecord {
    pub episode_id: u64,
    pub t_cut_in: f64,
    pub d_cut_in: f64,
    pub t_collision: f64,
    pub t_interval: f64,
}

struct PartyView<'a> {
    rec: &'a crate::episode::VehicleRecord,
    length: f64,
}

impl<'a> PartyView<'a> {
    fn front(&self) -> f64 {
        self.rec.x + self.length
    }
    fn center_x(&self) -> f64 {
        self.rec.x + 0.5 * self.length
    }
}

/// Whether `p` was laterally moving toward `o`, or completed a lane change
/// into `o`'s current lane within the last `window` steps ending at `k`.
fn lane_change_fault(log: &EpisodeLog, k: usize, p_id: VehicleId, o_id: VehicleId) -> bool {
    let at = |idx: usize, id: VehicleId| {
        log.steps[idx]
            .vehicles
            .iter()
            .find(|v| v.id == id)
            .expect("vehicle present in every record")
    };
    let p = at(k, p_id);
    let o = at(k, o_id);
    if p.lateral_v != 0.0 && (o.y - p.y) * p.lateral_v > 0.0 {
        return true;
    }
    // Completed change: last lane flip landed in the other's current lane.
    if p.lane != o.lane {
        return false;
    }
    let dt = log.header.config.dt;
    let window = (log.header.config.lane_change_duration / dt).ceil() as usize;
    let mut j = k;
    while j >= 1 {
        if at(j, p_id).lane != at(j - 1, p_id).lane {
            return k - j <= window && at(j, p_id).lane == p.lane;
        }
        if k - j >= window {
            return false;
        }
        j -= 1;
    }
    false
}

/// Attribute a striker for an ego-involved contact and classify it.
///
/// Priority: lane-change fault, then rear-end geometry (striker front inside
/// the other's body), then absolute velocity toward the other, and residual
/// ties go against the NPC (conservative for validity accounting).
pub fn classify_collision(
    log: &EpisodeLog,
    contact: &ContactEvent,
) -> Result<CollisionRecord, LabError> {
    let k = log
        .steps
        .iter()
        .position(|s| s.events.iter().any(|e| e.a == contact.a && e.b == contact.b))
        .ok_or(LabError::ContactNotInLog)?;
    let record = &log.steps[k];
    let length = log.header.config.vehicle_length;

    let find = |id: VehicleId| {
        record
            .vehicles
            .iter()
            .find(|v| v.id == id)
            .expect("contact party recorded")
    };
    let a = PartyView {
        rec: find(contact.a),
        length,
    };
    let b = PartyView {
        rec: find(contact.b),
        length,
    };
    if a.rec.role != Role::Ego && b.rec.role != Role::Ego {
        return Err(LabError::NonEgoCollision {
            a: contact.a,
            b: contact.b,
        });
    }

    let fault_a = lane_change_fault(log, k, contact.a, contact.b);
    let fault_b = lane_change_fault(log, k, contact.b, contact.a);
    let rear_a = a.rec.x < b.rec.x && a.front() > b.rec.x;
    let rear_b = b.rec.x < a.rec.x && b.front() > a.rec.x;
    let closing = |p: &PartyView, o: &PartyView| {
        let dx = o.center_x() - p.center_x();
        let dy = o.rec.y - p.rec.y;
        let norm = (dx * dx + dy * dy).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        (p.rec.v * dx + p.rec.lateral_v * dy) / norm
    };

    let striker_is_a = if fault_a != fault_b {
        fault_a
    } else if rear_a != rear_b {
        rear_a
    } else {
        let ca = closing(&a, &b) > 0.0;
        let cb = closing(&b, &a) > 0.0;
        if ca != cb {
            ca
        } else {
            // Residual tie: blame the non-ego party.
            a.rec.role != Role::Ego
        }
    };

    let (striker, struck) = if striker_is_a { (&a, &b) } else { (&b, &a) };
    let type4 = match (striker.rec.role, struck.rec.role) {
        (Role::Ego, Role::RlAttacker) => CollisionType4::EgoToRl,
        (Role::Ego, Role::Background) => CollisionType4::EgoToNdd,
        (Role::RlAttacker, Role::Ego) => CollisionType4::RlToEgo,
        (Role::Background, Role::Ego) => CollisionType4::NddToEgo,
        _ => unreachable!("one party is the ego"),
    };

    Ok(CollisionRecord {
        episode_id: log.header.episode_id,
        t_collision: record.t,
        striker_id: striker.rec.id,
        struck_id: struck.rec.id,
        striker_role: striker.rec.role,
        struck_role: struck.rec.role,
        type4,
        valid: type4.valid(),
        striker_mid_lane_change: if striker_is_a { fault_a } else { fault_b },
    })
}

/// Curve-friendly label for an episode-ending contact.
pub fn collision_label(log: &EpisodeLog, contact: &ContactEvent) -> String {
    match classify_collision(log, contact) {
        Ok(record) => record.type4.name().to_string(),
        Err(LabError::NonEgoCollision { .. }) => "non_ego".to_string(),
        Err(_) => String::new(),
    }
}

/// Find the cut-in that precedes the collision: the last step where the NPC's
/// body, moving laterally, enters the band of the ego's then-current lane
/// while still fully ahead of the ego. Returns `None` for collisions without
/// a preceding lane crossing.
pub fn detect_cut_in(log: &EpisodeLog, npc_id: VehicleId) -> Option<AuthenticityRecord> {
    let collision = log.collision_step()?;
    let t_collision = collision.t;
    let k = log.steps.len() - 1;
    let geo = &log.header.config.geometry;
    let length = log.header.config.vehicle_length;
    let half_w = 0.5 * log.header.config.vehicle_width;

    let find = |idx: usize, id: VehicleId| {
        log.steps[idx].vehicles.iter().find(|v| v.id == id)
    };

    let mut cut_in: Option<(f64, f64)> = None; // (t, gap)
    for j in 1..=k {
        let ego = find(j, VehicleId(0))?;
        let npc = find(j, npc_id)?;
        let npc_prev = find(j - 1, npc_id)?;
        if npc.y == npc_prev.y {
            continue; // no lateral motion, no crossing
        }
        let band_lo = ego.lane as f64 * geo.lane_width;
        let band_hi = band_lo + geo.lane_width;
        let inside_now = (npc.y + half_w).min(band_hi) > (npc.y - half_w).max(band_lo);
        let inside_prev = (npc_prev.y + half_w).min(band_hi) > (npc_prev.y - half_w).max(band_lo);
        let ahead = npc.x > ego.x + length;
        if inside_now && !inside_prev && ahead {
            cut_in = Some((log.steps[j].t, npc.x - (ego.x + length)));
        }
    }

    cut_in.map(|(t_cut_in, d_cut_in)| AuthenticityRecord {
        episode_id: log.header.episode_id,
        t_cut_in,
        d_cut_in,
        t_collision,
        t_interval: t_collision - t_cut_in,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistBin {
    pub bin_left: f64,
    pub bin_right: f64,
    pub count: u64,
}

/// Fixed-width histogram starting at zero.
pub fn histogram(values: &[f64], width: f64) -> Vec<HistBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let max = values.iter().copied().fold(0.0_f64, f64::max);
    let n_bins = ((max / width).floor() as usize + 1).max(1);
    let mut counts = vec![0u64; n_bins];
    for &v in values {
        let idx = ((v / width).floor() as usize).min(n_bins - 1);
        counts[idx] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistBin {
            bin_left: i as f64 * width,
            bin_right: (i + 1) as f64 * width,
            count,
        })
        .collect()
}

pub fn histogram_csv(bins: &[HistBin]) -> String {
    let mut out = String::from("bin_left,bin_right,count\n");
    for b in bins {
        out.push_str(&format!("{},{},{}\n", b.bin_left, b.bin_right, b.count));
    }
    out
}

/// Aggregate counts and authenticity statistics for one generated batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub schema_version: u32,
    pub method: String,
    pub tests: u64,
    pub rl_to_ego: u64,
    pub ndd_to_ego: u64,
    pub ego_to_rl: u64,
    pub ego_to_ndd: u64,
    pub invalid_collisions: u64,
    pub valid_collisions: u64,
    pub all_collisions: u64,
    /// Ego-uninvolved collisions; episodes end but stay out of the counts.
    pub non_ego_collisions: u64,
    pub valid_over_all: Option<f64>,
    pub valid_over_tests: f64,
    pub lane_change_scenarios: u64,
    pub lane_change_ratio: Option<f64>,
    pub mean_d_cut_in: Option<f64>,
    pub mean_t_interval: Option<f64>,
    pub d_cut_in_hist: Vec<HistBin>,
    pub t_interval_hist: Vec<HistBin>,
}

impl SummaryReport {
    pub fn assemble(
        method: &str,
        tests: u64,
        collisions: &[CollisionRecord],
        authenticity: &[AuthenticityRecord],
        non_ego_collisions: u64,
    ) -> Self {
        let count = |t: CollisionType4| collisions.iter().filter(|c| c.type4 == t).count() as u64;
        let rl_to_ego = count(CollisionType4::RlToEgo);
        let ndd_to_ego = count(CollisionType4::NddToEgo);
        let ego_to_rl = count(CollisionType4::EgoToRl);
        let ego_to_ndd = count(CollisionType4::EgoToNdd);
        let valid_collisions = ego_to_rl + ego_to_ndd;
        let invalid_collisions = rl_to_ego + ndd_to_ego;
        let all_collisions = valid_collisions + invalid_collisions;
        let mean = |xs: &[f64]| {
            if xs.is_empty() {
                None
            } else {
                Some(xs.iter().sum::<f64>() / xs.len() as f64)
            }
        };
        let d_values: Vec<f64> = authenticity.iter().map(|a| a.d_cut_in).collect();
        let t_values: Vec<f64> = authenticity.iter().map(|a| a.t_interval).collect();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: method.to_string(),
            tests,
            rl_to_ego,
            ndd_to_ego,
            ego_to_rl,
            ego_to_ndd,
            invalid_collisions,
            valid_collisions,
            all_collisions,
            non_ego_collisions,
            valid_over_all: if all_collisions > 0 {
                Some(valid_collisions as f64 / all_collisions as f64)
            } else {
                None
            },
            valid_over_tests: if tests > 0 {
                valid_collisions as f64 / tests as f64
            } else {
                0.0
            },
            lane_change_scenarios: authenticity.len() as u64,
            lane_change_ratio: if valid_collisions > 0 {
                Some(authenticity.len() as f64 / valid_collisions as f64)
            } else {
                None
            },
            mean_d_cut_in: mean(&d_values),
            mean_t_interval: mean(&t_values),
            d_cut_in_hist: histogram(&d_values, D_CUT_IN_BIN_WIDTH),
            t_interval_hist: histogram(&t_values, T_INTERVAL_BIN_WIDTH),
        }
    }
}

pub struct BatchOutput {
    pub report: SummaryReport,
    pub collisions: Vec<CollisionRecord>,
    pub authenticity: Vec<AuthenticityRecord>,
}

struct EpisodeAnalysis {
    log: Option<EpisodeLog>,
    collision: Option<CollisionRecord>,
    authenticity: Option<AuthenticityRecord>,
    non_ego: bool,
}

fn run_one_episode(
    episode_id: u64,
    spec: PolicySpec<'_>,
    scenario: &ScenarioConfig,
    criticality: &CriticalityConfig,
    safety: &SafetyParams,
    session_params: SessionParams,
    keep_log: bool,
) -> Result<EpisodeAnalysis, EpisodeError> {
    let seed = scenario.seed.wrapping_add(episode_id);
    let episode_scenario = scenario.with_seed(seed);
    let ego = RuleBasedEgo {
        params: scenario.ego_params,
    };
    let mut policy = spec.instantiate(seed, scenario);
    let mut sim = SimSession::new(
        episode_id,
        episode_scenario,
        safety,
        criticality,
        session_params,
        &ego,
    )?;
    loop {
        let state = sim.observe();
        let action = policy.act(&state, &sim.world, sim.attacker());
        let result = sim.advance(action);
        if result.terminal.is_some() {
            break;
        }
        if result.switch_boundary {
            sim.rotate_attacker()?;
        }
    }
    let log = sim.finish();

    let mut analysis = EpisodeAnalysis {
        log: None,
        collision: None,
        authenticity: None,
        non_ego: false,
    };
    if let Some(record) = log.collision_step() {
        // Classify the ego-involved contact if there is one; simultaneous
        // multi-contact steps resolve toward the lowest partner id.
        let ego_contact = record.events.iter().find(|e| e.involves(VehicleId(0)));
        match ego_contact {
            Some(contact) => match classify_collision(&log, contact) {
                Ok(collision) => {
                    if collision.valid {
                        let npc = if collision.striker_role == Role::Ego {
                            collision.struck_id
                        } else {
                            collision.striker_id
                        };
                        analysis.authenticity = detect_cut_in(&log, npc);
                    }
                    analysis.collision = Some(collision);
                }
                Err(_) => analysis.non_ego = true,
            },
            None => analysis.non_ego = true,
        }
    }
    if keep_log {
        analysis.log = Some(log);
    }
    Ok(analysis)
}

/// Generate `n_scenarios` seeded episodes under a fixed attacker policy and
/// aggregate the collision statistics. Episodes run in parallel; the sink,
/// when present, receives every episode log in episode order.
pub fn run_batch(
    spec: PolicySpec<'_>,
    scenario: &ScenarioConfig,
    criticality: &CriticalityConfig,
    safety: &SafetyParams,
    session_params: SessionParams,
    n_scenarios: u64,
    method: &str,
    mut sink: Option<&mut dyn FnMut(&EpisodeLog) -> std::io::Result<()>>,
) -> Result<BatchOutput, EpisodeError> {
    let keep_log = sink.is_some();
    let mut collisions = Vec::new();
    let mut authenticity = Vec::new();
    let mut non_ego = 0u64;

    const CHUNK: u64 = 64;
    let mut start = 0u64;
    while start < n_scenarios {
        let end = (start + CHUNK).min(n_scenarios);
        let chunk: Vec<Result<EpisodeAnalysis, EpisodeError>> = (start..end)
            .collect::<Vec<u64>>()
            .into_par_iter()
            .map(|i| {
                run_one_episode(
                    i,
                    spec,
                    scenario,
                    criticality,
                    safety,
                    session_params,
                    keep_log,
                )
            })
            .collect();
        for analysis in chunk {
            let analysis = analysis?;
            if let (Some(sink), Some(log)) = (sink.as_deref_mut(), analysis.log.as_ref()) {
                sink(log).expect("episode sink failed");
            }
            if let Some(c) = analysis.collision {
                collisions.push(c);
            }
            if let Some(a) = analysis.authenticity {
                authenticity.push(a);
            }
            if analysis.non_ego {
                non_ego += 1;
            }
        }
        start = end;
    }

    let report = SummaryReport::assemble(method, n_scenarios, &collisions, &authenticity, non_ego);
    Ok(BatchOutput {
        report,
        collisions,
        authenticity,
    })
}

/// Percentage improvement of `value` over `baseline`, in the convention used
/// for the method-comparison table.
pub fn improvement_pct(value: f64, baseline: f64) -> f64 {
    100.0 * (value - baseline) / baseline
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub d_cut_in_m: Option<f64>,
    pub d_improvement_pct: Option<f64>,
    pub t_interval_s: Option<f64>,
    pub t_improvement_pct: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub baseline: String,
    pub rows: Vec<ComparisonRow>,
}

/// Compare methods' authenticity means against the ttc baseline.
pub fn compare_methods(reports: &[SummaryReport]) -> Result<ComparisonTable, LabError> {
    let baseline = reports
        .iter()
        .find(|r| r.method == "ttc")
        .ok_or(LabError::MissingBaseline)?;
    let rows = reports
        .iter()
        .map(|r| {
            let against = |value: Option<f64>, base: Option<f64>| match (value, base) {
                (Some(v), Some(b)) if r.method != "ttc" => Some(improvement_pct(v, b)),
                _ => None,
            };
            ComparisonRow {
                method: r.method.clone(),
                d_cut_in_m: r.mean_d_cut_in,
                d_improvement_pct: against(r.mean_d_cut_in, baseline.mean_d_cut_in),
                t_interval_s: r.mean_t_interval,
                t_improvement_pct: against(r.mean_t_interval, baseline.mean_t_interval),
            }
        })
        .collect();
    Ok(ComparisonTable {
        baseline: "ttc".to_string(),
        rows,
    })
}

impl ComparisonTable {
    pub fn to_csv(&self) -> String {
        let fmt = |x: Option<f64>| match x {
            Some(v) => format!("{v:.2}"),
            None => "n/a".to_string(),
        };
        let mut out =
            String::from("method,d_cut_in_m,d_improvement_pct,t_interval_s,t_improvement_pct\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.method,
                fmt(r.d_cut_in_m),
                fmt(r.d_improvement_pct),
                fmt(r.t_interval_s),
                fmt(r.t_improvement_pct)
            ));
        }
        out
    }
}
