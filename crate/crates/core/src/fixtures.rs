//! Hand-built collision trajectories for verifying the collision classifier
//! and the cut-in detector against known ground truth.
//!
//! Every trajectory uses exact-in-f64 position steps (multiples of 0.25) so
//! contact timing is deterministic and never rides on a rounding edge.

use crate::episode::{
    EpisodeHeader, EpisodeLog, RegionTrace, StepRecord, TerminalKind, TerminalRecord,
    VehicleRecord, LOG_SCHEMA_VERSION,
};
use crate::lab::CollisionType4;
use crate::sim::{
    ContactEvent, KinematicAction, Role, ScenarioConfig, VehicleId,
};

fn fixture_scenario() -> ScenarioConfig {
    ScenarioConfig {
        n_background: 1,
        ..ScenarioConfig::default()
    }
}

/// A scripted vehicle: position samples per step plus a constant speed label.
struct Path {
    role: Role,
    xs: Vec<f64>,
    ys: Vec<f64>,
    v: f64,
}

impl Path {
    fn lateral_v(&self, k: usize, dt: f64) -> f64 {
        if k == 0 {
            return (self.ys.get(1).copied().unwrap_or(self.ys[0]) - self.ys[0]) / dt;
        }
        (self.ys[k] - self.ys[k - 1]) / dt
    }
}

/// Assemble an episode log for two scripted vehicles, asserting the contact
/// happens exactly at the last step and not before.
fn build_log(episode_id: u64, ego: Path, npc: Path) -> EpisodeLog {
    assert_eq!(ego.xs.len(), npc.xs.len());
    let config = fixture_scenario();
    let geo = config.geometry;
    let dt = config.dt;
    let n = ego.xs.len();
    let len = config.vehicle_length;
    let half_w = 0.5 * config.vehicle_width;

    let overlap = |k: usize| -> f64 {
        let dx = (ego.xs[k] + len).min(npc.xs[k] + len) - ego.xs[k].max(npc.xs[k]);
        let dy = (ego.ys[k] + half_w).min(npc.ys[k] + half_w)
            - (ego.ys[k] - half_w).max(npc.ys[k] - half_w);
        dx.max(0.0) * dy.max(0.0)
    };

    let mut steps = Vec::with_capacity(n);
    for k in 0..n {
        let area = overlap(k);
        if k + 1 < n {
            assert!(area == 0.0, "fixture contact before the final step ({k})");
        } else {
            assert!(area > 0.0, "fixture must end in contact");
        }
        let mk = |id: u32, p: &Path| VehicleRecord {
            id: VehicleId(id),
            role: p.role,
            x: p.xs[k],
            y: p.ys[k],
            lane: geo.nearest_lane(p.ys[k]),
            v: p.v,
            lateral_v: p.lateral_v(k, dt),
            target_lane: None,
            action: if k == 0 {
                None
            } else {
                Some(KinematicAction::KeepSpeed)
            },
        };
        let events = if k + 1 == n {
            vec![ContactEvent {
                a: VehicleId(0),
                b: VehicleId(1),
                overlap_area: area,
                rel_v: ego.v - npc.v,
                lateral_v_a: ego.lateral_v(k, dt),
                lateral_v_b: npc.lateral_v(k, dt),
            }]
        } else {
            Vec::new()
        };
        steps.push(StepRecord {
            t: k as f64 * dt,
            step: k as u64,
            attacker: VehicleId(1),
            vehicles: vec![mk(0, &ego), mk(1, &npc)],
            events,
            illegal: Vec::new(),
            reward: 0.0,
            j_region: 0.0,
            region: RegionTrace::default(),
        });
    }

    let last = steps.last().unwrap();
    let terminal = TerminalRecord {
        kind: TerminalKind::Collision,
        step: last.step,
        t: last.t,
        sum_reward: 0.0,
        j_region: 0.0,
    };
    EpisodeLog {
        header: EpisodeHeader {
            schema_version: LOG_SCHEMA_VERSION,
            episode_id,
            seed: episode_id,
            config,
        },
        steps,
        terminal,
    }
}

fn constant(y: f64, n: usize) -> Vec<f64> {
    vec![y; n]
}

fn ramp(x0: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| x0 + step * k as f64).collect()
}

/// Descend from `y0` by 0.5 per step, clamping at `y_end`.
fn descend(y0: f64, y_end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| (y0 - 0.5 * k as f64).max(y_end)).collect()
}

/// NPC side-swipes the lane-keeping ego mid-lane-change.
fn swipe_by_npc(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 6; // contact once the NPC body edge dips below 2 m separation
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.0, n),
            ys: constant(6.0, n),
            v: 20.0,
        },
        Path {
            role,
            xs: ramp(0.0, 2.0, n),
            ys: descend(10.0, 6.0, n),
            v: 20.0,
        },
    )
}

/// NPC cuts in ahead and the ego reaches it within the lane-change window.
fn fresh_cut_in_by_npc(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 14; // lane flip at step 4, contact at step 13
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.5, n),
            ys: constant(6.0, n),
            v: 25.0,
        },
        Path {
            role,
            xs: ramp(17.5, 1.5, n),
            ys: descend(9.5, 6.0, n),
            v: 15.0,
        },
    )
}

/// NPC rear-ends the ego from behind in the same lane.
fn rear_end_by_npc(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 5; // gap 5 - 1.5k turns negative at step 4
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(30.0, 1.5, n),
            ys: constant(6.0, n),
            v: 15.0,
        },
        Path {
            role,
            xs: ramp(20.0, 3.0, n),
            ys: constant(6.0, n),
            v: 30.0,
        },
    )
}

/// Ego rear-ends a lane-keeping NPC ahead.
fn rear_end_by_ego(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 8; // gap 10 - 1.5k turns negative at step 7
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.5, n),
            ys: constant(6.0, n),
            v: 25.0,
        },
        Path {
            role,
            xs: ramp(15.0, 1.0, n),
            ys: constant(6.0, n),
            v: 10.0,
        },
    )
}

/// Ego rear-ends an NPC whose cut-in happened longer ago than the
/// lane-change window; the stale maneuver no longer shifts fault.
fn stale_cut_in_rear_end_by_ego(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 16; // lane flip at step 4, contact at step 15
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.5, n),
            ys: constant(6.0, n),
            v: 25.0,
        },
        Path {
            role,
            xs: ramp(19.0, 1.5, n),
            ys: descend(9.5, 6.0, n),
            v: 15.0,
        },
    )
}

/// Ego swipes an NPC alongside while changing lanes toward it.
fn swipe_by_ego(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 6;
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.0, n),
            ys: (0..n).map(|k| 6.0 + 0.5 * k as f64).collect(),
            v: 20.0,
        },
        Path {
            role,
            xs: ramp(0.0, 2.0, n),
            ys: constant(10.0, n),
            v: 20.0,
        },
    )
}

/// Ego plows into a stopped NPC.
fn stopped_npc_hit_by_ego(role: Role, episode_id: u64) -> EpisodeLog {
    let n = 16; // gap 35 - 2.5k, first strictly positive overlap at step 15
    build_log(
        episode_id,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.5, n),
            ys: constant(6.0, n),
            v: 25.0,
        },
        Path {
            role,
            xs: constant(40.0, n),
            ys: constant(6.0, n),
            v: 0.0,
        },
    )
}

/// Twelve ground-truth collision trajectories, three per category.
pub fn classification_suite() -> Vec<(&'static str, EpisodeLog, CollisionType4)> {
    use CollisionType4::*;
    use Role::{Background, RlAttacker};
    vec![
        ("rl_swipes_ego", swipe_by_npc(RlAttacker, 0), RlToEgo),
        ("rl_fresh_cut_in", fresh_cut_in_by_npc(RlAttacker, 1), RlToEgo),
        ("rl_rear_ends_ego", rear_end_by_npc(RlAttacker, 2), RlToEgo),
        ("ndd_swipes_ego", swipe_by_npc(Background, 3), NddToEgo),
        ("ndd_fresh_cut_in", fresh_cut_in_by_npc(Background, 4), NddToEgo),
        ("ndd_rear_ends_ego", rear_end_by_npc(Background, 5), NddToEgo),
        ("ego_rear_ends_rl", rear_end_by_ego(RlAttacker, 6), EgoToRl),
        (
            "ego_rear_ends_rl_stale_cut_in",
            stale_cut_in_rear_end_by_ego(RlAttacker, 7),
            EgoToRl,
        ),
        ("ego_swipes_rl", swipe_by_ego(RlAttacker, 8), EgoToRl),
        ("ego_rear_ends_ndd", rear_end_by_ego(Background, 9), EgoToNdd),
        ("ego_swipes_ndd", swipe_by_ego(Background, 10), EgoToNdd),
        (
            "ego_hits_stopped_ndd",
            stopped_npc_hit_by_ego(Background, 11),
            EgoToNdd,
        ),
    ]
}

/// A cut-in log with a single lane-marking crossing before the collision.
pub fn single_cut_in_log() -> EpisodeLog {
    let n = 16;
    build_log(
        100,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.5, n),
            ys: constant(6.0, n),
            v: 25.0,
        },
        Path {
            role: Role::RlAttacker,
            xs: ramp(19.0, 1.5, n),
            ys: descend(9.5, 6.0, n),
            v: 15.0,
        },
    )
}

/// The attacker touches the ego lane's marking, aborts, and commits later;
/// the last crossing (step 6) is the one that precedes the collision.
pub fn abort_then_commit_cut_in_log() -> EpisodeLog {
    let n = 16;
    let ys = vec![
        9.5, 9.0, 8.5, 9.0, 9.5, 9.0, 8.5, 8.0, 7.5, 7.0, 6.5, 6.0, 6.0, 6.0, 6.0, 6.0,
    ];
    build_log(
        101,
        Path {
            role: Role::Ego,
            xs: ramp(0.0, 2.5, n),
            ys: constant(6.0, n),
            v: 25.0,
        },
        Path {
            role: Role::RlAttacker,
            xs: ramp(19.0, 1.5, n),
            ys,
            v: 15.0,
        },
    )
}

/// Same-lane pursuit with no lateral motion at all.
pub fn no_lane_change_collision_log() -> EpisodeLog {
    rear_end_by_ego(Role::RlAttacker, 102)
}

/// A background-on-background contact, for the non-ego error path.
pub fn non_ego_collision_log() -> EpisodeLog {
    let n = 5;
    let mut log = build_log(
        103,
        Path {
            role: Role::Ego,
            xs: ramp(30.0, 1.5, n),
            ys: constant(6.0, n),
            v: 15.0,
        },
        Path {
            role: Role::Background,
            xs: ramp(20.0, 3.0, n),
            ys: constant(6.0, n),
            v: 30.0,
        },
    );
    // Relabel the "ego" as a second background vehicle.
    for step in &mut log.steps {
        step.vehicles[0].role = Role::Background;
    }
    log
}
