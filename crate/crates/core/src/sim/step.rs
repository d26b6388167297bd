//! World stepping and contact detection.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::sim::{
    ContactEvent, KinematicAction, ScenarioConfig, VehicleId, WorldState,
};

pub type ActionMap = BTreeMap<VehicleId, KinematicAction>;

/// Why a commanded action was downgraded to `keep_speed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IllegalActionKind {
    LaneChangeInProgress,
    OffRoadEdge,
}

#[derive(Debug, Clone, Default)]
pub struct StepOutcome {
    pub events: Vec<ContactEvent>,
    /// Lane actions that were downgraded this step, with the reason.
    pub illegal: Vec<(VehicleId, IllegalActionKind)>,
}

/// Advance the world by one step.
///
/// Vehicles missing from `actions` keep their speed. Longitudinal speed is
/// frozen while a lane change is in progress; an illegal lane command is
/// downgraded to `keep_speed` and flagged rather than aborting the episode.
pub fn step_world(
    world: &mut WorldState,
    actions: &ActionMap,
    config: &ScenarioConfig,
) -> StepOutcome {
    let mut outcome = StepOutcome::default();
    let dt = config.dt;
    let lane_count = world.geometry.lane_count;
    let lane_width = world.geometry.lane_width;

    for vehicle in world.vehicles.iter_mut() {
        let caps = config.caps_for(vehicle.role);
        let action = actions
            .get(&vehicle.id)
            .copied()
            .unwrap_or(KinematicAction::KeepSpeed);

        let mut accel = 0.0;
        match action {
            KinematicAction::LaneLeft | KinematicAction::LaneRight => {
                if vehicle.changing_lane() {
                    outcome
                        .illegal
                        .push((vehicle.id, IllegalActionKind::LaneChangeInProgress));
                } else {
                    let target = if action == KinematicAction::LaneLeft {
                        vehicle.lane.checked_add(1).filter(|&l| l < lane_count)
                    } else {
                        vehicle.lane.checked_sub(1)
                    };
                    match target {
                        Some(target) => {
                            vehicle.target_lane = Some(target);
                            let dir = if target > vehicle.lane { 1.0 } else { -1.0 };
                            vehicle.lateral_v = dir * lane_width / config.lane_change_duration;
                        }
                        None => {
                            outcome
                                .illegal
                                .push((vehicle.id, IllegalActionKind::OffRoadEdge));
                        }
                    }
                }
            }
            KinematicAction::DecelMax => accel = -caps.decel,
            KinematicAction::KeepSpeed => {}
            KinematicAction::AccelMax => accel = caps.accel,
        }

        // Longitudinal speed is held for the whole lane-change maneuver.
        if vehicle.changing_lane() {
            accel = 0.0;
        }

        let v_new = (vehicle.v + accel * dt).clamp(0.0, caps.v_max);
        vehicle.x += 0.5 * (vehicle.v + v_new) * dt;
        vehicle.v = v_new;

        if let Some(target) = vehicle.target_lane {
            let center = world.geometry.lane_center(target);
            let step_dist = (vehicle.lateral_v * dt).abs();
            if (center - vehicle.y).abs() <= step_dist {
                vehicle.y = center;
                vehicle.lateral_v = 0.0;
                vehicle.target_lane = None;
            } else {
                vehicle.y += vehicle.lateral_v * dt;
            }
            vehicle.lane = world.geometry.nearest_lane(vehicle.y);
        }
    }

    world.step_index += 1;
    world.t = world.step_index as f64 * dt;
    outcome.events = detect_collisions(world);
    outcome
}

/// One event per unordered vehicle pair whose body rectangles intersect with
/// strictly positive area. Touching edges do not count.
pub fn detect_collisions(world: &WorldState) -> Vec<ContactEvent> {
    let mut events = Vec::new();
    let n = world.vehicles.len();
    for i in 0..n {
        for j in (i + 1)..n {
            let a = &world.vehicles[i];
            let b = &world.vehicles[j];
            // Cheap reject on the longitudinal axis before building rects.
            if a.x > b.x + b.length || b.x > a.x + a.length {
                continue;
            }
            let area = a.body().intersection_area(&b.body());
            if area > 0.0 {
                let (first, second) = if a.id < b.id { (a, b) } else { (b, a) };
                events.push(ContactEvent {
                    a: first.id,
                    b: second.id,
                    overlap_area: area,
                    rel_v: first.v - second.v,
                    lateral_v_a: first.lateral_v,
                    lateral_v_b: second.lateral_v,
                });
            }
        }
    }
    events
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{init_scenario, LaneGeometry, Role, ScenarioConfig, VehicleState};

    fn empty_world() -> (WorldState, ScenarioConfig) {
        let config = ScenarioConfig {
            n_background: 0,
            ..ScenarioConfig::default()
        };
        (init_scenario(&config).unwrap(), config)
    }

    fn act(id: u32, a: KinematicAction) -> ActionMap {
        let mut m = ActionMap::new();
        m.insert(VehicleId(id), a);
        m
    }

    #[test]
    fn keep_speed_advances_trapezoidally() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 20.0;
        let x0 = world.vehicles[0].x;
        step_world(&mut world, &act(0, KinematicAction::KeepSpeed), &config);
        assert!((world.vehicles[0].x - x0 - 2.0).abs() < 1e-12);
        assert_eq!(world.vehicles[0].v, 20.0);
    }

    #[test]
    fn decel_max_uses_cap_and_trapezoid() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 20.0;
        let x0 = world.vehicles[0].x;
        step_world(&mut world, &act(0, KinematicAction::DecelMax), &config);
        assert!((world.vehicles[0].v - 19.6).abs() < 1e-12);
        assert!((world.vehicles[0].x - x0 - 1.98).abs() < 1e-12);
    }

    #[test]
    fn speed_never_goes_negative() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 1.0;
        for _ in 0..20 {
            step_world(&mut world, &act(0, KinematicAction::DecelMax), &config);
            assert!(world.vehicles[0].v >= 0.0);
        }
        assert_eq!(world.vehicles[0].v, 0.0);
    }

    #[test]
    fn lane_change_moves_in_constant_lateral_steps_then_snaps() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 20.0;
        let y0 = world.vehicles[0].y;
        step_world(&mut world, &act(0, KinematicAction::LaneLeft), &config);
        assert!((world.vehicles[0].y - y0 - 0.4).abs() < 1e-12);
        for _ in 0..8 {
            step_world(&mut world, &ActionMap::new(), &config);
        }
        assert!(world.vehicles[0].changing_lane());
        step_world(&mut world, &ActionMap::new(), &config);
        assert!(!world.vehicles[0].changing_lane());
        assert_eq!(world.vehicles[0].y, y0 + 4.0);
        assert_eq!(world.vehicles[0].lateral_v, 0.0);
    }

    #[test]
    fn lane_speed_frozen_during_change() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 20.0;
        step_world(&mut world, &act(0, KinematicAction::LaneLeft), &config);
        step_world(&mut world, &act(0, KinematicAction::AccelMax), &config);
        assert_eq!(world.vehicles[0].v, 20.0);
    }

    #[test]
    fn lane_change_at_edge_is_flagged_and_downgraded() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 20.0;
        // Ego starts in the middle lane of 3; push to the top lane first.
        step_world(&mut world, &act(0, KinematicAction::LaneLeft), &config);
        for _ in 0..10 {
            step_world(&mut world, &ActionMap::new(), &config);
        }
        assert_eq!(world.vehicles[0].lane, 2);
        let out = step_world(&mut world, &act(0, KinematicAction::LaneLeft), &config);
        assert_eq!(
            out.illegal,
            vec![(VehicleId(0), IllegalActionKind::OffRoadEdge)]
        );
        assert!(!world.vehicles[0].changing_lane());
    }

    #[test]
    fn lane_change_while_changing_is_flagged() {
        let (mut world, config) = empty_world();
        world.vehicles[0].v = 20.0;
        step_world(&mut world, &act(0, KinematicAction::LaneLeft), &config);
        let out = step_world(&mut world, &act(0, KinematicAction::LaneRight), &config);
        assert_eq!(
            out.illegal,
            vec![(VehicleId(0), IllegalActionKind::LaneChangeInProgress)]
        );
    }

    fn two_car_world(lead_x: f64, follower_x: f64) -> WorldState {
        let config = ScenarioConfig {
            n_background: 0,
            ..ScenarioConfig::default()
        };
        let mut world = init_scenario(&config).unwrap();
        let template = world.vehicles[0].clone();
        world.vehicles[0].x = follower_x;
        world.vehicles.push(VehicleState {
            id: VehicleId(1),
            role: Role::Background,
            x: lead_x,
            ..template
        });
        world
    }

    #[test]
    fn positive_gap_is_no_contact() {
        let world = two_car_world(10.0, 10.0 - 5.0 - 0.5);
        assert!(detect_collisions(&world).is_empty());
    }

    #[test]
    fn half_meter_overlap_has_area_one() {
        // follower front at 10.5, lead rear at 10.0 -> 0.5 m x 2.0 m overlap
        let world = two_car_world(10.0, 5.5);
        let events = detect_collisions(&world);
        assert_eq!(events.len(), 1);
        assert!((events[0].overlap_area - 1.0).abs() < 1e-12);
        assert_eq!((events[0].a, events[0].b), (VehicleId(0), VehicleId(1)));
    }

    #[test]
    fn exact_edge_contact_is_not_a_collision() {
        let world = two_car_world(10.0, 5.0);
        assert!(detect_collisions(&world).is_empty());
    }

    #[test]
    fn time_tracks_step_index_exactly() {
        let (mut world, config) = empty_world();
        for _ in 0..37 {
            step_world(&mut world, &ActionMap::new(), &config);
        }
        assert_eq!(world.step_index, 37);
        assert_eq!(world.t, 37.0 * config.dt);
    }

    #[test]
    fn geometry_lane_helpers() {
        let geo = LaneGeometry::default();
        assert_eq!(geo.lane_center(0), 2.0);
        assert_eq!(geo.lane_center(2), 10.0);
        assert_eq!(geo.nearest_lane(1.9), 0);
        assert_eq!(geo.nearest_lane(4.1), 1);
        assert_eq!(geo.nearest_lane(-3.0), 0);
        assert_eq!(geo.nearest_lane(50.0), 2);
    }
}
