//! Seeded scenario initialization.
//!
//! Background vehicles are placed on a per-lane grid of candidate slots
//! spaced `spawn_gap_min` apart, so feasibility is a counting question and
//! any selection of distinct slots keeps all pairwise gaps at or above the
//! minimum. Slots conflicting with the ego start position are excluded.

use crate::rng::StreamRng;
use crate::sim::{
    Role, ScenarioConfig, SimError, VehicleId, VehicleState, WorldState,
};

/// Build the initial world for a config. Identical config and seed produce a
/// bit-identical world.
pub fn init_scenario(config: &ScenarioConfig) -> Result<WorldState, SimError> {
    config.validate()?;
    let mut rng = StreamRng::for_episode(config.seed, 0);
    let geo = config.geometry;

    let ego_lane = geo.lane_count / 2;
    let ego = VehicleState {
        id: VehicleId(0),
        role: Role::Ego,
        x: 0.0,
        y: geo.lane_center(ego_lane),
        v: config.spawn_speed_range[0],
        lateral_v: 0.0,
        lane: ego_lane,
        length: config.vehicle_length,
        width: config.vehicle_width,
        target_lane: None,
    };

    // Candidate slots: x in {0, g, 2g, ...} while the body fits on the road.
    let gap = config.spawn_gap_min;
    let mut slots: Vec<(usize, f64)> = Vec::new();
    for lane in 0..geo.lane_count {
        let mut k = 0u32;
        loop {
            let x = f64::from(k) * gap;
            if x + config.vehicle_length > geo.road_length {
                break;
            }
            let blocked = lane == ego_lane && (x - ego.x).abs() < gap;
            if !blocked {
                slots.push((lane, x));
            }
            k += 1;
        }
    }

    if config.n_background > slots.len() {
        return Err(SimError::InfeasiblePlacement {
            requested: config.n_background,
            available: slots.len(),
        });
    }

    // Draw distinct slots: partial Fisher-Yates over the ordered slot list.
    let mut vehicles = vec![ego];
    for i in 0..config.n_background {
        let j = i + rng.below(slots.len() - i);
        slots.swap(i, j);
        let (lane, x) = slots[i];
        let v = rng.uniform(config.spawn_speed_range[0], config.spawn_speed_range[1]);
        vehicles.push(VehicleState {
            id: VehicleId(1 + i as u32),
            role: Role::Background,
            x,
            y: geo.lane_center(lane),
            v,
            lateral_v: 0.0,
            lane,
            length: config.vehicle_length,
            width: config.vehicle_width,
            target_lane: None,
        });
    }

    Ok(WorldState {
        t: 0.0,
        step_index: 0,
        vehicles,
        geometry: geo,
        rng,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::detect_collisions;

    #[test]
    fn identical_seed_gives_identical_world() {
        let config = ScenarioConfig {
            seed: 7,
            ..ScenarioConfig::default()
        };
        let a = init_scenario(&config).unwrap();
        let b = init_scenario(&config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_background_means_only_ego() {
        let config = ScenarioConfig {
            n_background: 0,
            ..ScenarioConfig::default()
        };
        let world = init_scenario(&config).unwrap();
        assert_eq!(world.vehicles.len(), 1);
        assert_eq!(world.vehicles[0].role, Role::Ego);
    }

    #[test]
    fn infeasible_placement_matches_slot_count() {
        // 100 m road, 30 m separation: slots at 0/30/60/90 per lane, 3 lanes,
        // minus the ego-blocked slot -> 11 < 20.
        let config = ScenarioConfig {
            geometry: crate::sim::LaneGeometry {
                lane_count: 3,
                lane_width: 4.0,
                road_length: 100.0,
            },
            spawn_gap_min: 30.0,
            n_background: 20,
            ..ScenarioConfig::default()
        };
        match init_scenario(&config) {
            Err(SimError::InfeasiblePlacement {
                requested,
                available,
            }) => {
                assert_eq!(requested, 20);
                assert_eq!(available, 11);
            }
            other => panic!("expected InfeasiblePlacement, got {other:?}"),
        }
    }

    #[test]
    fn spawned_world_has_no_overlaps_and_respects_gaps() {
        for seed in 0..20 {
            let config = ScenarioConfig {
                seed,
                n_background: 12,
                ..ScenarioConfig::default()
            };
            let world = init_scenario(&config).unwrap();
            assert!(detect_collisions(&world).is_empty());
            for a in &world.vehicles {
                for b in &world.vehicles {
                    if a.id < b.id && a.lane == b.lane {
                        assert!(
                            (a.x - b.x).abs() >= config.spawn_gap_min - 1e-9,
                            "lane {} gap {}",
                            a.lane,
                            (a.x - b.x).abs()
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn spawn_speeds_inside_range() {
        let config = ScenarioConfig {
            seed: 3,
            n_background: 12,
            ..ScenarioConfig::default()
        };
        let world = init_scenario(&config).unwrap();
        let [lo, hi] = config.spawn_speed_range;
        for v in world.vehicles.iter().filter(|v| v.role == Role::Background) {
            assert!(v.v >= lo && v.v < hi);
        }
    }
}
