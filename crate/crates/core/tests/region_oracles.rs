//! Independent numerical oracles for the safety-region distances and areas.
//!
//! The closed-form distances are checked against a dt = 1e-3 forward
//! integration of the same maneuver, and the overlap partition against a
//! stratified Monte-Carlo area estimate. Neither oracle shares code with the
//! implementation.

use authsim_core::region::{
    boundary_distance_x, build_region_layers, danger_distance_x, overlap_areas, Rect,
    SafetyParams,
};
use authsim_core::region::safety_distance_x;
use authsim_core::rng::{StreamRng, STREAM_ENV};
use authsim_core::sim::{Role, VehicleId, VehicleState};

/// Maximum distance the ego closes on a constant-speed vehicle ahead, by
/// forward integration: accelerate at `a_accel` for `rho`, then brake at
/// `a_dece` until the speeds match.
fn integrated_closure(v_ego: f64, v_npc: f64, rho: f64, a_accel: f64, a_dece: f64) -> f64 {
    let dt = 1e-3;
    let mut t = 0.0;
    let mut v = v_ego;
    let mut closure = 0.0_f64;
    let mut max_closure = 0.0_f64;
    loop {
        if t >= rho && v <= v_npc + 1e-12 {
            break; // braking below the target speed never closes further
        }
        let v_next = if t < rho {
            v + a_accel * dt
        } else {
            (v - a_dece * dt).max(v_npc)
        };
        closure += 0.5 * (v + v_next) * dt - v_npc * dt;
        max_closure = max_closure.max(closure);
        v = v_next;
        t += dt;
        if t > rho + 400.0 {
            panic!("integration did not terminate");
        }
    }
    max_closure
}

fn oracle_danger(v_ego: f64, v_npc: f64, p: &SafetyParams) -> f64 {
    integrated_closure(v_ego, v_npc, 0.0, 0.0, p.a_max_dece)
}

fn oracle_boundary(v_ego: f64, v_npc: f64, p: &SafetyParams) -> f64 {
    integrated_closure(v_ego, v_npc, p.rho, p.a_max_accel, p.a_max_dece)
}

fn oracle_safety(v_ego: f64, v_npc: f64, p: &SafetyParams) -> f64 {
    integrated_closure(v_ego, v_npc, p.rho, p.a_max_accel, p.a_min_dece)
}

#[test]
fn reference_pair_matches_integration_oracle() {
    let p = SafetyParams::default();
    let (ve, vn) = (20.0, 10.0);

    let danger = danger_distance_x(ve, vn, &p);
    assert!((danger - 12.5).abs() < 1e-3);
    assert!((danger - oracle_danger(ve, vn, &p)).abs() < 1e-2);

    let boundary = boundary_distance_x(ve, vn, &p);
    assert!((boundary - 17.135).abs() < 1e-3);
    assert!((boundary - oracle_boundary(ve, vn, &p)).abs() < 1e-2);

    let safety = safety_distance_x(ve, vn, &p);
    assert!((safety - 283.99).abs() < 1e-3);
    assert!((safety - oracle_safety(ve, vn, &p)).abs() < 1e-1);
}

#[test]
fn closed_forms_match_integration_on_random_speed_pairs() {
    let p = SafetyParams::default();
    let mut rng = StreamRng::new(1234, STREAM_ENV);
    for _ in 0..1000 {
        let v_npc = rng.uniform(0.0, 35.0);
        let v_ego = v_npc + rng.uniform(0.01, 40.0 - v_npc.min(39.0));
        let danger = danger_distance_x(v_ego, v_npc, &p);
        let boundary = boundary_distance_x(v_ego, v_npc, &p);
        let safety = safety_distance_x(v_ego, v_npc, &p);
        assert!(
            (danger - oracle_danger(v_ego, v_npc, &p)).abs() < 1e-2,
            "danger({v_ego}, {v_npc})"
        );
        assert!(
            (boundary - oracle_boundary(v_ego, v_npc, &p)).abs() < 1e-2,
            "boundary({v_ego}, {v_npc})"
        );
        assert!(
            (safety - oracle_safety(v_ego, v_npc, &p)).abs() < 1e-1,
            "safety({v_ego}, {v_npc})"
        );
    }
}

#[test]
fn ego_slower_cases_match_max_zero_closure() {
    // When the response speed never exceeds the target's, the integrated
    // maximum closure is zero and the clamped forms agree.
    let p = SafetyParams::default();
    let mut rng = StreamRng::new(77, STREAM_ENV);
    for _ in 0..200 {
        let v_ego = rng.uniform(0.0, 20.0);
        let v_npc = v_ego + rng.uniform(1.0, 15.0);
        assert_eq!(danger_distance_x(v_ego, v_npc, &p), 0.0);
        if v_ego + p.a_max_accel * p.rho <= v_npc {
            assert_eq!(boundary_distance_x(v_ego, v_npc, &p), 0.0);
            assert_eq!(safety_distance_x(v_ego, v_npc, &p), 0.0);
        }
    }
}

#[test]
fn nesting_holds_over_random_configurations() {
    let p = SafetyParams::default();
    let mut rng = StreamRng::new(99, STREAM_ENV);
    let ego = ego_at(0.0);
    for _ in 0..100_000 {
        let v_ego = rng.uniform(0.0, 40.0);
        let v_npc = rng.uniform(0.0, 40.0);
        let mut e = ego.clone();
        e.v = v_ego;
        let layers = build_region_layers(&e, v_npc, 0.0, &p);
        assert!(layers.d_x_danger <= layers.d_x_boundary);
        assert!(layers.d_x_boundary <= layers.d_x_safety);
        assert!(layers.danger_rect.x_max <= layers.boundary_rect.x_max);
        assert!(layers.boundary_rect.x_max <= layers.safety_rect.x_max);
        assert!(layers.danger_rect.y_max <= layers.boundary_rect.y_max);
        assert!(layers.boundary_rect.y_max <= layers.safety_rect.y_max);
    }
}

#[test]
fn distances_monotone_in_ego_speed() {
    let p = SafetyParams::default();
    for vn10 in 0..=300 {
        let v_npc = vn10 as f64 * 0.1;
        let mut prev = (0.0, 0.0, 0.0);
        for ve10 in 0..=400 {
            let v_ego = ve10 as f64 * 0.1;
            let cur = (
                danger_distance_x(v_ego, v_npc, &p),
                boundary_distance_x(v_ego, v_npc, &p),
                safety_distance_x(v_ego, v_npc, &p),
            );
            assert!(cur.0 >= prev.0 - 1e-12, "danger at ({v_ego}, {v_npc})");
            assert!(cur.1 >= prev.1 - 1e-12, "boundary at ({v_ego}, {v_npc})");
            assert!(cur.2 >= prev.2 - 1e-12, "safety at ({v_ego}, {v_npc})");
            prev = cur;
        }
    }
}

fn ego_at(v: f64) -> VehicleState {
    VehicleState {
        id: VehicleId(0),
        role: Role::Ego,
        x: 40.0,
        y: 6.0,
        v,
        lateral_v: 0.0,
        lane: 1,
        length: 5.0,
        width: 2.0,
        target_lane: None,
    }
}

/// Stratified Monte-Carlo estimate of the per-layer overlap areas: one
/// jittered sample per cell of a 1000x1000 grid over the NPC body.
fn mc_overlap(npc: &Rect, layers: &authsim_core::region::RegionLayers, rng: &mut StreamRng) -> (f64, f64, f64) {
    const N: usize = 1000;
    let w = (npc.x_max - npc.x_min) / N as f64;
    let h = (npc.y_max - npc.y_min) / N as f64;
    let mut counts = (0u64, 0u64, 0u64);
    for i in 0..N {
        for j in 0..N {
            let x = npc.x_min + (i as f64 + rng.uniform(0.0, 1.0)) * w;
            let y = npc.y_min + (j as f64 + rng.uniform(0.0, 1.0)) * h;
            if layers.danger_rect.contains_point(x, y) {
                counts.0 += 1;
            } else if layers.boundary_rect.contains_point(x, y) {
                counts.1 += 1;
            } else if layers.safety_rect.contains_point(x, y) {
                counts.2 += 1;
            }
        }
    }
    let cell = npc.area() / (N * N) as f64;
    (
        counts.0 as f64 * cell,
        counts.1 as f64 * cell,
        counts.2 as f64 * cell,
    )
}

#[test]
fn monte_carlo_area_oracle_agrees_on_straddling_cases() {
    let p = SafetyParams::default();
    let mut rng = StreamRng::new(2024, STREAM_ENV);
    let mut tested = 0;
    while tested < 100 {
        let v_ego = rng.uniform(8.0, 38.0);
        let v_npc = rng.uniform(0.0, v_ego);
        let mut ego = ego_at(v_ego);
        ego.x = rng.uniform(0.0, 200.0);
        ego.y = rng.uniform(2.0, 10.0);
        let layers = build_region_layers(&ego, v_npc, 0.0, &p);
        if layers.d_x_danger < 0.5 {
            continue;
        }
        // Drop the NPC body across one of the layer boundaries.
        let split = match tested % 3 {
            0 => layers.d_x_danger,
            1 => layers.d_x_boundary,
            _ => layers.d_x_safety,
        };
        let rear = ego.x + ego.length + split - rng.uniform(0.5, 4.5);
        let y = ego.y + rng.uniform(-2.0, 2.0);
        let npc = Rect::new(rear, rear + 5.0, y - 1.0, y + 1.0);

        let exact = overlap_areas(&npc, &layers);
        if exact.total() < 1e-9 {
            continue;
        }
        let (mc_d, mc_b, mc_s) = mc_overlap(&npc, &layers, &mut rng);
        assert!((exact.s_danger - mc_d).abs() < 1e-2, "danger case {tested}");
        assert!((exact.s_boundary - mc_b).abs() < 1e-2, "boundary case {tested}");
        assert!((exact.s_safety - mc_s).abs() < 1e-2, "safety case {tested}");
        tested += 1;
    }
}

#[test]
fn partition_is_exact_for_random_rectangles() {
    let p = SafetyParams::default();
    let mut rng = StreamRng::new(31, STREAM_ENV);
    for _ in 0..10_000 {
        let v_ego = rng.uniform(0.0, 40.0);
        let v_npc = rng.uniform(0.0, 40.0);
        let mut ego = ego_at(v_ego);
        ego.x = rng.uniform(-100.0, 100.0);
        ego.y = rng.uniform(0.0, 12.0);
        let layers = build_region_layers(&ego, v_npc, 0.0, &p);
        let rear = rng.uniform(-150.0, 350.0);
        let y = rng.uniform(-5.0, 17.0);
        let npc = Rect::new(rear, rear + rng.uniform(0.1, 12.0), y, y + rng.uniform(0.1, 4.0));
        let ov = overlap_areas(&npc, &layers);
        assert!(ov.s_danger >= 0.0 && ov.s_boundary >= 0.0 && ov.s_safety >= 0.0);
        let whole = npc.intersection_area(&layers.safety_rect);
        assert!(
            (ov.total() - whole).abs() < 1e-12,
            "partition broke: {} vs {}",
            ov.total(),
            whole
        );
    }
}
