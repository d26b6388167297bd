//! Three-layer relative safety regions ahead of the ego vehicle.
//!
//! The three longitudinal distances answer the same question under three
//! assumed ego responses, with the target vehicle ahead holding its current
//! speed throughout:
//!
//! * danger: ego brakes at maximum deceleration immediately, zero reaction
//!   time. Closer than this, a collision is unavoidable.
//! * boundary: ego accelerates at maximum acceleration for the reaction time,
//!   then brakes at maximum deceleration.
//! * safety: same reaction phase, then braking at the *minimum* deceleration.
//!   Farther than this, even a lazy response avoids contact.
//!
//! Each distance is the net relative displacement accumulated until the two
//! speeds equalize, clamped at zero when no closing ever occurs. Stacking the
//! distances with per-layer lateral margins yields three nested rectangles in
//! front of the ego; the reward weighs how much of an NPC body falls in each
//! ring.

use serde::{Deserialize, Serialize};

use crate::sim::VehicleState;

/// How the lateral extents of the three layers are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum LateralMode {
    /// Fixed small margins per layer (the default operating mode).
    #[default]
    Fixed,
    /// Evaluate the longitudinal formulas on lateral speeds instead.
    /// Degenerates to zero margins for lane-keeping vehicles.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyParams {
    /// Maximum ego deceleration, m/s^2.
    pub a_max_dece: f64,
    /// Maximum ego acceleration during the reaction phase, m/s^2.
    pub a_max_accel: f64,
    /// Minimum ego deceleration, m/s^2.
    pub a_min_dece: f64,
    /// Reaction time, s.
    pub rho: f64,
    /// Fixed lateral margins per layer, m.
    pub d_y_danger: f64,
    pub d_y_boundary: f64,
    pub d_y_safety: f64,
    pub lateral_mode: LateralMode,
}

impl Default for SafetyParams {
    fn default() -> Self {
        Self {
            a_max_dece: 4.0,
            a_max_accel: 2.0,
            a_min_dece: 0.2,
            rho: 0.3,
            d_y_danger: 0.3,
            d_y_boundary: 0.9,
            d_y_safety: 1.8,
            lateral_mode: LateralMode::Fixed,
        }
    }
}

impl SafetyParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.a_max_dece > self.a_min_dece && self.a_min_dece > 0.0) {
            return Err("need a_max_dece > a_min_dece > 0".into());
        }
        if self.a_max_accel <= 0.0 {
            return Err("a_max_accel must be > 0".into());
        }
        if self.rho < 0.0 {
            return Err("rho must be >= 0".into());
        }
        if !(0.0 <= self.d_y_danger
            && self.d_y_danger <= self.d_y_boundary
            && self.d_y_boundary <= self.d_y_safety)
        {
            return Err("lateral margins must be ordered 0 <= danger <= boundary <= safety".into());
        }
        Ok(())
    }
}

/// Relative distance closed while the rear vehicle brakes at `a_dece` from
/// `v_self` down to the lead speed `v_other`, after a reaction phase of
/// `rho` seconds at acceleration `a_accel`. Zero when no closing occurs.
fn closing_distance(v_self: f64, v_other: f64, rho: f64, a_accel: f64, a_dece: f64) -> f64 {
    let v_response = v_self + a_accel * rho;
    if v_response <= v_other {
        // The braking phase never closes; the whole maneuver opens the gap.
        return 0.0;
    }
    let d = v_self * rho + 0.5 * a_accel * rho * rho
        + (v_response * v_response - v_other * v_other) / (2.0 * a_dece)
        - v_other * (rho + (v_response - v_other) / a_dece);
    d.max(0.0)
}

/// Distance below which a collision is unavoidable even under immediate
/// maximum braking.
pub fn danger_distance_x(v_ego: f64, v_npc: f64, params: &SafetyParams) -> f64 {
    if v_ego <= v_npc {
        return 0.0;
    }
    let d = (v_ego * v_ego - v_npc * v_npc) / (2.0 * params.a_max_dece)
        - v_npc * (v_ego - v_npc) / params.a_max_dece;
    d.max(0.0)
}

/// Distance below which the ego must initiate emergency braking within the
/// reaction time to avoid contact.
pub fn boundary_distance_x(v_ego: f64, v_npc: f64, params: &SafetyParams) -> f64 {
    closing_distance(v_ego, v_npc, params.rho, params.a_max_accel, params.a_max_dece)
}

/// Distance above which braking at the minimum deceleration after the
/// reaction time still avoids contact.
pub fn safety_distance_x(v_ego: f64, v_npc: f64, params: &SafetyParams) -> f64 {
    closing_distance(v_ego, v_npc, params.rho, params.a_max_accel, params.a_min_dece)
}

/// Axis-aligned rectangle, `x_min <= x_max`, `y_min <= y_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Self {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min) * (self.y_max - self.y_min)
    }

    pub fn intersection_area(&self, other: &Rect) -> f64 {
        let dx = (self.x_max.min(other.x_max) - self.x_min.max(other.x_min)).max(0.0);
        let dy = (self.y_max.min(other.y_max) - self.y_min.max(other.y_min)).max(0.0);
        dx * dy
    }

    pub fn translated(&self, dx: f64, dy: f64) -> Rect {
        Rect {
            x_min: self.x_min + dx,
            x_max: self.x_max + dx,
            y_min: self.y_min + dy,
            y_max: self.y_max + dy,
        }
    }

    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }
}

/// The three nested rectangles ahead of the ego plus their generating
/// longitudinal depths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionLayers {
    pub d_x_danger: f64,
    pub d_x_boundary: f64,
    pub d_x_safety: f64,
    pub danger_rect: Rect,
    pub boundary_rect: Rect,
    pub safety_rect: Rect,
}

/// Per-layer overlap areas of an NPC body with the nested regions. The
/// boundary and safety components are ring areas, so the three parts
/// partition the overlap with the outermost rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RegionOverlap {
    pub s_danger: f64,
    pub s_boundary: f64,
    pub s_safety: f64,
}

impl RegionOverlap {
    pub fn total(&self) -> f64 {
        self.s_danger + self.s_boundary + self.s_safety
    }
}

/// Assemble the nested layers for an ego/NPC speed pair. Rectangles are
/// anchored at the ego front bumper in world coordinates and extend forward
/// only; layer extents are maxed with the inner layer so nesting holds by
/// construction.
///
/// `npc_v_y` participates only in [`LateralMode::Dynamic`].
pub fn build_region_layers(
    ego: &VehicleState,
    npc_v_x: f64,
    npc_v_y: f64,
    params: &SafetyParams,
) -> RegionLayers {
    let d_x_danger = danger_distance_x(ego.v, npc_v_x, params);
    let d_x_boundary = boundary_distance_x(ego.v, npc_v_x, params).max(d_x_danger);
    let d_x_safety = safety_distance_x(ego.v, npc_v_x, params).max(d_x_boundary);

    let (d_y_danger, d_y_boundary, d_y_safety) = match params.lateral_mode {
        LateralMode::Fixed => (params.d_y_danger, params.d_y_boundary, params.d_y_safety),
        LateralMode::Dynamic => {
            let vy_ego = ego.lateral_v.abs();
            let vy_npc = npc_v_y.abs();
            let d = danger_distance_x(vy_ego, vy_npc, params);
            let b = boundary_distance_x(vy_ego, vy_npc, params).max(d);
            let s = safety_distance_x(vy_ego, vy_npc, params).max(b);
            (d, b, s)
        }
    };

    let x_front = ego.front();
    let half_w = 0.5 * ego.width;
    let layer_rect = |depth: f64, margin: f64| {
        Rect::new(
            x_front,
            x_front + depth,
            ego.y - (half_w + margin),
            ego.y + (half_w + margin),
        )
    };

    RegionLayers {
        d_x_danger,
        d_x_boundary,
        d_x_safety,
        danger_rect: layer_rect(d_x_danger, d_y_danger),
        boundary_rect: layer_rect(d_x_boundary, d_y_boundary),
        safety_rect: layer_rect(d_x_safety, d_y_safety),
    }
}

/// Split the NPC body's overlap with the nested rectangles into disjoint
/// ring areas. `s_danger + s_boundary + s_safety` equals the overlap with the
/// outer safety rectangle by construction.
pub fn overlap_areas(npc_rect: &Rect, layers: &RegionLayers) -> RegionOverlap {
    let in_danger = npc_rect.intersection_area(&layers.danger_rect);
    let in_boundary = npc_rect.intersection_area(&layers.boundary_rect);
    let in_safety = npc_rect.intersection_area(&layers.safety_rect);
    RegionOverlap {
        s_danger: in_danger,
        s_boundary: in_boundary - in_danger,
        s_safety: in_safety - in_boundary,
    }
}
