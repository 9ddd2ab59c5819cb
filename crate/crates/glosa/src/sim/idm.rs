//! Car-following dynamics: the intelligent-driver acceleration law, the
//! trapezoidal kinematic step, and a hard stopping-distance cap that keeps
//! gaps non-negative even under clamped per-class decelerations.

use serde::{Deserialize, Serialize};

use super::types::VehicleClass;
use crate::error::{GlosaError, Result};

/// Parameters of the car-following law shared by all classes.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IdmParams {
    /// Desired time headway, s.
    pub headway_time: f64,
    /// Free-flow acceleration exponent.
    pub accel_exponent: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self { headway_time: 1.0, accel_exponent: 4.0 }
    }
}

impl IdmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.headway_time > 0.0 && self.accel_exponent > 0.0) {
            return Err(GlosaError::Config(
                "headway_time and accel_exponent must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// What the follower sees ahead: the net (bumper-to-bumper) gap and the
/// leader's speed. A red signal is modeled as a zero-length standstill
/// leader at the stop line.
#[derive(Debug, Clone, Copy)]
pub struct LeaderView {
    /// Net gap to the leader's rear bumper, m. Negative gaps are collisions
    /// and are rejected upstream; a zero gap drives the interaction term to
    /// infinity, which the clamp turns into full braking.
    pub gap: f64,
    /// Leader speed, m/s.
    pub speed: f64,
    /// Leader's maximum deceleration magnitude, m/s^2. Bounds how quickly
    /// the leader can possibly stop; zero for immovable obstacles.
    pub decel_max: f64,
}

impl LeaderView {
    /// A zero-length standstill obstacle `gap` meters ahead (red stop line).
    pub fn obstacle(gap: f64) -> Self {
        Self { gap, speed: 0.0, decel_max: 0.0 }
    }
}

/// Car-following acceleration for a vehicle of `class` travelling at `speed`
/// toward `desired_speed`, clamped to the class's capability range
/// `[-decel_max, accel_max]`.
///
/// With no leader this reduces to the free-flow term
/// `accel_max * (1 - (v/v0)^delta)`; with a leader the quadratic interaction
/// term pushes the follower toward the dynamic desired gap
/// `s* = min_gap + max(0, v*T + v*dv / (2*sqrt(accel_max*decel_max)))`.
pub fn idm_acceleration(
    speed: f64,
    class: &VehicleClass,
    leader: Option<LeaderView>,
    desired_speed: f64,
    params: &IdmParams,
) -> f64 {
    let free = (speed / desired_speed).powf(params.accel_exponent);
    let interaction = match leader {
        None => 0.0,
        Some(l) => {
            let dv = speed - l.speed;
            let dynamic = speed * params.headway_time
                + speed * dv / (2.0 * (class.accel_max * class.decel_max).sqrt());
            let s_star = class.min_gap + dynamic.max(0.0);
            let ratio = s_star / l.gap;
            ratio * ratio
        }
    };
    let accel = class.accel_max * (1.0 - free - interaction);
    accel.clamp(-class.decel_max, class.accel_max)
}

/// Advance speed and position over `dt` with constant acceleration and
/// trapezoidal displacement; speed is clamped to `[0, v_cap]` so vehicles
/// never reverse or exceed their cap.
pub fn kinematic_step(v: f64, a: f64, dt: f64, v_cap: f64) -> (f64, f64) {
    let v_next = (v + a * dt).clamp(0.0, v_cap);
    let dx = 0.5 * (v + v_next) * dt;
    (v_next, dx)
}

/// Largest acceleration the follower may apply for the next substep of
/// length `dt` without ever being able to outdrive its braking. Two bounds
/// are enforced on the post-step speed `u`:
///
/// 1. this step's travel plus the discrete worst-case stopping distance
///    (`u^2/(2b) + u*dt/2` at the follower's own `decel_max`) must fit in
///    the current gap plus the leader's guaranteed remaining travel
///    (braking at the leader's `decel_max`);
/// 2. this step's travel alone must fit in the current gap plus the
///    leader's guaranteed travel during this step.
///
/// Applied every substep this keeps gaps non-negative for any admissible
/// leader behavior; it binds only in emergencies that plain car-following
/// cannot resolve under a clamped deceleration.
pub fn stopping_cap(speed: f64, leader: LeaderView, own_decel_max: f64, dt: f64) -> f64 {
    let b = own_decel_max;
    let reserve = if leader.decel_max > 0.0 {
        leader.speed * leader.speed / (2.0 * leader.decel_max)
    } else {
        0.0
    };
    // Bound 1: u^2/(2b) + u*dt <= gap + reserve - v*dt/2.
    let budget = leader.gap + reserve - 0.5 * speed * dt;
    let u_stop = if budget <= 0.0 {
        0.0
    } else {
        (-b * dt + (b * b * dt * dt + 2.0 * b * budget).sqrt()).max(0.0)
    };
    // Bound 2: (v+u)/2*dt <= gap + leader's minimum travel this step.
    let leader_next = (leader.speed - leader.decel_max * dt).max(0.0);
    let leader_travel = 0.5 * (leader.speed + leader_next) * dt;
    let u_gap = (2.0 * (leader.gap + leader_travel) / dt - speed).max(0.0);
    (u_stop.min(u_gap) - speed) / dt
}
