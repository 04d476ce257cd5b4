//! Stop-point logic for autonomous and human-driven vehicles.
//!
//! Both controllers return a virtual stationary leader position (front-bumper
//! arc length on the vehicle's link). The engine feeds it to IDM as a
//! zero-length obstacle, so the vehicle comes to rest roughly one jam
//! distance short of it.

use serde::{Deserialize, Serialize};

use crate::idm::{idm_acceleration, GapObservation};
use crate::scene::{LaneConflict, SignalPhase};
use crate::{IdmParams, Vec2};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct YieldParams {
    /// Virtual leader setback from the zone entry (m).
    pub safe_distance: f64,
    /// How far ahead a walker's zone entry is anticipated (s).
    pub anticipation: f64,
    /// Slack required between a walker leaving the zone and the vehicle
    /// arriving, or between the vehicle clearing and the walker arriving (s).
    pub clearance_margin: f64,
    /// Walkers predicted slower than this are taken to be standing (m/s).
    pub min_walking_speed: f64,
}

impl Default for YieldParams {
    fn default() -> Self {
        YieldParams { safe_distance: 2.0, anticipation: 2.0, clearance_margin: 0.5, min_walking_speed: 0.5 }
    }
}

/// What a vehicle controller sees of a walker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WalkerView {
    pub position: Vec2,
    pub velocity: Vec2,
    pub desired_velocity: Vec2,
}

impl WalkerView {
    /// The faster of the current and desired velocity. A walker starting
    /// from rest is judged by where it intends to go.
    pub fn predicted_velocity(&self) -> Vec2 {
        if self.desired_velocity.norm_sq() > self.velocity.norm_sq() {
            self.desired_velocity
        } else {
            self.velocity
        }
    }
}

/// Longitudinal state the controllers need.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Approach {
    /// Front bumper arc length (m).
    pub front: f64,
    pub speed: f64,
    pub length: f64,
}

/// Constant deceleration needed to stop within `distance`.
pub fn required_decel(speed: f64, distance: f64) -> f64 {
    if speed <= 0.0 {
        0.0
    } else if distance <= 0.0 {
        f64::INFINITY
    } else {
        speed * speed / (2.0 * distance)
    }
}

/// Whether IDM brings a vehicle to rest behind a stationary obstacle `gap`
/// metres ahead without ever braking harder than the comfortable
/// deceleration, integrated with the engine's step `dt`.
pub fn stops_comfortably(speed: f64, gap: f64, idm: &IdmParams, dt: f64) -> bool {
    let (mut v, mut s) = (speed.max(0.0), gap);
    let max_steps = (120.0 / dt).ceil() as usize;
    for _ in 0..max_steps {
        if v <= 0.0 {
            return true;
        }
        let acc = idm_acceleration(v, Some(&GapObservation::stationary(s, v)), idm);
        let next = v + acc * dt;
        let applied = if next < 0.0 { -v / dt } else { acc };
        if -applied > idm.comfortable_decel {
            return false;
        }
        v = next.max(0.0);
        s -= v * dt;
    }
    true
}

/// Earliest time to cover `distance` starting at `speed`, accelerating at
/// `accel` up to `max_speed`.
pub fn earliest_arrival(distance: f64, speed: f64, accel: f64, max_speed: f64) -> f64 {
    if distance <= 0.0 {
        return 0.0;
    }
    let v = speed.min(max_speed).max(0.0);
    let ramp_time = (max_speed - v) / accel;
    let ramp_dist = v * ramp_time + 0.5 * accel * ramp_time * ramp_time;
    if distance >= ramp_dist {
        ramp_time + (distance - ramp_dist) / max_speed
    } else {
        (-v + (v * v + 2.0 * accel * distance).sqrt()) / accel
    }
}

/// Stop point for an autonomous vehicle approaching `conflict`.
///
/// The vehicle yields when some walker is in the zone or will enter it
/// within the anticipation window, unless the walker is gone before the
/// vehicle can possibly arrive, or the vehicle is through before the walker
/// enters.
pub fn av_yield_target(
    vehicle: &Approach,
    walkers: impl IntoIterator<Item = WalkerView>,
    conflict: &LaneConflict,
    idm: &IdmParams,
    p: &YieldParams,
) -> Option<f64> {
    if vehicle.front >= conflict.s_in {
        return None;
    }
    let to_zone = conflict.s_in - vehicle.front;
    let t_arrive = earliest_arrival(to_zone, vehicle.speed, idm.max_accel, idm.desired_speed.max(vehicle.speed));
    let t_clear = if vehicle.speed > 0.0 {
        (conflict.s_out - vehicle.front + vehicle.length) / vehicle.speed
    } else {
        f64::INFINITY
    };
    for w in walkers {
        let mut heading = w.predicted_velocity();
        if heading.norm() < p.min_walking_speed {
            heading = Vec2::zero();
        }
        let Some((t_in, t_out)) = conflict.zone.ray_interval(w.position, heading) else {
            continue;
        };
        if t_in > p.anticipation {
            continue;
        }
        if t_out + p.clearance_margin < t_arrive || t_clear + p.clearance_margin < t_in {
            continue;
        }
        return Some(conflict.s_in - p.safe_distance);
    }
    None
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DriverDecision {
    pub stop: Option<f64>,
    /// Latched choice made at the start of the clearance phase:
    /// `Some(true)` to stop, `Some(false)` to run through.
    pub clearance_stop: Option<bool>,
}

/// Stop point for a human driver: stop at the line on red, decide once
/// at the start of clearance whether a comfortable stop is possible, and brake for a
/// walker already in the zone only if it is physically possible.
pub fn human_driver_target(
    vehicle: &Approach,
    clearance_latch: Option<bool>,
    signal: Option<SignalPhase>,
    conflict: &LaneConflict,
    walkers: impl IntoIterator<Item = WalkerView>,
    idm: &IdmParams,
    stop_line_setback: f64,
    dt: f64,
) -> DriverDecision {
    if vehicle.front >= conflict.s_in {
        return DriverDecision::default();
    }
    let stop_line = conflict.s_in - stop_line_setback;
    let before_line = vehicle.front <= stop_line;
    let mut decision = DriverDecision::default();
    match signal {
        None | Some(SignalPhase::VehicleGreen) => {}
        Some(SignalPhase::Clearance) => {
            if before_line {
                let stop = clearance_latch
                    .unwrap_or_else(|| stops_comfortably(vehicle.speed, stop_line - vehicle.front, idm, dt));
                decision.clearance_stop = Some(stop);
                if stop {
                    decision.stop = Some(stop_line);
                }
            }
        }
        Some(SignalPhase::WalkGreen) => {
            if before_line {
                decision.stop = Some(stop_line);
            }
        }
    }
    if decision.stop.is_none() {
        let occupied = walkers.into_iter().any(|w| conflict.zone.contains(w.position));
        if occupied && required_decel(vehicle.speed, conflict.s_in - vehicle.front) <= idm.emergency_decel {
            decision.stop = Some(conflict.s_in);
        }
    }
    decision
}
