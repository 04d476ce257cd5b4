//! Intelligent Driver Model car following.

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdmParams<T: Copy> {
    /// Desired speed v0 (m/s).
    pub desired_speed: T,
    /// Safe time headway T (s).
    pub time_headway: T,
    /// Maximum acceleration a (m/s²).
    pub max_accel: T,
    /// Comfortable deceleration b (m/s²).
    pub comfortable_decel: T,
    /// Jam distance s0 (m).
    pub jam_distance: T,
    /// Acceleration exponent δ.
    pub exponent: T,
    /// Hard braking limit (m/s²), at least `comfortable_decel`.
    pub emergency_decel: T,
}

impl<T: Real> IdmParams<T> {
    /// Urban defaults with the given desired speed.
    pub fn urban(desired_speed: T) -> Self {
        IdmParams {
            desired_speed,
            time_headway: T::lit(1.5),
            max_accel: T::lit(1.4),
            comfortable_decel: T::lit(2.0),
            jam_distance: T::lit(2.0),
            exponent: T::lit(4.0),
            emergency_decel: T::lit(8.0),
        }
    }

    pub fn with_desired_speed(mut self, v0: T) -> Self {
        self.desired_speed = v0;
        self
    }

    pub fn is_valid(&self) -> bool {
        let z = T::zero();
        self.desired_speed > z
            && self.time_headway > z
            && self.max_accel > z
            && self.comfortable_decel > z
            && self.jam_distance > z
            && self.exponent > z
            && self.emergency_decel >= self.comfortable_decel
    }

    /// Desired dynamic gap s*.
    pub fn desired_gap(&self, speed: T, approach_speed: T) -> T {
        let dynamic = speed * self.time_headway
            + speed * approach_speed / (T::lit(2.0) * (self.max_accel * self.comfortable_decel).sqrt());
        self.jam_distance + dynamic.max(T::zero())
    }

    /// Smallest bumper gap behind a leader at equal speed `speed` for which
    /// the follower's deceleration does not exceed `decel`.
    pub fn insertion_gap(&self, speed: T, decel: T) -> T {
        let free = T::one() - (speed / self.desired_speed).powf(self.exponent);
        let budget = free + decel / self.max_accel;
        if budget <= T::zero() {
            return T::infinity();
        }
        self.desired_gap(speed, T::zero()) / budget.sqrt()
    }
}

impl Default for IdmParams<f64> {
    fn default() -> Self {
        IdmParams::urban(13.89)
    }
}

/// What a follower sees of its leader.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapObservation<T: Copy> {
    /// Bumper-to-bumper gap s (m).
    pub gap: T,
    pub leader_speed: T,
    /// Approach rate Δv = v - v_leader (m/s).
    pub approach_speed: T,
}

impl<T: Real> GapObservation<T> {
    pub fn new(gap: T, own_speed: T, leader_speed: T) -> Self {
        GapObservation { gap, leader_speed, approach_speed: own_speed - leader_speed }
    }

    /// A stationary obstacle `gap` metres ahead.
    pub fn stationary(gap: T, own_speed: T) -> Self {
        GapObservation::new(gap, own_speed, T::zero())
    }
}

/// IDM acceleration, clamped to `[-emergency_decel, max_accel]`.
pub fn idm_acceleration<T: Real>(speed: T, leader: Option<&GapObservation<T>>, p: &IdmParams<T>) -> T {
    let v = speed.max(T::zero());
    let free = T::one() - (v / p.desired_speed).powf(p.exponent);
    let interaction = match leader {
        Some(obs) => {
            // Non-positive gaps mean contact; the clamp turns this into full braking.
            let s = obs.gap.max(T::lit(1e-3));
            (p.desired_gap(v, obs.approach_speed) / s).sq()
        }
        None => T::zero(),
    };
    (p.max_accel * (free - interaction)).max(-p.emergency_decel).min(p.max_accel)
}
