//! Gap-acceptance pedestrian used as a synthetic respondent.

use serde::{Deserialize, Serialize};

use crate::experiment::{ControlContext, ControlInput, ControllerError, PedestrianController};
use crate::microsim::World;
use crate::scene::{CrossingGeometry, SignalPhase};
use crate::Vec2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapAcceptanceParams {
    /// Smallest time gap accepted (s).
    pub critical_gap: f64,
    pub walk_speed: f64,
    /// Waits for the walk phase where there is a signal.
    pub signal_compliant: bool,
    /// Gap at which a non-compliant walker crosses against the signal.
    pub jaywalk_threshold: Option<f64>,
    /// Time constant of the drift back to the curb while waiting (s).
    pub return_time: f64,
}

impl Default for GapAcceptanceParams {
    fn default() -> Self {
        GapAcceptanceParams {
            critical_gap: 4.8,
            walk_speed: 1.4,
            signal_compliant: true,
            jaywalk_threshold: None,
            return_time: 2.5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Go,
    Wait,
}

/// A vehicle on a conflicting lane that has not reached the zone yet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ApproachingVehicle {
    /// Index of the lane conflict it approaches.
    pub lane: usize,
    /// Front bumper distance to the zone entry (m).
    pub distance: f64,
    pub speed: f64,
}

/// Time until the first vehicle reaches the crossing: per lane the nearest
/// approaching vehicle counts, stationary ones never arrive.
pub fn time_gap(approaching: &[ApproachingVehicle]) -> f64 {
    let mut lanes: Vec<usize> = approaching.iter().map(|v| v.lane).collect();
    lanes.sort_unstable();
    lanes.dedup();
    lanes
        .into_iter()
        .map(|lane| {
            let nearest = approaching
                .iter()
                .filter(|v| v.lane == lane)
                .min_by(|a, b| a.distance.total_cmp(&b.distance))
                .expect("lane has a vehicle");
            if nearest.speed > 0.0 {
                nearest.distance / nearest.speed
            } else {
                f64::INFINITY
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Whether a walker at the curb starts crossing now. `signal` is `None` on
/// unsignalized crossings.
pub fn decide(approaching: &[ApproachingVehicle], signal: Option<SignalPhase>, p: &GapAcceptanceParams) -> Decision {
    let on_red = matches!(signal, Some(s) if s != SignalPhase::WalkGreen);
    let needed = if on_red {
        if p.signal_compliant {
            match p.jaywalk_threshold {
                Some(th) => th,
                None => return Decision::Wait,
            }
        } else {
            p.jaywalk_threshold.unwrap_or(p.critical_gap)
        }
    } else {
        p.critical_gap
    };
    if time_gap(approaching) >= needed {
        Decision::Go
    } else {
        Decision::Wait
    }
}

/// Where a waiting walker of `radius` stands: just short of the entry anchor.
pub fn curb_spot(crossing: &CrossingGeometry, radius: f64) -> Vec2 {
    crossing.entry - crossing.axis * radius
}

/// Desired velocity for a decision. Waiting walkers drift back to the curb
/// spot and are still there; crossing walkers head past the exit anchor.
pub fn control(
    position: Vec2,
    decision: Decision,
    crossing: &CrossingGeometry,
    p: &GapAcceptanceParams,
    max_speed: f64,
    radius: f64,
) -> Vec2 {
    let v = match decision {
        Decision::Wait => ((curb_spot(crossing, radius) - position) / p.return_time).clamp_norm(p.walk_speed),
        Decision::Go => {
            let target = crossing.exit + crossing.axis * (2.0 * radius);
            (target - position).normalized() * p.walk_speed
        }
    };
    v.clamp_norm(max_speed)
}

/// Vehicles on the crossing's lanes whose front has not reached the zone.
pub fn approaching_vehicles(world: &World, crossing: &CrossingGeometry) -> Vec<ApproachingVehicle> {
    let layout = world.layout();
    let mut out = Vec::new();
    for &ci in &crossing.lanes {
        let c = &layout.lane_conflicts[ci];
        for a in world.agents() {
            if let Some(v) = a.vehicle.as_ref().filter(|v| v.link == c.link && v.s < c.s_in) {
                out.push(ApproachingVehicle { lane: ci, distance: c.s_in - v.s, speed: v.speed });
            }
        }
    }
    out
}

/// Stateful controller: decides at the curb each tick until it goes, then
/// walks across without reconsidering.
#[derive(Clone, Debug, PartialEq)]
pub struct Autopilot {
    pub params: GapAcceptanceParams,
    committed: bool,
}

impl Autopilot {
    pub fn new(params: GapAcceptanceParams) -> Self {
        Autopilot { params, committed: false }
    }

    pub fn committed(&self) -> bool {
        self.committed
    }
}

impl PedestrianController for Autopilot {
    fn control(&mut self, ctx: &ControlContext<'_>) -> Result<ControlInput, ControllerError> {
        let me = ctx
            .world
            .agent(ctx.respondent)
            .ok_or_else(|| ControllerError(format!("respondent {} missing", ctx.respondent)))?;
        if !self.committed {
            let approaching = approaching_vehicles(ctx.world, ctx.crossing);
            self.committed = decide(&approaching, ctx.world.signal_phase(), &self.params) == Decision::Go;
        }
        let decision = if self.committed { Decision::Go } else { Decision::Wait };
        let params = ctx.world.params();
        let v = control(
            me.position,
            decision,
            ctx.crossing,
            &self.params,
            params.pedestrian.max_speed,
            params.bodies.pedestrian_radius,
        );
        Ok(ControlInput::velocity(v))
    }
}
