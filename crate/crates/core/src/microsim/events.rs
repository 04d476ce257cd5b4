//! Discrete events derived from consecutive world states.

use serde::{Deserialize, Serialize};

use super::{AgentId, AgentKind, World};
use crate::scene::SignalPhase;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimEventKind {
    Accident,
    CrossingStarted,
    CrossingCompleted,
    AvYieldStarted,
    SignalChange,
    EmergencyBrake,
    /// Manual note attached by an operator; never emitted by the engine.
    Annotation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub t: f64,
    pub kind: SimEventKind,
    pub subjects: Vec<AgentId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crosswalk: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phase: Option<SignalPhase>,
    /// Applied deceleration for braking events, required deceleration for
    /// accidents (m/s²).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decel: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accepted_gap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl SimEvent {
    pub fn new(t: f64, kind: SimEventKind, subjects: Vec<AgentId>) -> Self {
        SimEvent { t, kind, subjects, crosswalk: None, phase: None, decel: None, accepted_gap: None, note: None }
    }
}

/// Edge-triggered events between two consecutive states of the same world.
///
/// Order: signal change, then per-agent events by ascending id, then new
/// accident pairs.
pub fn detect_events(before: &World, after: &World) -> Vec<SimEvent> {
    let t = after.t();
    let mut out = Vec::new();
    let (p0, p1) = (before.signal_phase(), after.signal_phase());
    if let (Some(a), Some(b)) = (p0, p1) {
        if a != b {
            let mut e = SimEvent::new(t, SimEventKind::SignalChange, Vec::new());
            e.phase = Some(b);
            out.push(e);
        }
    }

    let comfortable = after.params().idm.comfortable_decel;
    let layout = after.layout();
    let prev = before.agents();
    let mut k = 0;
    for a in after.agents() {
        while k < prev.len() && prev[k].id < a.id {
            k += 1;
        }
        let old = prev.get(k).filter(|o| o.id == a.id);
        if let Some(v) = &a.vehicle {
            let was = old.and_then(|o| o.vehicle.as_ref());
            if -v.accel > comfortable && was.map_or(true, |w| -w.accel <= comfortable) {
                let mut e = SimEvent::new(t, SimEventKind::EmergencyBrake, vec![a.id]);
                e.decel = Some(-v.accel);
                out.push(e);
            }
            if a.kind == AgentKind::VehicleAutonomous && v.yielding && !was.map_or(false, |w| w.yielding) {
                out.push(SimEvent::new(t, SimEventKind::AvYieldStarted, vec![a.id]));
            }
        } else if a.kind == AgentKind::Pedestrian {
            let Some(old) = old else { continue };
            for c in &layout.crossings {
                if c.lateral(a.position).abs() > c.half_width {
                    continue;
                }
                let (g0, g1) = (c.progress(old.position), c.progress(a.position));
                let id = &after.scene().crosswalks[c.crosswalk].id;
                if g0 < 0.0 && g1 >= 0.0 {
                    let mut e = SimEvent::new(t, SimEventKind::CrossingStarted, vec![a.id]);
                    e.crosswalk = Some(id.clone());
                    out.push(e);
                }
                if g0 < 1.0 && g1 >= 1.0 {
                    let mut e = SimEvent::new(t, SimEventKind::CrossingCompleted, vec![a.id]);
                    e.crosswalk = Some(id.clone());
                    out.push(e);
                }
            }
        }
    }

    let old = before.hazards();
    for &(p, v) in after.hazards().iter() {
        if old.binary_search(&(p, v)).is_err() {
            let mut e = SimEvent::new(t, SimEventKind::Accident, vec![p, v]);
            if let Some(vs) = after.agent(v).and_then(|a| a.vehicle.as_ref()) {
                let to_zone = layout.conflicts_by_link[vs.link]
                    .iter()
                    .map(|&c| layout.lane_conflicts[c].s_in - vs.s)
                    .find(|&d| d > 0.0);
                e.decel = to_zone.map(|d| super::required_decel(vs.speed, d));
            }
            out.push(e);
        }
    }
    out
}
