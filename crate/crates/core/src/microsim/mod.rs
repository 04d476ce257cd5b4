//! Fixed-step multi-modal micro-simulation.
//!
//! Each step computes every agent's acceleration from the state at `t`
//! (in parallel, one pure function per agent) and then integrates all agents
//! with semi-implicit Euler in ascending id order. Output is bit-identical
//! regardless of the worker thread count.

pub mod bench;
mod drivers;
mod events;

use std::borrow::Cow;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use drivers::{
    av_yield_target, earliest_arrival, human_driver_target, required_decel, stops_comfortably, Approach,
    DriverDecision, WalkerView, YieldParams,
};
pub use events::{detect_events, SimEvent, SimEventKind};

use crate::idm::{idm_acceleration, GapObservation};
use crate::scene::{Scene, SceneError, SceneLayout, SignalPhase};
use crate::social_force::{neighbor_repulsion, obstacle_repulsion, Neighbor, Shape, SourceKind, Walker};
use crate::spatial::SpatialGrid;
use crate::{IdmParams, OrientedRect, SocialForceParams, Vec2};

pub type AgentId = u32;

/// Heading is only updated above this speed (m/s).
pub const HEADING_MIN_SPEED: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    VehicleHuman,
    VehicleAutonomous,
    Pedestrian,
    Cyclist,
}

impl AgentKind {
    pub fn is_vehicle(self) -> bool {
        matches!(self, AgentKind::VehicleHuman | AgentKind::VehicleAutonomous)
    }

    pub fn is_walker(self) -> bool {
        !self.is_vehicle()
    }
}

/// Body sizes used for repulsion and contact checks (m).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyDims {
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub pedestrian_radius: f64,
    pub cyclist_length: f64,
    pub cyclist_width: f64,
}

impl Default for BodyDims {
    fn default() -> Self {
        BodyDims {
            vehicle_length: 4.5,
            vehicle_width: 1.8,
            pedestrian_radius: 0.25,
            cyclist_length: 1.8,
            cyclist_width: 0.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    /// Engine tick rate (Hz).
    pub rate_hz: f64,
    /// Car-following parameters; `desired_speed` is overridden per vehicle.
    pub idm: IdmParams,
    pub pedestrian: SocialForceParams,
    pub cyclist: SocialForceParams,
    pub pedestrian_speed: f64,
    pub cyclist_speed: f64,
    pub bodies: BodyDims,
    /// Centre distance within which vehicles repel walkers (m).
    pub vehicle_interaction_radius: f64,
    /// Centre distance within which walkers repel each other (m).
    pub walker_interaction_radius: f64,
    pub yielding: YieldParams,
    /// Stop line distance before the first crosswalk on a link (m).
    pub stop_line_setback: f64,
    /// Largest deceleration a newly inserted vehicle may impose on itself.
    pub insertion_decel: f64,
    /// Whether vehicles obey the scene's signal plan.
    pub signalized: bool,
    /// Vehicles leaving a link re-enter at its start instead of despawning.
    pub ring_links: bool,
    /// Distance at which a wandering walker picks a new goal (m).
    pub wander_arrival: f64,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            rate_hz: 90.0,
            idm: IdmParams::default(),
            pedestrian: SocialForceParams::pedestrian(),
            cyclist: SocialForceParams::cyclist(),
            pedestrian_speed: 1.34,
            cyclist_speed: 4.2,
            bodies: BodyDims::default(),
            vehicle_interaction_radius: 6.0,
            walker_interaction_radius: 3.0,
            yielding: YieldParams::default(),
            stop_line_setback: 2.0,
            insertion_decel: 1.0,
            signalized: true,
            ring_links: false,
            wander_arrival: 1.0,
        }
    }
}

/// Identifies a scheduled vehicle: which approach stream and its position
/// in that stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VehicleTag {
    pub approach: u32,
    pub index: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VehicleState {
    pub link: usize,
    /// Front bumper arc length along the link centreline (m).
    pub s: f64,
    pub speed: f64,
    /// Acceleration applied during the last step (m/s²).
    pub accel: f64,
    /// Whether an autonomous vehicle is holding a yield stop point.
    pub yielding: bool,
    pub clearance_stop: Option<bool>,
    pub tag: Option<VehicleTag>,
}

/// How a walker picks its desired velocity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Steering {
    Idle,
    Goal(Vec2),
    /// Desired velocity supplied from outside (controllers, live input).
    Velocity(Vec2),
    /// Goal-seeking with a fresh random goal on arrival.
    Wander(Vec2),
}

#[derive(Clone, Debug, PartialEq)]
pub struct AgentState {
    pub id: AgentId,
    pub kind: AgentKind,
    pub position: Vec2,
    pub velocity: Vec2,
    pub heading: f64,
    pub desired_speed: f64,
    pub vehicle: Option<VehicleState>,
    pub steering: Steering,
}

impl AgentState {
    pub fn speed(&self) -> f64 {
        match &self.vehicle {
            Some(v) => v.speed,
            None => self.velocity.norm(),
        }
    }
}

/// A vehicle waiting to enter the network.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PendingVehicle {
    pub kind: AgentKind,
    pub link: usize,
    /// Time the front bumper passes `spawn_s` in free flow (s). May be
    /// negative, in which case the vehicle starts further downstream.
    pub release: f64,
    pub spawn_s: f64,
    pub speed: f64,
    pub tag: VehicleTag,
    /// Keeps the scheduled headway to the previous vehicle of its approach,
    /// taking over any delay that vehicle entered with. Other vehicles enter
    /// at their release time or as soon as the one ahead has entered.
    pub hold_headway: bool,
}

/// Insertion state of one approach.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
struct ApproachQueue {
    /// Release and actual time at which the last vehicle passed its spawn point.
    last: Option<(f64, f64)>,
    /// Extra wait of the vehicle at the head of the queue while blocked.
    wait: f64,
}

/// Wall-clock time spent in each phase of a step.
#[derive(Clone, Copy, Debug, Default)]
pub struct PhaseTimes {
    pub index: Duration,
    pub forces: Duration,
    pub integrate: Duration,
    pub events: Duration,
}

impl PhaseTimes {
    pub fn total(&self) -> Duration {
        self.index + self.forces + self.integrate + self.events
    }
}

enum Update {
    Vehicle { acc: f64, yielding: bool, clearance_stop: Option<bool> },
    Walker { acc: Vec2 },
}

#[derive(Clone, Debug)]
pub struct World {
    scene: Arc<Scene>,
    layout: Arc<SceneLayout>,
    params: SimParams,
    tick: u64,
    agents: Vec<AgentState>,
    next_id: AgentId,
    rng: ChaCha8Rng,
    pending: Vec<PendingVehicle>,
    /// Accumulated insertion delay per approach stream (s).
    queues: Vec<ApproachQueue>,
    hazards: Option<Vec<(AgentId, AgentId)>>,
    obstacle_boxes: Arc<Vec<(Vec2, Vec2)>>,
    /// Bounding circle of each lane conflict zone.
    conflict_reach: Arc<Vec<(Vec2, f64)>>,
}

impl World {
    pub fn new(scene: Arc<Scene>, params: SimParams, seed: u64) -> Result<Self, SceneError> {
        if !(params.rate_hz > 0.0) {
            return Err(SceneError::Invalid("tick rate must be positive".into()));
        }
        let layout = SceneLayout::new(&scene)?;
        let obstacle_boxes = scene.obstacles.iter().map(|o| o.bounding_box()).collect();
        let conflict_reach = layout
            .lane_conflicts
            .iter()
            .map(|c| {
                let (lo, hi) = c.zone.bounding_box();
                ((lo + hi) * 0.5, lo.dist(hi) * 0.5)
            })
            .collect();
        Ok(World {
            scene,
            layout: Arc::new(layout),
            params,
            tick: 0,
            agents: Vec::new(),
            next_id: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
            pending: Vec::new(),
            queues: Vec::new(),
            hazards: Some(Vec::new()),
            obstacle_boxes: Arc::new(obstacle_boxes),
            conflict_reach: Arc::new(conflict_reach),
        })
    }

    pub fn scene(&self) -> &Scene {
        &self.scene
    }

    pub fn scene_arc(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn layout(&self) -> &SceneLayout {
        &self.layout
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.params.rate_hz
    }

    /// Simulation time; computed from the tick count so that it never
    /// accumulates rounding error.
    pub fn t(&self) -> f64 {
        self.tick as f64 / self.params.rate_hz
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.binary_search_by_key(&id, |a| a.id).ok().map(|i| &self.agents[i])
    }

    pub fn pending(&self) -> &[PendingVehicle] {
        &self.pending
    }

    /// Current signal phase, or `None` when vehicles ignore signals.
    pub fn signal_phase(&self) -> Option<SignalPhase> {
        self.phase_at(self.t())
    }

    fn phase_at(&self, t: f64) -> Option<SignalPhase> {
        match (&self.scene.signal, self.params.signalized) {
            (Some(plan), true) => Some(plan.state(t)),
            _ => None,
        }
    }

    fn push_agent(&mut self, mut agent: AgentState) -> AgentId {
        agent.id = self.next_id;
        self.next_id += 1;
        self.hazards = None;
        let id = agent.id;
        self.agents.push(agent);
        id
    }

    pub fn add_pedestrian(&mut self, position: Vec2, steering: Steering) -> AgentId {
        let speed = self.params.pedestrian_speed;
        self.add_walker(AgentKind::Pedestrian, position, speed, steering)
    }

    pub fn add_cyclist(&mut self, position: Vec2, steering: Steering) -> AgentId {
        let speed = self.params.cyclist_speed;
        self.add_walker(AgentKind::Cyclist, position, speed, steering)
    }

    fn add_walker(&mut self, kind: AgentKind, position: Vec2, desired_speed: f64, steering: Steering) -> AgentId {
        self.push_agent(AgentState {
            id: 0,
            kind,
            position,
            velocity: Vec2::zero(),
            heading: 0.0,
            desired_speed,
            vehicle: None,
            steering,
        })
    }

    /// Places a vehicle with its front bumper at arc length `s`.
    pub fn add_vehicle(&mut self, kind: AgentKind, link: usize, s: f64, speed: f64) -> AgentId {
        let v0 = self.scene.links[link].speed_limit;
        self.insert_vehicle(kind, link, s, speed, v0, None)
    }

    fn insert_vehicle(
        &mut self,
        kind: AgentKind,
        link: usize,
        s: f64,
        speed: f64,
        desired_speed: f64,
        tag: Option<VehicleTag>,
    ) -> AgentId {
        assert!(kind.is_vehicle(), "vehicle kind required");
        let (position, heading) = self.vehicle_pose(link, s);
        let tangent = Vec2::from_angle(heading);
        self.push_agent(AgentState {
            id: 0,
            kind,
            position,
            velocity: tangent * speed,
            heading,
            desired_speed,
            vehicle: Some(VehicleState {
                link,
                s,
                speed,
                accel: 0.0,
                yielding: false,
                clearance_stop: None,
                tag,
            }),
            steering: Steering::Idle,
        })
    }

    fn vehicle_pose(&self, link: usize, s: f64) -> (Vec2, f64) {
        let (p, tangent) = self.layout.polylines[link].point_at(s - 0.5 * self.params.bodies.vehicle_length);
        (p, tangent.angle())
    }

    pub fn set_steering(&mut self, id: AgentId, steering: Steering) -> bool {
        match self.agents.binary_search_by_key(&id, |a| a.id) {
            Ok(i) if self.agents[i].kind.is_walker() => {
                self.agents[i].steering = steering;
                true
            }
            _ => false,
        }
    }

    /// Queues vehicles for insertion and releases those already due.
    pub fn schedule_vehicles(&mut self, vehicles: impl IntoIterator<Item = PendingVehicle>) {
        self.pending.extend(vehicles);
        self.pending.sort_by(|a, b| a.release.total_cmp(&b.release).then(a.tag.index.cmp(&b.tag.index)));
        self.release_due();
    }

    fn release_due(&mut self) {
        if self.pending.is_empty() {
            return;
        }
        let t = self.t();
        let dt = self.dt();
        let mut blocked: Vec<u32> = Vec::new();
        let mut i = 0;
        while i < self.pending.len() {
            let pv = self.pending[i];
            let approach = pv.tag.approach as usize;
            if self.queues.len() <= approach {
                self.queues.resize(approach + 1, ApproachQueue::default());
            }
            let q = self.queues[approach];
            let base = match q.last {
                Some((release, entered)) if pv.hold_headway => pv.release + (entered - release),
                Some((_, entered)) => pv.release.max(entered),
                None => pv.release,
            };
            let r = base + q.wait;
            if blocked.contains(&pv.tag.approach) || r > t + 1e-9 {
                blocked.push(pv.tag.approach);
                i += 1;
                continue;
            }
            let s = pv.spawn_s + (t - r).max(0.0) * pv.speed;
            match self.insertion_slot(&pv, s) {
                Some(slot) => {
                    let entered = t - (slot - pv.spawn_s) / pv.speed;
                    self.queues[approach] = ApproachQueue { last: Some((pv.release, entered)), wait: 0.0 };
                    self.pending.remove(i);
                    self.insert_vehicle(pv.kind, pv.link, slot, pv.speed, pv.speed, Some(pv.tag));
                }
                None => {
                    self.queues[approach].wait += t + dt - r;
                    blocked.push(pv.tag.approach);
                    i += 1;
                }
            }
        }
    }

    /// Where a pending vehicle can enter at or behind `s` without braking
    /// harder than `insertion_decel`, if anywhere at or past its spawn point.
    fn insertion_slot(&self, pv: &PendingVehicle, s: f64) -> Option<f64> {
        let len = self.params.bodies.vehicle_length;
        let leader = self
            .agents
            .iter()
            .filter_map(|a| a.vehicle.as_ref())
            .filter(|v| v.link == pv.link && v.s >= s - len)
            .min_by(|a, b| a.s.total_cmp(&b.s));
        let Some(leader) = leader else { return Some(s) };
        let idm = self.params.idm.with_desired_speed(pv.speed);
        let feasible = |pos: f64| {
            let obs = GapObservation::new(leader.s - len - pos, pv.speed, leader.speed);
            obs.gap > 0.0 && idm_acceleration(pv.speed, Some(&obs), &idm) >= -self.params.insertion_decel
        };
        if feasible(s) {
            return Some(s);
        }
        let gap = idm.insertion_gap(pv.speed.min(leader.speed), self.params.insertion_decel);
        let slot = leader.s - len - gap;
        (slot.is_finite() && slot >= pv.spawn_s && slot <= s && feasible(slot)).then_some(slot)
    }

    /// Desired velocity of a walker before social forces, capped at its
    /// kind's maximum speed.
    pub fn desired_velocity(&self, agent: &AgentState) -> Vec2 {
        let v = match agent.steering {
            Steering::Idle => Vec2::zero(),
            Steering::Velocity(v) => v,
            Steering::Goal(g) | Steering::Wander(g) => (g - agent.position).normalized() * agent.desired_speed,
        };
        v.clamp_norm(self.social_params(agent.kind).max_speed)
    }

    fn social_params(&self, kind: AgentKind) -> &SocialForceParams {
        match kind {
            AgentKind::Cyclist => &self.params.cyclist,
            _ => &self.params.pedestrian,
        }
    }

    fn walker_radius(&self, kind: AgentKind) -> f64 {
        match kind {
            AgentKind::Cyclist => 0.5 * self.params.bodies.cyclist_width,
            _ => self.params.bodies.pedestrian_radius,
        }
    }

    /// Contact shape of an agent.
    pub fn body(&self, agent: &AgentState) -> Shape<f64> {
        let b = &self.params.bodies;
        match agent.kind {
            AgentKind::Pedestrian => Shape::Disc { center: agent.position, radius: b.pedestrian_radius },
            AgentKind::Cyclist => {
                Shape::Rect(OrientedRect::new(agent.position, b.cyclist_length, b.cyclist_width, agent.heading))
            }
            _ => Shape::Rect(OrientedRect::new(agent.position, b.vehicle_length, b.vehicle_width, agent.heading)),
        }
    }

    fn walker_view(&self, agent: &AgentState) -> WalkerView {
        WalkerView { position: agent.position, velocity: agent.velocity, desired_velocity: self.desired_velocity(agent) }
    }

    /// Ids of agents within the closed ball around `position`, ascending.
    pub fn neighbor_query(&self, position: Vec2, radius: f64) -> Vec<AgentId> {
        let positions: Vec<Vec2> = self.agents.iter().map(|a| a.position).collect();
        let grid = SpatialGrid::new(&positions, radius.max(1e-6));
        grid.query(position, radius).into_iter().map(|i| self.agents[i].id).collect()
    }

    /// Leader index of each vehicle on the same link, with the arc length
    /// offset to add to the leader's `s` (non-zero only across a ring seam).
    fn leaders(&self) -> Vec<Option<(usize, f64)>> {
        let mut by_link: Vec<Vec<usize>> = vec![Vec::new(); self.scene.links.len()];
        for (i, a) in self.agents.iter().enumerate() {
            if let Some(v) = &a.vehicle {
                by_link[v.link].push(i);
            }
        }
        let mut leaders = vec![None; self.agents.len()];
        for (link, list) in by_link.iter_mut().enumerate() {
            list.sort_by(|&a, &b| {
                let (sa, sb) = (self.agents[a].vehicle.unwrap().s, self.agents[b].vehicle.unwrap().s);
                sa.total_cmp(&sb).then(self.agents[a].id.cmp(&self.agents[b].id))
            });
            for k in 0..list.len() {
                if k + 1 < list.len() {
                    leaders[list[k]] = Some((list[k + 1], 0.0));
                } else if self.params.ring_links && list.len() > 1 {
                    leaders[list[k]] = Some((list[0], self.layout.polylines[link].length()));
                }
            }
        }
        leaders
    }

    fn vehicle_update(&self, i: usize, leader: Option<(usize, f64)>, grid: &SpatialGrid) -> Update {
        let a = &self.agents[i];
        let v = a.vehicle.as_ref().expect("vehicle state");
        let idm = self.params.idm.with_desired_speed(a.desired_speed);
        let len = self.params.bodies.vehicle_length;
        let obs = leader.map(|(j, offset)| {
            let l = self.agents[j].vehicle.as_ref().expect("vehicle state");
            GapObservation::new(l.s + offset - len - v.s, v.speed, l.speed)
        });
        let mut acc = idm_acceleration(v.speed, obs.as_ref(), &idm);
        let approach = Approach { front: v.s, speed: v.speed, length: len };
        let mut yielding = false;
        let mut clearance_stop = None;
        let signal = self.signal_phase();
        for &ci in &self.layout.conflicts_by_link[v.link] {
            let conflict = &self.layout.lane_conflicts[ci];
            if conflict.s_in <= v.s {
                continue;
            }
            let (center, reach) = self.conflict_reach[ci];
            let radius = reach + self.params.yielding.anticipation * self.params.cyclist.max_speed + 1.0;
            let mut near: Vec<usize> = Vec::new();
            grid.for_each_within(center, radius, |j, _| {
                if self.agents[j].kind.is_walker() {
                    near.push(j);
                }
            });
            near.sort_unstable();
            let walkers = near.iter().map(|&j| self.walker_view(&self.agents[j]));
            let stop = match a.kind {
                AgentKind::VehicleAutonomous => {
                    let s = av_yield_target(&approach, walkers, conflict, &idm, &self.params.yielding);
                    yielding = s.is_some();
                    s
                }
                _ => {
                    let d = human_driver_target(
                        &approach,
                        v.clearance_stop,
                        signal,
                        conflict,
                        walkers,
                        &idm,
                        self.params.stop_line_setback,
                        self.dt(),
                    );
                    clearance_stop = d.clearance_stop;
                    d.stop
                }
            };
            if let Some(stop) = stop {
                let obs = GapObservation::stationary(stop - v.s, v.speed);
                acc = acc.min(idm_acceleration(v.speed, Some(&obs), &idm));
            }
            // Only the nearest crosswalk ahead governs.
            break;
        }
        Update::Vehicle { acc, yielding, clearance_stop }
    }

    fn walker_update(&self, i: usize, grid: &SpatialGrid) -> Update {
        let a = &self.agents[i];
        let p = self.social_params(a.kind);
        let me = Walker { position: a.position, velocity: a.velocity, radius: self.walker_radius(a.kind) };
        let mut acc = (self.desired_velocity(a) - a.velocity) / p.relaxation_time;
        let walker_r2 = self.params.walker_interaction_radius * self.params.walker_interaction_radius;
        // Grid iteration order is a pure function of the positions, so the
        // summation order is reproducible.
        grid.for_each_within(a.position, self.params.vehicle_interaction_radius, |j, d2| {
            let other = &self.agents[j];
            if j == i || (other.kind.is_walker() && d2 > walker_r2) {
                return;
            }
            let kind = match other.kind {
                AgentKind::Pedestrian => SourceKind::Pedestrian,
                AgentKind::Cyclist => SourceKind::Cyclist,
                _ => SourceKind::Vehicle,
            };
            acc += neighbor_repulsion(&me, &Neighbor { kind, shape: self.body(other) }, p);
        });
        let reach = 10.0 * p.obstacle.range + me.radius;
        for (o, (lo, hi)) in self.scene.obstacles.iter().zip(self.obstacle_boxes.iter()) {
            let q = a.position;
            if q.x < lo.x - reach || q.x > hi.x + reach || q.y < lo.y - reach || q.y > hi.y + reach {
                continue;
            }
            acc += obstacle_repulsion(&me, o, p);
        }
        Update::Walker { acc }
    }

    /// Advances one tick and returns the events it produced.
    pub fn step(&mut self) -> Vec<SimEvent> {
        self.step_inner(false).0
    }

    /// As [`World::step`], also reporting wall-clock time per phase.
    pub fn step_profiled(&mut self) -> (Vec<SimEvent>, PhaseTimes) {
        self.step_inner(true)
    }

    fn step_inner(&mut self, profile: bool) -> (Vec<SimEvent>, PhaseTimes) {
        let mut times = PhaseTimes::default();
        let mut clock = profile.then(Instant::now);
        let mut lap = |slot: &mut Duration| {
            if let Some(c) = clock.as_mut() {
                let now = Instant::now();
                *slot += now - *c;
                *c = now;
            }
        };

        let positions: Vec<Vec2> = self.agents.iter().map(|a| a.position).collect();
        let grid = SpatialGrid::new(&positions, self.params.vehicle_interaction_radius);
        let leaders = self.leaders();
        if self.hazards.is_none() {
            self.hazards = Some(self.compute_hazards());
        }
        let before = self.clone();
        lap(&mut times.index);

        let this = &*self;
        let updates: Vec<Update> = (0..this.agents.len())
            .into_par_iter()
            .with_min_len(256)
            .map(|i| {
                if this.agents[i].kind.is_vehicle() {
                    this.vehicle_update(i, leaders[i], &grid)
                } else {
                    this.walker_update(i, &grid)
                }
            })
            .collect();
        lap(&mut times.forces);

        self.integrate(&updates);
        self.tick += 1;
        self.despawn();
        self.release_due();
        lap(&mut times.integrate);

        self.hazards = Some(self.compute_hazards());
        let events = detect_events(&before, self);
        lap(&mut times.events);
        (events, times)
    }

    fn integrate(&mut self, updates: &[Update]) {
        let dt = self.dt();
        let area_box = self.scene.walk_area.bounding_box();
        for i in 0..self.agents.len() {
            match updates[i] {
                Update::Vehicle { acc, yielding, clearance_stop } => {
                    let (link, s, speed) = {
                        let v = self.agents[i].vehicle.as_mut().expect("vehicle state");
                        let raw = v.speed + acc * dt;
                        let (speed, applied) = if raw < 0.0 { (0.0, -v.speed / dt) } else { (raw, acc) };
                        v.speed = speed;
                        v.accel = applied;
                        v.s += speed * dt;
                        v.yielding = yielding;
                        v.clearance_stop = clearance_stop;
                        if self.params.ring_links {
                            let len = self.layout.polylines[v.link].length();
                            if v.s >= len {
                                v.s -= len;
                            }
                        }
                        (v.link, v.s, v.speed)
                    };
                    let (position, heading) = self.vehicle_pose(link, s);
                    let a = &mut self.agents[i];
                    a.position = position;
                    a.heading = heading;
                    a.velocity = Vec2::from_angle(heading) * speed;
                }
                Update::Walker { acc } => {
                    let max_speed = self.social_params(self.agents[i].kind).max_speed;
                    let a = &self.agents[i];
                    let velocity = (a.velocity + acc * dt).clamp_norm(max_speed);
                    let target = a.position + velocity * dt;
                    let walkable = self.scene.walkable(target);
                    let a = &mut self.agents[i];
                    if walkable {
                        a.position = target;
                        a.velocity = velocity;
                    } else {
                        a.velocity = Vec2::zero();
                    }
                    if a.velocity.norm() > HEADING_MIN_SPEED {
                        a.heading = a.velocity.angle();
                    }
                    if let Steering::Wander(goal) = a.steering {
                        if a.position.dist(goal) <= self.params.wander_arrival {
                            let (lo, hi) = area_box;
                            let g = Vec2::new(self.rng.gen_range(lo.x..=hi.x), self.rng.gen_range(lo.y..=hi.y));
                            self.agents[i].steering = Steering::Wander(g);
                        }
                    }
                }
            }
        }
    }

    fn despawn(&mut self) {
        if self.params.ring_links {
            return;
        }
        let len = self.params.bodies.vehicle_length;
        let layout = &self.layout;
        let before = self.agents.len();
        self.agents.retain(|a| match &a.vehicle {
            Some(v) => v.s - len <= layout.polylines[v.link].length(),
            None => true,
        });
        if self.agents.len() != before {
            self.hazards = None;
        }
    }

    /// Pedestrian–vehicle pairs in an accident configuration: overlapping
    /// bodies, or a pedestrian in a lane's conflict zone that the approaching
    /// vehicle reaches, at its current speed, before the pedestrian leaves
    /// along its current velocity, and cannot stop for even at emergency
    /// deceleration.
    fn compute_hazards(&self) -> Vec<(AgentId, AgentId)> {
        let vehicles: Vec<usize> = (0..self.agents.len()).filter(|&i| self.agents[i].kind.is_vehicle()).collect();
        let mut out = Vec::new();
        if vehicles.is_empty() {
            return out;
        }
        let b = &self.params.bodies;
        let positions: Vec<Vec2> = vehicles.iter().map(|&i| self.agents[i].position).collect();
        let grid = SpatialGrid::new(&positions, 5.0);
        let reach = 0.5 * b.vehicle_length.hypot(b.vehicle_width) + b.pedestrian_radius;
        for p in self.agents.iter().filter(|a| a.kind == AgentKind::Pedestrian) {
            grid.for_each_within(p.position, reach, |k, _| {
                let v = &self.agents[vehicles[k]];
                let rect = OrientedRect::new(v.position, b.vehicle_length, b.vehicle_width, v.heading);
                if rect.overlaps_disc(p.position, b.pedestrian_radius) {
                    out.push((p.id, v.id));
                }
            });
            for c in &self.layout.lane_conflicts {
                let Some((_, leaves)) = c.zone.ray_interval(p.position, p.velocity).filter(|_| c.zone.contains(p.position))
                else {
                    continue;
                };
                for &k in &vehicles {
                    let v = &self.agents[k];
                    let vs = v.vehicle.as_ref().expect("vehicle state");
                    let d = c.s_in - vs.s;
                    if vs.link == c.link
                        && d > 0.0
                        && d < vs.speed * leaves
                        && required_decel(vs.speed, d) > self.params.idm.emergency_decel
                    {
                        out.push((p.id, v.id));
                    }
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        out
    }

    /// Current accident pairs, sorted.
    pub fn hazards(&self) -> Cow<'_, [(AgentId, AgentId)]> {
        match &self.hazards {
            Some(h) => Cow::Borrowed(h.as_slice()),
            None => Cow::Owned(self.compute_hazards()),
        }
    }

    /// Order-sensitive digest of the full kinematic state.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |x: u64| {
            h ^= x;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        };
        mix(self.tick);
        for a in &self.agents {
            mix(a.id as u64);
            for x in [a.position.x, a.position.y, a.velocity.x, a.velocity.y, a.heading] {
                mix(x.to_bits());
            }
        }
        h
    }
}
