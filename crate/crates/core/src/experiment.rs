//! Crossing trial protocol: arrival schedules with inserted safe gaps,
//! respondent sessions, and the trial runner.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::microsim::{
    required_decel, AgentId, AgentKind, PendingVehicle, SimEvent, SimEventKind, SimParams, Steering, VehicleTag,
    World,
};
use crate::scene::{CrossingGeometry, Scene, SceneError, SpawnKind};
use crate::tracking::{LogHeader, TrajectoryLog};
use crate::Vec2;

/// Trials per session.
pub const TRIALS_PER_SESSION: usize = 10;
/// Inserted gaps are placed no later than this many mean headways before
/// the horizon, so the stream after them has room to continue.
const GAP_TAIL_HEADWAYS: f64 = 5.0;
const MAX_GENERATION_ATTEMPTS: u32 = 1000;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid trial parameters: {0}")]
    InvalidParams(String),
    #[error("horizon of {horizon} s cannot contain the inserted gaps")]
    HorizonTooShort { horizon: f64 },
    #[error("no schedule with all inserted gaps before the horizon after {0} attempts")]
    GenerationFailed(u32),
    #[error("a session needs exactly {expected} trials, got {got}")]
    TrialCount { expected: usize, got: usize },
    #[error("invalid respondent profile '{id}': {reason}")]
    InvalidProfile { id: String, reason: String },
    #[error("preference already recorded")]
    PreferenceAlreadyRecorded,
    #[error("session '{0}' has not completed its trials")]
    StageIncomplete(String),
    #[error("scene cannot host the trial: {0}")]
    Scene(#[from] SceneError),
    #[error("trial aborted: {0}")]
    Aborted(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "a_signalized_human")]
    SignalizedHuman,
    #[serde(rename = "b_unsignalized_av")]
    UnsignalizedAv,
}

impl Scenario {
    pub const ALL: [Scenario; 2] = [Scenario::SignalizedHuman, Scenario::UnsignalizedAv];

    pub fn signalized(self) -> bool {
        self == Scenario::SignalizedHuman
    }

    pub fn label(self) -> &'static str {
        match self {
            Scenario::SignalizedHuman => "a_signalized_human",
            Scenario::UnsignalizedAv => "b_unsignalized_av",
        }
    }
}

/// Fraction of autonomous vehicles in each scenario.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VehicleMix {
    pub signalized_human: f64,
    pub unsignalized_av: f64,
}

impl Default for VehicleMix {
    fn default() -> Self {
        VehicleMix { signalized_human: 0.0, unsignalized_av: 1.0 }
    }
}

impl VehicleMix {
    pub fn autonomous_share(&self, scenario: Scenario) -> f64 {
        match scenario {
            Scenario::SignalizedHuman => self.signalized_human,
            Scenario::UnsignalizedAv => self.unsignalized_av,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialParams {
    /// Mean of the exponential headway distribution (s).
    pub mean_headway: f64,
    /// Safe gaps inserted into the first approach stream (s).
    pub inserted_gaps: Vec<f64>,
    pub horizon: f64,
    pub speed_limit: f64,
    pub vehicle_mix: VehicleMix,
    /// Protocol-level master seed shared by all respondents.
    pub seed: u64,
    /// Independent approach streams; only the first carries inserted gaps.
    pub approaches: usize,
}

impl Default for TrialParams {
    fn default() -> Self {
        TrialParams {
            mean_headway: 4.0,
            inserted_gaps: vec![5.0, 7.0],
            horizon: 120.0,
            speed_limit: 13.89,
            vehicle_mix: VehicleMix::default(),
            seed: 0,
            approaches: 1,
        }
    }
}

impl TrialParams {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: &str| Err(ExperimentError::InvalidParams(m.into()));
        if !(self.mean_headway > 0.0) {
            return bad("mean_headway must be positive");
        }
        if !(self.horizon > 0.0) {
            return bad("horizon must be positive");
        }
        if !(self.speed_limit > 0.0) {
            return bad("speed_limit must be positive");
        }
        if self.inserted_gaps.iter().any(|g| !(*g > 0.0)) {
            return bad("inserted gaps must be positive");
        }
        if self.approaches == 0 {
            return bad("at least one approach is required");
        }
        for share in [self.vehicle_mix.signalized_human, self.vehicle_mix.unsignalized_av] {
            if !(0.0..=1.0).contains(&share) {
                return bad("vehicle mix shares must lie in [0, 1]");
            }
        }
        Ok(())
    }
}

/// Derives an independent generator from a master seed and a path of tags.
pub fn stream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    let mut h = seed;
    for &t in tags {
        h = splitmix(h ^ splitmix(t.wrapping_add(0x9e37_79b9_7f4a_7c15)));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const TAG_ARRIVALS: u64 = 1;
const TAG_KINDS: u64 = 2;
const TAG_WORLD: u64 = 3;
const TAG_RESPONDENTS: u64 = 4;

/// Precomputed vehicle arrivals for one trial.
///
/// Arrival times are when a vehicle's front bumper reaches its lane's
/// conflict zone in free flow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub trial_index: usize,
    pub scenario: Scenario,
    pub horizon: f64,
    /// Per approach, strictly increasing and below the horizon.
    pub arrival_times: Vec<Vec<f64>>,
    /// Positions `i` in the first stream where `arrival[i] - arrival[i-1]`
    /// is an inserted gap, listed in the order of `inserted_gaps`.
    pub gap_insertion_indices: Vec<usize>,
    /// Per approach, the drawn headway that crosses the horizon.
    pub tail_headways: Vec<f64>,
    pub seed: u64,
}

impl TrialSpec {
    /// Headways of one stream, the first measured from trial start.
    pub fn headways(&self, approach: usize) -> Vec<f64> {
        let a = &self.arrival_times[approach];
        let mut out = Vec::with_capacity(a.len());
        let mut prev = 0.0;
        for &t in a {
            out.push(t - prev);
            prev = t;
        }
        out
    }

    pub fn inserted_headways(&self) -> Vec<f64> {
        let a = &self.arrival_times[0];
        self.gap_insertion_indices.iter().map(|&i| a[i] - a[i - 1]).collect()
    }

    /// Every headway drawn from the exponential distribution, including the
    /// one that crosses the horizon.
    pub fn natural_headways(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for k in 0..self.arrival_times.len() {
            let h = self.headways(k);
            for (i, x) in h.into_iter().enumerate() {
                if k == 0 && self.gap_insertion_indices.contains(&i) {
                    continue;
                }
                out.push(x);
            }
            out.push(self.tail_headways[k]);
        }
        out
    }

    pub fn with_scenario(mut self, scenario: Scenario) -> Self {
        self.scenario = scenario;
        self
    }

    /// Headway `arrival[i] - arrival[i-1]` of the first stream, where
    /// `i == len` refers to the tail headway.
    pub fn headway_before(&self, i: usize) -> Option<f64> {
        let a = &self.arrival_times[0];
        if i == 0 {
            None
        } else if i < a.len() {
            Some(a[i] - a[i - 1])
        } else if i == a.len() {
            Some(self.tail_headways[0])
        } else {
            None
        }
    }

    /// Vehicle kinds per approach, drawn from a stream separate from the
    /// arrival times.
    pub fn vehicle_kinds(&self, mix: &VehicleMix) -> Vec<Vec<AgentKind>> {
        let share = mix.autonomous_share(self.scenario);
        let scen = Scenario::ALL.iter().position(|&s| s == self.scenario).unwrap_or(0) as u64;
        self.arrival_times
            .iter()
            .enumerate()
            .map(|(k, a)| {
                let mut rng = stream(self.seed, &[TAG_KINDS, self.trial_index as u64, k as u64, scen]);
                a.iter()
                    .map(|_| {
                        if rng.gen_bool(share) {
                            AgentKind::VehicleAutonomous
                        } else {
                            AgentKind::VehicleHuman
                        }
                    })
                    .collect()
            })
            .collect()
    }
}

/// Generates one trial's arrival schedule.
///
/// Each stream is a Poisson process: headways are i.i.d. exponential draws
/// until one crosses the horizon. On the first stream, the inserted gaps
/// are placed by uniform time marks: once an arrival reaches a mark, the
/// next headway is that inserted gap instead of a draw, and the rest of the
/// stream shifts by it. Whether a headway is replaced depends only on
/// earlier draws, so the remaining draws stay exponential.
pub fn generate_trial(params: &TrialParams, trial_index: usize) -> Result<TrialSpec, ExperimentError> {
    params.validate()?;
    let total: f64 = params.inserted_gaps.iter().sum();
    let latest = params.horizon - total - GAP_TAIL_HEADWAYS * params.mean_headway;
    if params.inserted_gaps.len() > 0 && !(latest > 0.0) {
        return Err(ExperimentError::HorizonTooShort { horizon: params.horizon });
    }
    let exp = Exp::new(1.0 / params.mean_headway).expect("positive rate");
    let mut arrival_times = Vec::with_capacity(params.approaches);
    let mut tail_headways = Vec::with_capacity(params.approaches);
    let mut gap_insertion_indices = Vec::new();
    for k in 0..params.approaches {
        let mut rng = stream(params.seed, &[TAG_ARRIVALS, trial_index as u64, k as u64]);
        let gaps: &[f64] = if k == 0 { &params.inserted_gaps } else { &[] };
        let mut attempt = 0;
        loop {
            attempt += 1;
            if attempt > MAX_GENERATION_ATTEMPTS {
                return Err(ExperimentError::GenerationFailed(MAX_GENERATION_ATTEMPTS));
            }
            if let Some((times, indices, tail)) = draw_stream(&mut rng, &exp, gaps, latest, params.horizon) {
                arrival_times.push(times);
                tail_headways.push(tail);
                if k == 0 {
                    gap_insertion_indices = indices;
                }
                break;
            }
        }
    }
    Ok(TrialSpec {
        trial_index,
        scenario: Scenario::SignalizedHuman,
        horizon: params.horizon,
        arrival_times,
        gap_insertion_indices,
        tail_headways,
        seed: params.seed,
    })
}

fn draw_stream(
    rng: &mut ChaCha8Rng,
    exp: &Exp<f64>,
    gaps: &[f64],
    latest: f64,
    horizon: f64,
) -> Option<(Vec<f64>, Vec<usize>, f64)> {
    // Marks in time order, each paired with the gap it triggers.
    let mut order: Vec<usize> = (0..gaps.len()).collect();
    order.shuffle(rng);
    let mut marks: Vec<f64> = (0..gaps.len()).map(|_| rng.gen_range(0.0..latest)).collect();
    marks.sort_by(f64::total_cmp);
    let mut slots: Vec<(f64, usize)> = marks.into_iter().zip(order).collect();
    slots.reverse();

    let mut times = Vec::new();
    let mut indices = vec![0usize; gaps.len()];
    let mut t = 0.0;
    loop {
        let inserted = match (times.last(), slots.last()) {
            (Some(&last), Some(&(mark, g))) if last >= mark => {
                slots.pop();
                Some(g)
            }
            _ => None,
        };
        let h = match inserted {
            Some(g) => gaps[g],
            None => exp.sample(rng),
        };
        if t + h >= horizon {
            if inserted.is_some() || !slots.is_empty() {
                return None;
            }
            return Some((times, indices, h));
        }
        t += h;
        if let Some(g) = inserted {
            indices[g] = times.len();
        }
        times.push(t);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Text,
    Visual,
    Vire,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Text, Stage::Visual, Stage::Vire];

    pub fn label(self) -> &'static str {
        match self {
            Stage::Text => "text",
            Stage::Visual => "visual",
            Stage::Vire => "vire",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TravelMode {
    Bike,
    Transit,
    Walk,
    Car,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum City {
    Toronto,
    Montreal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RespondentProfile {
    pub id: String,
    pub age: f64,
    pub female: bool,
    pub primary_mode: TravelMode,
    pub city: City,
    pub hmd_experience: bool,
}

impl RespondentProfile {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.age >= 18.0) {
            return Err(ExperimentError::InvalidProfile {
                id: self.id.clone(),
                reason: format!("age {} is below 18", self.age),
            });
        }
        Ok(())
    }
}

/// Respondents resembling the survey sample: young adults around 26,
/// mixed modes, two cities.
pub fn synthetic_respondents(n: usize, seed: u64) -> Vec<RespondentProfile> {
    let mut rng = stream(seed, &[TAG_RESPONDENTS]);
    let age = rand_distr::Normal::new(26.0, 5.0).expect("valid normal");
    let modes = [TravelMode::Bike, TravelMode::Transit, TravelMode::Walk, TravelMode::Car];
    (0..n)
        .map(|i| RespondentProfile {
            id: format!("r{:03}", i + 1),
            age: (age.sample(&mut rng) as f64).clamp(18.0, 70.0).round(),
            female: rng.gen_bool(0.45),
            primary_mode: *modes.choose(&mut rng).expect("non-empty"),
            city: if rng.gen_bool(0.5) { City::Toronto } else { City::Montreal },
            hmd_experience: rng.gen_bool(0.3),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    Current,
    Av,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialResult {
    Crossed,
    Accident,
    Timeout,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial_index: usize,
    pub scenario: Scenario,
    pub result: TrialResult,
    /// Time from crossing start to completion (s).
    pub crossing_time: Option<f64>,
    /// Time from trial start to crossing start, or to the end of the trial.
    pub wait_time: f64,
    pub accepted_gap: Option<f64>,
    /// Largest deceleration the respondent's presence in a conflict zone
    /// demanded of an approaching vehicle (m/s²).
    pub min_required_decel_imposed: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub id: String,
    pub respondent: RespondentProfile,
    pub stage: Stage,
    /// Arrival schedules, run once per scenario for interactive stages.
    pub trials: Vec<TrialSpec>,
    /// Only the immersive stage runs the schedules; text and visual stages
    /// carry them as metadata.
    pub simulated: bool,
    pub outcomes: Vec<TrialOutcome>,
    pub preference: Option<Preference>,
}

impl Session {
    pub fn new(respondent: RespondentProfile, stage: Stage, trials: Vec<TrialSpec>) -> Result<Self, ExperimentError> {
        respondent.validate()?;
        if trials.len() != TRIALS_PER_SESSION {
            return Err(ExperimentError::TrialCount { expected: TRIALS_PER_SESSION, got: trials.len() });
        }
        Ok(Session {
            id: format!("{}-{}", respondent.id, stage.label()),
            respondent,
            stage,
            trials,
            simulated: stage == Stage::Vire,
            outcomes: Vec::new(),
            preference: None,
        })
    }

    /// Scenario-major run order of a simulated session.
    pub fn run_order(&self) -> Vec<(Scenario, usize)> {
        if !self.simulated {
            return Vec::new();
        }
        Scenario::ALL.iter().flat_map(|&s| (0..self.trials.len()).map(move |i| (s, i))).collect()
    }

    pub fn is_complete(&self) -> bool {
        self.outcomes.len() == self.run_order().len()
    }
}

/// Builds a respondent's session. Schedules come from the protocol seed in
/// `params`, so every respondent receives the same ordered trials.
pub fn build_session(profile: RespondentProfile, stage: Stage, params: &TrialParams) -> Result<Session, ExperimentError> {
    let trials = protocol_trials(params)?;
    Session::new(profile, stage, trials)
}

/// The protocol's ordered trial schedules.
pub fn protocol_trials(params: &TrialParams) -> Result<Vec<TrialSpec>, ExperimentError> {
    (0..TRIALS_PER_SESSION).map(|i| generate_trial(params, i)).collect()
}

pub fn record_preference(session: &mut Session, choice: Preference) -> Result<(), ExperimentError> {
    if session.preference.is_some() {
        return Err(ExperimentError::PreferenceAlreadyRecorded);
    }
    if !session.is_complete() {
        return Err(ExperimentError::StageIncomplete(session.id.clone()));
    }
    session.preference = Some(choice);
    Ok(())
}

/// What the respondent's controller is told each tick.
pub struct ControlContext<'a> {
    pub world: &'a World,
    pub respondent: AgentId,
    pub crossing: &'a CrossingGeometry,
    pub scenario: Scenario,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ControlInput {
    pub velocity: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_heading: Option<f64>,
}

impl ControlInput {
    pub fn velocity(velocity: Vec2) -> Self {
        ControlInput { velocity, view_heading: None }
    }
}

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ControllerError(pub String);

/// Supplies the respondent's desired velocity.
pub trait PedestrianController {
    fn control(&mut self, ctx: &ControlContext<'_>) -> Result<ControlInput, ControllerError>;
}

/// Replays inputs keyed by the engine tick they apply to. Each input holds
/// until the next one.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ScriptedController {
    inputs: BTreeMap<u64, ControlInput>,
}

impl ScriptedController {
    pub fn new(inputs: impl IntoIterator<Item = (u64, ControlInput)>) -> Self {
        ScriptedController { inputs: inputs.into_iter().collect() }
    }

    /// Never moves.
    pub fn idle() -> Self {
        Self::default()
    }
}

impl PedestrianController for ScriptedController {
    fn control(&mut self, ctx: &ControlContext<'_>) -> Result<ControlInput, ControllerError> {
        Ok(self.inputs.range(..=ctx.world.tick()).next_back().map(|(_, v)| *v).unwrap_or_default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub sim: SimParams,
    pub trial: TrialParams,
    pub session_id: String,
    pub respondent_id: String,
    /// Marks logs driven by a live human rather than a controller script.
    pub interactive: bool,
    /// Background agents are sampled every this many ticks.
    pub background_decimation: u64,
    pub crosswalk: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            sim: SimParams::default(),
            trial: TrialParams::default(),
            session_id: "session".into(),
            respondent_id: "respondent".into(),
            interactive: false,
            background_decimation: 9,
            crosswalk: 0,
        }
    }
}

/// Steps one trial tick by tick, tracking its outcome and log.
pub struct TrialRunner {
    world: World,
    spec: TrialSpec,
    respondent: AgentId,
    crossing: CrossingGeometry,
    log: TrajectoryLog,
    decimation: u64,
    horizon_ticks: u64,
    /// Conflict-zone entry per link used by tagged vehicles.
    zone_entry: Vec<Option<f64>>,
    /// Vehicles of the first stream whose front has reached the zone.
    passed: usize,
    started: Option<(f64, Option<f64>)>,
    completed: Option<f64>,
    max_required: f64,
    outcome: Option<TrialOutcome>,
}

impl TrialRunner {
    pub fn new(spec: &TrialSpec, scene: Arc<Scene>, cfg: &RunConfig) -> Result<Self, ExperimentError> {
        cfg.trial.validate()?;
        let sim = SimParams { signalized: spec.scenario.signalized(), ..cfg.sim.clone() };
        let scen = Scenario::ALL.iter().position(|&s| s == spec.scenario).unwrap_or(0) as u64;
        let world_seed = stream(spec.seed, &[TAG_WORLD, spec.trial_index as u64, scen]).gen();
        let mut world = World::new(scene, sim, world_seed)?;
        let crossing = world
            .layout()
            .crossings
            .get(cfg.crosswalk)
            .cloned()
            .ok_or_else(|| SceneError::UnknownCrosswalk(format!("#{}", cfg.crosswalk)))?;
        let radius = world.params().bodies.pedestrian_radius;
        let start = world
            .scene()
            .spawns
            .iter()
            .find(|s| s.kind == SpawnKind::Pedestrian)
            .and_then(|s| s.position)
            .unwrap_or(crossing.entry - crossing.axis * radius);
        let respondent = world.add_pedestrian(start, Steering::Velocity(Vec2::zero()));

        let vehicle_spawns: Vec<_> = world.scene().spawns.iter().filter(|s| s.kind == SpawnKind::Vehicle).cloned().collect();
        let kinds = spec.vehicle_kinds(&cfg.trial.vehicle_mix);
        let v0 = cfg.trial.speed_limit;
        let mut zone_entry = vec![None; world.scene().links.len()];
        let mut pending = Vec::new();
        for (k, arrivals) in spec.arrival_times.iter().enumerate() {
            let spawn = vehicle_spawns.get(k).ok_or_else(|| {
                SceneError::Invalid(format!("approach {k} has no vehicle spawn point in the scene"))
            })?;
            let link_id = spawn.link.as_deref().unwrap_or_default();
            let link = world.scene().link_index(link_id).ok_or_else(|| SceneError::UnknownLink(link_id.into()))?;
            let layout = world.layout();
            let s_in = layout.conflicts_by_link[link]
                .first()
                .map(|&c| layout.lane_conflicts[c].s_in)
                .ok_or_else(|| SceneError::Invalid(format!("spawn '{}' does not lead to a crosswalk", spawn.id)))?;
            let spawn_s = spawn.offset.unwrap_or(0.0);
            if spawn_s >= s_in {
                return Err(SceneError::Invalid(format!("spawn '{}' lies past the crosswalk", spawn.id)).into());
            }
            zone_entry[link] = Some(s_in);
            let travel = (s_in - spawn_s) / v0;
            for (i, &a) in arrivals.iter().enumerate() {
                pending.push(PendingVehicle {
                    kind: kinds[k][i],
                    link,
                    release: a - travel,
                    spawn_s,
                    speed: v0,
                    tag: VehicleTag { approach: k as u32, index: i as u32 },
                    hold_headway: k == 0 && spec.gap_insertion_indices.contains(&i),
                });
            }
        }
        world.schedule_vehicles(pending);

        let header = LogHeader {
            session: cfg.session_id.clone(),
            trial_index: spec.trial_index,
            scenario: spec.scenario,
            seed: spec.seed,
            dt: world.dt(),
            horizon: spec.horizon,
            interactive: cfg.interactive,
            respondent_id: cfg.respondent_id.clone(),
            respondent_agent: respondent,
            respondent_start: start,
            bodies: world.params().bodies,
        };
        let horizon_ticks = (spec.horizon * world.params().rate_hz).round() as u64;
        Ok(TrialRunner {
            world,
            spec: spec.clone(),
            respondent,
            crossing,
            log: TrajectoryLog::new(header),
            decimation: cfg.background_decimation.max(1),
            horizon_ticks,
            zone_entry,
            passed: 0,
            started: None,
            completed: None,
            max_required: 0.0,
            outcome: None,
        })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn spec(&self) -> &TrialSpec {
        &self.spec
    }

    pub fn respondent(&self) -> AgentId {
        self.respondent
    }

    pub fn crossing(&self) -> &CrossingGeometry {
        &self.crossing
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    pub fn context(&self) -> ControlContext<'_> {
        ControlContext {
            world: &self.world,
            respondent: self.respondent,
            crossing: &self.crossing,
            scenario: self.spec.scenario,
        }
    }

    pub fn outcome(&self) -> Option<&TrialOutcome> {
        self.outcome.as_ref()
    }

    pub fn is_finished(&self) -> bool {
        self.outcome.is_some()
    }

    /// Applies `input` for the coming tick, advances the world, and returns
    /// the tick's events.
    pub fn step(&mut self, input: ControlInput) -> Result<Vec<SimEvent>, ExperimentError> {
        if self.outcome.is_some() {
            return Ok(Vec::new());
        }
        if !input.velocity.is_finite() || input.view_heading.map_or(false, |h| !h.is_finite()) {
            return Err(ExperimentError::Aborted("non-finite controller input".into()));
        }
        let cap = self.world.params().pedestrian.max_speed;
        self.world.set_steering(self.respondent, Steering::Velocity(input.velocity.clamp_norm(cap)));
        let mut events = self.world.step();

        for a in self.world.agents() {
            if let Some(v) = &a.vehicle {
                if let (Some(tag), Some(s_in)) = (v.tag, self.zone_entry[v.link]) {
                    if tag.approach == 0 && v.s >= s_in {
                        self.passed = self.passed.max(tag.index as usize + 1);
                    }
                }
            }
        }
        let me = self.world.agent(self.respondent).map(|a| a.position);
        if let Some(p) = me {
            let layout = self.world.layout();
            for c in layout.lane_conflicts.iter().filter(|c| c.zone.contains(p)) {
                for a in self.world.agents() {
                    if let Some(v) = a.vehicle.as_ref().filter(|v| v.link == c.link && v.s < c.s_in) {
                        let r = required_decel(v.speed, c.s_in - v.s);
                        if r.is_finite() {
                            self.max_required = self.max_required.max(r);
                        }
                    }
                }
            }
        }

        let t = self.world.t();
        let mut accident = false;
        for e in &mut events {
            if !e.subjects.contains(&self.respondent) {
                continue;
            }
            match e.kind {
                SimEventKind::CrossingStarted if self.started.is_none() => {
                    let gap = if self.passed == 0 { None } else { self.spec.headway_before(self.passed) };
                    e.accepted_gap = gap;
                    self.started = Some((t, gap));
                }
                SimEventKind::CrossingCompleted if self.started.is_some() && self.completed.is_none() => {
                    self.completed = Some(t);
                }
                SimEventKind::Accident => accident = true,
                _ => {}
            }
        }

        let mut tracked = vec![self.respondent];
        if self.world.tick() % self.decimation == 0 {
            tracked.extend(self.world.agents().iter().filter(|a| a.id != self.respondent).map(|a| a.id));
            tracked.sort_unstable();
        }
        let view = input.view_heading.map(|h| (self.respondent, h));
        self.log
            .record_tick(&self.world, &tracked, &events, view)
            .map_err(|e| ExperimentError::Aborted(e.to_string()))?;

        let result = if accident {
            Some(TrialResult::Accident)
        } else if self.completed.is_some() {
            Some(TrialResult::Crossed)
        } else if self.world.tick() >= self.horizon_ticks {
            Some(TrialResult::Timeout)
        } else {
            None
        };
        if let Some(result) = result {
            let outcome = TrialOutcome {
                trial_index: self.spec.trial_index,
                scenario: self.spec.scenario,
                result,
                crossing_time: match (self.started, self.completed) {
                    (Some((s, _)), Some(c)) => Some(c - s),
                    _ => None,
                },
                wait_time: self.started.map_or(t, |(s, _)| s),
                accepted_gap: self.started.and_then(|(_, g)| g),
                min_required_decel_imposed: self.max_required,
            };
            self.log.record_outcome(outcome.clone());
            self.outcome = Some(outcome);
        }
        Ok(events)
    }

    /// Ends the trial, returning its outcome and log. Fails if the trial
    /// has not reached an outcome.
    pub fn finish(self) -> Result<(TrialOutcome, TrajectoryLog), ExperimentError> {
        match self.outcome {
            Some(o) => Ok((o, self.log)),
            None => Err(ExperimentError::Aborted(format!("trial {} ended before an outcome", self.spec.trial_index))),
        }
    }
}

/// Runs a trial to completion under `controller`.
pub fn run_trial(
    spec: &TrialSpec,
    scene: Arc<Scene>,
    controller: &mut dyn PedestrianController,
    cfg: &RunConfig,
) -> Result<(TrialOutcome, TrajectoryLog), ExperimentError> {
    let mut runner = TrialRunner::new(spec, scene, cfg)?;
    while !runner.is_finished() {
        let input = controller
            .control(&runner.context())
            .map_err(|e| ExperimentError::Aborted(format!("controller failed at t = {}: {e}", runner.world().t())))?;
        runner.step(input)?;
    }
    runner.finish()
}

/// How synthetic respondents answer the preference question.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PreferenceRule {
    /// Exact share of respondents preferring AVs per stage, assigned by a
    /// seeded shuffle.
    Shares { text: f64, visual: f64, vire: f64 },
    /// Bernoulli draws from a binary logit on the respondent covariates.
    Logit { beta: Vec<f64>, scales: BTreeMap<Stage, f64> },
}

impl Default for PreferenceRule {
    fn default() -> Self {
        PreferenceRule::Shares { text: 0.5, visual: 0.35, vire: 0.7 }
    }
}

/// Assigns preferences to sessions that lack one.
pub fn assign_preferences(sessions: &mut [Session], rule: &PreferenceRule, seed: u64) -> Result<(), ExperimentError> {
    match rule {
        PreferenceRule::Shares { text, visual, vire } => {
            for stage in Stage::ALL {
                let share = match stage {
                    Stage::Text => *text,
                    Stage::Visual => *visual,
                    Stage::Vire => *vire,
                };
                let mut idx: Vec<usize> = (0..sessions.len()).filter(|&i| sessions[i].stage == stage).collect();
                let n_av = (share * idx.len() as f64).round() as usize;
                idx.shuffle(&mut stream(seed, &[stage as u64 + 100]));
                for (k, &i) in idx.iter().enumerate() {
                    let p = if k < n_av { Preference::Av } else { Preference::Current };
                    record_preference(&mut sessions[i], p)?;
                }
            }
        }
        PreferenceRule::Logit { beta, scales } => {
            let rows = crate::choice::covariate_rows(sessions);
            for (i, x) in rows.into_iter().enumerate() {
                let mu = scales.get(&sessions[i].stage).copied().unwrap_or(1.0);
                let v: f64 = x.iter().zip(beta).map(|(a, b)| a * b).sum();
                let p = 1.0 / (1.0 + (-mu * v).exp());
                let mut rng = stream(seed, &[200, i as u64]);
                let pref = if rng.gen_bool(p.clamp(0.0, 1.0)) { Preference::Av } else { Preference::Current };
                record_preference(&mut sessions[i], pref)?;
            }
        }
    }
    Ok(())
}
