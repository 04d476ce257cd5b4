//! Text-frame messages exchanged with live session clients.
//!
//! Every frame is one JSON object: `seq`, `session`, `type` and a
//! type-specific `payload`. Units are m, m/s, s and rad.

use serde::{Deserialize, Serialize};
use spsim_core::experiment::{Preference, RespondentProfile, Scenario, TrialOutcome};
use spsim_core::microsim::AgentState;
use spsim_core::{AgentId, AgentKind, Scene, SignalPhase, SimEvent, Vec2};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    /// Starts at 1 and increases by one per message, per direction and
    /// connection. A resumed session starts a fresh sequence.
    pub seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub session: Option<String>,
    #[serde(flatten)]
    pub body: Body,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum Body {
    Hello(Hello),
    SessionConfig(SessionConfig),
    Snapshot(Snapshot),
    Input(Input),
    Event(WireEvent),
    Prompt(Prompt),
    Preference(PreferenceReply),
    Bye(Bye),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// The engine advances at 90 Hz of wall time on the latest input.
    #[default]
    Realtime,
    /// The engine advances only by the steps each input asks for.
    Lockstep,
}

/// Client greeting; the server answers with its own `hello`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Hello {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub respondent: Option<RespondentProfile>,
    /// Session to resume after a disconnect.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resume: Option<String>,
    #[serde(default)]
    pub mode: ClockMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub session: String,
    pub respondent: RespondentProfile,
    pub mode: ClockMode,
    pub dt: f64,
    pub snapshot_hz: f64,
    pub max_walk_speed: f64,
    /// Scenario and schedule index of every trial, in order.
    pub run_order: Vec<(Scenario, usize)>,
    /// Position in `run_order` the session starts or resumes at.
    pub next_trial: usize,
    pub scene: Scene,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub id: AgentId,
    pub kind: AgentKind,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
}

impl From<&AgentState> for AgentSnapshot {
    fn from(a: &AgentState) -> Self {
        AgentSnapshot {
            id: a.id,
            kind: a.kind,
            x: a.position.x,
            y: a.position.y,
            vx: a.velocity.x,
            vy: a.velocity.y,
            heading: a.heading,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub trial: usize,
    pub scenario: Scenario,
    pub tick: u64,
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub signal: Option<SignalPhase>,
    pub respondent: AgentId,
    pub agents: Vec<AgentSnapshot>,
}

/// Desired walking velocity, applied from the next engine tick on.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Input {
    pub velocity: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_heading: Option<f64>,
    /// Lockstep only: ticks to advance with this input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub steps: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum WireEvent {
    TrialStarted { trial: usize, scenario: Scenario, schedule: usize },
    Sim(SimEvent),
    TrialEnded(TrialOutcome),
    /// The session stopped at a trial boundary and can be resumed.
    Error { message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub question: String,
    pub options: Vec<Preference>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreferenceReply {
    pub choice: Preference,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bye {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default)]
    pub completed: bool,
}
