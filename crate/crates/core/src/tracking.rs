//! Trajectory and event logs, their line-delimited JSON form, and per-trial
//! summary metrics.

use std::collections::BTreeSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiment::{Scenario, TrialOutcome};
use crate::microsim::{AgentId, AgentKind, BodyDims, SimEvent, SimEventKind, World};
use crate::{OrientedRect, Vec2};

#[derive(Debug, Error)]
pub enum TrackingError {
    #[error("tick at t = {t} precedes the last recorded t = {last}")]
    OutOfOrder { t: f64, last: f64 },
    #[error("log has no samples for the respondent")]
    NoRespondentSamples,
    #[error("line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
    #[error("log does not start with a header line")]
    MissingHeader,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub session: String,
    pub trial_index: usize,
    pub scenario: Scenario,
    pub seed: u64,
    pub dt: f64,
    pub horizon: f64,
    pub interactive: bool,
    pub respondent_id: String,
    pub respondent_agent: AgentId,
    pub respondent_start: Vec2,
    pub bodies: BodyDims,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub id: AgentId,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
    pub heading: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view_heading: Option<f64>,
}

impl Sample {
    pub fn position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Announces an agent the first time it is sampled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub t: f64,
    pub id: AgentId,
    pub kind: AgentKind,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Agent(AgentRecord),
    Sample(Sample),
    Event(SimEvent),
    Outcome(TrialOutcome),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum HeaderLine {
    Header(LogHeader),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryLog {
    pub header: LogHeader,
    pub entries: Vec<LogEntry>,
    last_t: f64,
    known: Vec<AgentId>,
}

impl TrajectoryLog {
    pub fn new(header: LogHeader) -> Self {
        TrajectoryLog { header, entries: Vec::new(), last_t: f64::NEG_INFINITY, known: Vec::new() }
    }

    /// Appends one sample per tracked agent present in `world`, then the
    /// tick's events.
    pub fn record_tick(
        &mut self,
        world: &World,
        tracked: &[AgentId],
        events: &[SimEvent],
        view_heading: Option<(AgentId, f64)>,
    ) -> Result<(), TrackingError> {
        let t = world.t();
        if t < self.last_t {
            return Err(TrackingError::OutOfOrder { t, last: self.last_t });
        }
        self.last_t = t;
        for &id in tracked {
            let Some(a) = world.agent(id) else { continue };
            if let Err(pos) = self.known.binary_search(&id) {
                self.known.insert(pos, id);
                self.entries.push(LogEntry::Agent(AgentRecord { t, id, kind: a.kind }));
            }
            self.entries.push(LogEntry::Sample(Sample {
                t,
                id,
                x: a.position.x,
                y: a.position.y,
                vx: a.velocity.x,
                vy: a.velocity.y,
                heading: a.heading,
                view_heading: view_heading.filter(|(v, _)| *v == id).map(|(_, h)| h),
            }));
        }
        self.entries.extend(events.iter().cloned().map(LogEntry::Event));
        Ok(())
    }

    pub fn record_event(&mut self, event: SimEvent) {
        self.last_t = self.last_t.max(event.t);
        self.entries.push(LogEntry::Event(event));
    }

    pub fn record_outcome(&mut self, outcome: TrialOutcome) {
        self.entries.push(LogEntry::Outcome(outcome));
    }

    pub fn samples(&self) -> impl Iterator<Item = &Sample> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Sample(s) => Some(s),
            _ => None,
        })
    }

    pub fn events(&self) -> impl Iterator<Item = &SimEvent> {
        self.entries.iter().filter_map(|e| match e {
            LogEntry::Event(s) => Some(s),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Option<&TrialOutcome> {
        self.entries.iter().rev().find_map(|e| match e {
            LogEntry::Outcome(o) => Some(o),
            _ => None,
        })
    }

    pub fn kind_of(&self, id: AgentId) -> Option<AgentKind> {
        self.entries.iter().find_map(|e| match e {
            LogEntry::Agent(a) if a.id == id => Some(a.kind),
            _ => None,
        })
    }

    /// Writes the header line followed by one line per entry.
    pub fn export<W: Write>(&self, mut out: W) -> Result<(), TrackingError> {
        serde_json::to_writer(&mut out, &HeaderLine::Header(self.header.clone()))
            .map_err(|e| TrackingError::Io(e.into()))?;
        out.write_all(b"\n")?;
        for e in &self.entries {
            serde_json::to_writer(&mut out, e).map_err(|e| TrackingError::Io(e.into()))?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.export(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    pub fn import<R: BufRead>(input: R) -> Result<Self, TrackingError> {
        let mut log: Option<TrajectoryLog> = None;
        for (n, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parse_err = |source| TrackingError::Parse { line: n + 1, source };
            match log.as_mut() {
                None => {
                    let HeaderLine::Header(h) = serde_json::from_str(&line).map_err(|_| TrackingError::MissingHeader)?;
                    log = Some(TrajectoryLog::new(h));
                }
                Some(l) => {
                    let e: LogEntry = serde_json::from_str(&line).map_err(parse_err)?;
                    match &e {
                        LogEntry::Agent(a) => {
                            if let Err(pos) = l.known.binary_search(&a.id) {
                                l.known.insert(pos, a.id);
                            }
                            l.last_t = l.last_t.max(a.t);
                        }
                        LogEntry::Sample(s) => l.last_t = l.last_t.max(s.t),
                        LogEntry::Event(ev) => l.last_t = l.last_t.max(ev.t),
                        LogEntry::Outcome(_) => {}
                    }
                    l.entries.push(e);
                }
            }
        }
        log.ok_or(TrackingError::MissingHeader)
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TrackingError> {
        Self::import(text.as_bytes())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialMetrics {
    pub wait_time: f64,
    pub crossing_duration: Option<f64>,
    /// Closest surface distance between the respondent and any sampled
    /// vehicle; `None` when no vehicle was sampled.
    pub min_distance_to_vehicle: Option<f64>,
    pub accepted_gap: Option<f64>,
    pub path_length: f64,
}

/// Summary metrics of a completed trial log.
pub fn summarize(log: &TrajectoryLog) -> Result<TrialMetrics, TrackingError> {
    let me = log.header.respondent_agent;
    let mine: Vec<&Sample> = log.samples().filter(|s| s.id == me).collect();
    let last = mine.last().ok_or(TrackingError::NoRespondentSamples)?;
    let mut path_length = 0.0;
    let mut prev = log.header.respondent_start;
    for s in &mine {
        path_length += s.position().dist(prev);
        prev = s.position();
    }
    let involves_me = |e: &&SimEvent| e.subjects.first() == Some(&me);
    let started = log.events().filter(involves_me).find(|e| e.kind == SimEventKind::CrossingStarted);
    let completed = log.events().filter(involves_me).find(|e| e.kind == SimEventKind::CrossingCompleted);
    let accident = log.events().filter(involves_me).any(|e| e.kind == SimEventKind::Accident);

    let b = &log.header.bodies;
    let mut min_distance: Option<f64> = None;
    let vehicles: BTreeSet<AgentId> = log
        .entries
        .iter()
        .filter_map(|e| match e {
            LogEntry::Agent(a) if a.kind.is_vehicle() => Some(a.id),
            _ => None,
        })
        .collect();
    let mut k = 0;
    for s in log.samples() {
        if !vehicles.contains(&s.id) {
            continue;
        }
        while k < mine.len() && mine[k].t < s.t {
            k += 1;
        }
        let Some(p) = mine.get(k).filter(|p| p.t == s.t) else { continue };
        let rect = OrientedRect::new(s.position(), b.vehicle_length, b.vehicle_width, s.heading);
        let d = (rect.closest_point(p.position()).dist(p.position()) - b.pedestrian_radius).max(0.0);
        min_distance = Some(min_distance.map_or(d, |m| m.min(d)));
    }
    if accident {
        min_distance = Some(0.0);
    }
    Ok(TrialMetrics {
        wait_time: started.map_or(last.t, |e| e.t),
        crossing_duration: match (started, completed) {
            (Some(a), Some(b)) => Some(b.t - a.t),
            _ => None,
        },
        min_distance_to_vehicle: min_distance,
        accepted_gap: started.and_then(|e| e.accepted_gap),
        path_length,
    })
}
