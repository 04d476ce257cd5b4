//! Live session service: one engine loop per connected respondent, bridged
//! to the client over websocket text frames.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{Context, Result};
use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::stream::{SplitSink, SplitStream};
use futures::{SinkExt, StreamExt};
use log::{info, warn};
use spsim_core::experiment::{
    build_session, record_preference, ControlInput, Preference, RunConfig, Session, Stage, TrialParams, TrialRunner,
};
use spsim_core::{Scene, SimParams};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tokio::time::MissedTickBehavior;

use crate::batch::write_log;
use crate::log_path;
use crate::wire::{
    AgentSnapshot, Body, Bye, ClockMode, Hello, Input, Prompt, SessionConfig, Snapshot, WireEvent, WireMessage,
};

/// Engine ticks per snapshot: 30 Hz from the 90 Hz engine.
pub const SNAPSHOT_EVERY: u64 = 3;

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub scene: Arc<Scene>,
    pub trial: TrialParams,
    pub sim: SimParams,
    /// Logs and sessions are written here with the batch layout.
    pub out: PathBuf,
}

struct Slot {
    session: Session,
    /// Position in the run order of the next trial to run.
    next: usize,
    connected: bool,
}

#[derive(Clone)]
pub struct AppState {
    cfg: Arc<ServerConfig>,
    sessions: Arc<Mutex<BTreeMap<String, Slot>>>,
}

impl AppState {
    pub fn new(cfg: ServerConfig) -> Self {
        AppState { cfg: Arc::new(cfg), sessions: Arc::new(Mutex::new(BTreeMap::new())) }
    }

    /// Ids of sessions currently held, with whether a client is connected.
    pub fn sessions(&self) -> Vec<(String, bool)> {
        self.sessions.lock().expect("registry lock").iter().map(|(k, s)| (k.clone(), s.connected)).collect()
    }
}

pub fn router(state: AppState) -> Router {
    Router::new().route("/ws", get(upgrade)).with_state(state)
}

/// Binds `addr` and serves in the background, returning the bound address.
pub async fn spawn(cfg: ServerConfig, addr: SocketAddr) -> Result<(SocketAddr, JoinHandle<()>, AppState)> {
    let listener = TcpListener::bind(addr).await.with_context(|| format!("binding {addr}"))?;
    let local = listener.local_addr()?;
    let state = AppState::new(cfg);
    let app = router(state.clone());
    let handle = tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, app).await {
            warn!("server stopped: {e}");
        }
    });
    Ok((local, handle, state))
}

async fn upgrade(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| async move {
        let (sink, stream) = socket.split();
        let mut conn = Conn { sink, stream, state, session: None, out_seq: 0, in_seq: 0, mode: ClockMode::default() };
        if let Err(e) = conn.run().await {
            warn!("connection ended with error: {e:#}");
        }
        conn.detach();
    })
}

enum Incoming {
    Message(WireMessage),
    Closed,
}

struct Conn {
    sink: SplitSink<WebSocket, Message>,
    stream: SplitStream<WebSocket>,
    state: AppState,
    session: Option<String>,
    out_seq: u64,
    in_seq: u64,
    mode: ClockMode,
}

impl Conn {
    async fn send(&mut self, body: Body) -> Result<()> {
        self.out_seq += 1;
        let msg = WireMessage { seq: self.out_seq, session: self.session.clone(), body };
        self.sink.send(Message::Text(serde_json::to_string(&msg)?)).await?;
        Ok(())
    }

    async fn send_error(&mut self, message: String) -> Result<()> {
        self.send(Body::Event(WireEvent::Error { message })).await
    }

    async fn bye(&mut self, reason: Option<String>, completed: bool) -> Result<()> {
        self.send(Body::Bye(Bye { reason, completed })).await?;
        self.sink.close().await.ok();
        Ok(())
    }

    /// Next well-formed message with a fresh sequence number. Malformed or
    /// stale frames are answered with an error event and skipped.
    async fn recv(&mut self) -> Result<Incoming> {
        loop {
            let Some(frame) = self.stream.next().await else { return Ok(Incoming::Closed) };
            let text = match frame {
                Ok(Message::Text(t)) => t,
                Ok(Message::Close(_)) | Err(_) => return Ok(Incoming::Closed),
                Ok(_) => continue,
            };
            let msg: WireMessage = match serde_json::from_str(&text) {
                Ok(m) => m,
                Err(e) => {
                    self.send_error(format!("malformed message: {e}")).await?;
                    continue;
                }
            };
            if msg.seq <= self.in_seq {
                self.send_error(format!("sequence number {} does not follow {}", msg.seq, self.in_seq)).await?;
                continue;
            }
            self.in_seq = msg.seq;
            return Ok(Incoming::Message(msg));
        }
    }

    /// Marks the session resumable.
    fn detach(&mut self) {
        if let Some(id) = &self.session {
            let mut reg = self.state.sessions.lock().expect("registry lock");
            if let Some(slot) = reg.get_mut(id) {
                slot.connected = false;
            }
        }
    }

    /// Registers or resumes the session named by the greeting.
    fn attach(&mut self, hello: &Hello) -> Result<(), String> {
        let cfg = &self.state.cfg;
        let mut reg = self.state.sessions.lock().expect("registry lock");
        let id = match (&hello.resume, &hello.respondent) {
            (Some(id), _) => id.clone(),
            (None, Some(profile)) => {
                let session = build_session(profile.clone(), Stage::Vire, &cfg.trial).map_err(|e| e.to_string())?;
                let id = session.id.clone();
                reg.entry(id.clone()).or_insert(Slot { session, next: 0, connected: false });
                id
            }
            (None, None) => return Err("hello needs a respondent profile or a session to resume".into()),
        };
        let slot = reg.get_mut(&id).ok_or_else(|| format!("unknown session '{id}'"))?;
        if slot.connected {
            return Err(format!("session '{id}' is already connected"));
        }
        slot.connected = true;
        self.session = Some(id);
        Ok(())
    }

    fn with_slot<R>(&self, f: impl FnOnce(&mut Slot) -> R) -> R {
        let id = self.session.as_ref().expect("attached");
        let mut reg = self.state.sessions.lock().expect("registry lock");
        f(reg.get_mut(id).expect("attached session is registered"))
    }

    async fn run(&mut self) -> Result<()> {
        let hello = match self.recv().await? {
            Incoming::Message(WireMessage { body: Body::Hello(h), .. }) => h,
            Incoming::Message(_) => return self.bye(Some("expected hello".into()), false).await,
            Incoming::Closed => return Ok(()),
        };
        if let Err(reason) = self.attach(&hello) {
            return self.bye(Some(reason), false).await;
        }
        self.mode = hello.mode;
        let cfg = self.state.cfg.clone();
        let (session, next) = self.with_slot(|s| (s.session.clone(), s.next));
        info!("session {} attached at trial {next}", session.id);
        self.send(Body::Hello(Hello { server: Some(format!("spsim {}", env!("CARGO_PKG_VERSION"))), ..Hello::default() }))
            .await?;
        let rate = cfg.sim.rate_hz;
        self.send(Body::SessionConfig(SessionConfig {
            session: session.id.clone(),
            respondent: session.respondent.clone(),
            mode: self.mode,
            dt: 1.0 / rate,
            snapshot_hz: rate / SNAPSHOT_EVERY as f64,
            max_walk_speed: cfg.sim.pedestrian.max_speed,
            run_order: session.run_order(),
            next_trial: next,
            scene: (*cfg.scene).clone(),
        }))
        .await?;

        let order = session.run_order();
        loop {
            let next = self.with_slot(|s| s.next);
            if next >= order.len() {
                break;
            }
            let (scenario, i) = order[next];
            if !self.run_trial(&session, next, scenario, i).await? {
                info!("session {} detached during trial {next}", session.id);
                return Ok(());
            }
        }
        self.finish_session().await
    }

    /// Runs one trial. Returns `false` when the client went away, leaving
    /// the trial to be rerun on resume.
    async fn run_trial(
        &mut self,
        session: &Session,
        position: usize,
        scenario: spsim_core::experiment::Scenario,
        schedule: usize,
    ) -> Result<bool> {
        let cfg = self.state.cfg.clone();
        let spec = session.trials[schedule].clone().with_scenario(scenario);
        let run = RunConfig {
            sim: cfg.sim.clone(),
            trial: cfg.trial.clone(),
            session_id: session.id.clone(),
            respondent_id: session.respondent.id.clone(),
            interactive: true,
            ..RunConfig::default()
        };
        let mut runner = TrialRunner::new(&spec, cfg.scene.clone(), &run)?;
        self.send(Body::Event(WireEvent::TrialStarted { trial: position, scenario, schedule })).await?;
        self.snapshot(&runner, position).await?;

        let mut input = ControlInput::default();
        let mut ticker = tokio::time::interval(Duration::from_secs_f64(runner.world().dt()));
        ticker.set_missed_tick_behavior(MissedTickBehavior::Burst);
        while !runner.is_finished() {
            let steps = match self.mode {
                ClockMode::Lockstep => match self.recv().await? {
                    Incoming::Message(WireMessage { body: Body::Input(i), .. }) => {
                        input = control_input(&i);
                        i.steps.unwrap_or(1)
                    }
                    Incoming::Message(WireMessage { body: Body::Bye(_), .. }) | Incoming::Closed => return Ok(false),
                    Incoming::Message(_) => 0,
                },
                ClockMode::Realtime => {
                    tokio::select! {
                        _ = ticker.tick() => 1,
                        msg = self.recv() => match msg? {
                            Incoming::Message(WireMessage { body: Body::Input(i), .. }) => {
                                input = control_input(&i);
                                0
                            }
                            Incoming::Message(WireMessage { body: Body::Bye(_), .. }) | Incoming::Closed => return Ok(false),
                            Incoming::Message(_) => 0,
                        },
                    }
                }
            };
            for _ in 0..steps {
                let events = runner.step(input)?;
                for e in events {
                    self.send(Body::Event(WireEvent::Sim(e))).await?;
                }
                if runner.world().tick() % SNAPSHOT_EVERY == 0 {
                    self.snapshot(&runner, position).await?;
                }
                if runner.is_finished() {
                    break;
                }
            }
        }
        let (outcome, log) = runner.finish()?;
        write_log(&log_path(&cfg.out, &session.id, schedule, scenario), &log)?;
        self.with_slot(|s| {
            s.session.outcomes.push(outcome.clone());
            s.next = position + 1;
        });
        self.send(Body::Event(WireEvent::TrialEnded(outcome))).await?;
        Ok(true)
    }

    async fn snapshot(&mut self, runner: &TrialRunner, position: usize) -> Result<()> {
        let w = runner.world();
        let snap = Snapshot {
            trial: position,
            scenario: runner.spec().scenario,
            tick: w.tick(),
            t: w.t(),
            signal: w.signal_phase(),
            respondent: runner.respondent(),
            agents: w.agents().iter().map(AgentSnapshot::from).collect(),
        };
        self.send(Body::Snapshot(snap)).await
    }

    async fn finish_session(&mut self) -> Result<()> {
        let done = self.with_slot(|s| s.session.preference.is_some());
        if !done {
            self.send(Body::Prompt(Prompt {
                question: "Which crossing would you rather use: today's signalized crossing or the unsignalized \
                           crossing with autonomous vehicles?"
                    .into(),
                options: vec![Preference::Current, Preference::Av],
            }))
            .await?;
            loop {
                match self.recv().await? {
                    Incoming::Message(WireMessage { body: Body::Preference(p), .. }) => {
                        let recorded = self.with_slot(|s| record_preference(&mut s.session, p.choice));
                        match recorded {
                            Ok(()) => break,
                            Err(e) => self.send_error(e.to_string()).await?,
                        }
                    }
                    Incoming::Message(WireMessage { body: Body::Bye(_), .. }) | Incoming::Closed => return Ok(()),
                    Incoming::Message(_) => {}
                }
            }
        }
        let session = self.with_slot(|s| s.session.clone());
        let path = self.state.cfg.out.join("sessions").join(format!("{}.json", session.id));
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, serde_json::to_string_pretty(&session)? + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        self.bye(None, true).await
    }
}

fn control_input(i: &Input) -> ControlInput {
    ControlInput { velocity: i.velocity, view_heading: i.view_heading }
}
