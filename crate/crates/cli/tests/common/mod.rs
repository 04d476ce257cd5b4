#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use futures::{SinkExt, StreamExt};
use spsim::server::{self, AppState, ServerConfig};
use spsim::wire::{Body, ClockMode, Hello, Input, WireMessage};
use spsim_core::experiment::{RespondentProfile, TrialParams};
use spsim_core::scene::laurier_rivard;
use spsim_core::{SimParams, Vec2};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

pub fn config(out: &Path, seed: u64) -> ServerConfig {
    ServerConfig {
        scene: Arc::new(laurier_rivard()),
        trial: TrialParams { seed, ..TrialParams::default() },
        sim: SimParams::default(),
        out: out.to_path_buf(),
    }
}

pub async fn start(cfg: ServerConfig) -> (SocketAddr, AppState) {
    let (addr, _handle, state) = server::spawn(cfg, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    (addr, state)
}

pub struct Client {
    ws: WebSocketStream<MaybeTlsStream<TcpStream>>,
    seq: u64,
    /// Last sequence number received from the server.
    pub last_in: u64,
    pub session: Option<String>,
}

impl Client {
    pub async fn connect(addr: SocketAddr) -> Client {
        let (ws, _) = connect_async(format!("ws://{addr}/ws")).await.unwrap();
        Client { ws, seq: 0, last_in: 0, session: None }
    }

    pub async fn send(&mut self, body: Body) {
        self.seq += 1;
        self.send_raw(&serde_json::to_string(&WireMessage { seq: self.seq, session: self.session.clone(), body }).unwrap())
            .await;
    }

    pub async fn send_raw(&mut self, text: &str) {
        self.ws.send(Message::Text(text.to_string())).await.unwrap();
    }

    pub async fn input(&mut self, velocity: Vec2, steps: u32) {
        self.send(Body::Input(Input { velocity, view_heading: None, steps: Some(steps) })).await;
    }

    /// Next message, or `None` once the server closed the connection.
    pub async fn recv(&mut self) -> Option<WireMessage> {
        loop {
            match self.ws.next().await? {
                Ok(Message::Text(t)) => {
                    let m: WireMessage = serde_json::from_str(&t).unwrap();
                    assert_eq!(m.seq, self.last_in + 1, "server sequence numbers must be gap-free");
                    self.last_in = m.seq;
                    return Some(m);
                }
                Ok(Message::Close(_)) | Err(_) => return None,
                Ok(_) => {}
            }
        }
    }

    /// Skips messages until one satisfies `pred`.
    pub async fn until(&mut self, pred: impl Fn(&Body) -> bool) -> WireMessage {
        loop {
            let m = self.recv().await.expect("connection closed early");
            if pred(&m.body) {
                return m;
            }
        }
    }

    /// Greets the server and returns the session configuration.
    pub async fn hello(&mut self, hello: Hello) -> spsim::wire::SessionConfig {
        self.send(Body::Hello(hello)).await;
        let m = self.until(|b| matches!(b, Body::SessionConfig(_) | Body::Bye(_))).await;
        match m.body {
            Body::SessionConfig(c) => {
                self.session = Some(c.session.clone());
                c
            }
            other => panic!("hello rejected: {other:?}"),
        }
    }

    pub async fn close(mut self) {
        self.ws.close(None).await.ok();
    }
}

pub fn lockstep(profile: RespondentProfile) -> Hello {
    Hello { respondent: Some(profile), mode: ClockMode::Lockstep, ..Hello::default() }
}

pub fn lockstep_resume(session: &str) -> Hello {
    Hello { resume: Some(session.to_string()), mode: ClockMode::Lockstep, ..Hello::default() }
}
