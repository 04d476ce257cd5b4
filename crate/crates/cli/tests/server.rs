mod common;

use std::fs;
use std::path::Path;
use std::sync::Arc;

use common::{config, lockstep, lockstep_resume, start, Client};
use spsim::log_path;
use spsim::server::SNAPSHOT_EVERY;
use spsim::wire::{Body, ClockMode, Hello, PreferenceReply, WireEvent};
use spsim_core::experiment::{
    build_session, run_trial, synthetic_respondents, ControlInput, Preference, RespondentProfile, RunConfig,
    ScriptedController, Session, Stage, TrialParams, TrialResult,
};
use spsim_core::scene::laurier_rivard;
use spsim_core::Vec2;

const FOREVER: u32 = 1_000_000;

fn profile(i: usize) -> RespondentProfile {
    synthetic_respondents(i + 1, 11).pop().unwrap()
}

/// Log bytes of a trial replayed offline with the same inputs a lockstep
/// client sent: `script` maps ticks to velocities.
fn replay(p: &RespondentProfile, seed: u64, position: usize, script: &[(u64, Vec2)]) -> Vec<u8> {
    let params = TrialParams { seed, ..TrialParams::default() };
    let session = build_session(p.clone(), Stage::Vire, &params).unwrap();
    let (scenario, i) = session.run_order()[position];
    let spec = session.trials[i].clone().with_scenario(scenario);
    let cfg = RunConfig {
        trial: params,
        session_id: session.id.clone(),
        respondent_id: p.id.clone(),
        interactive: true,
        ..RunConfig::default()
    };
    let mut ctl = ScriptedController::new(script.iter().map(|&(k, v)| (k, ControlInput::velocity(v))));
    let (_, log) = run_trial(&spec, Arc::new(laurier_rivard()), &mut ctl, &cfg).unwrap();
    let mut out = Vec::new();
    log.export(&mut out).unwrap();
    out
}

fn served_log(out: &Path, session: &Session, position: usize) -> Vec<u8> {
    let (scenario, i) = session.run_order()[position];
    fs::read(log_path(out, &session.id, i, scenario)).unwrap()
}

/// Drives one trial with `script` and returns its outcome.
async fn drive(c: &mut Client, script: &[(u64, Vec2)]) -> spsim_core::experiment::TrialOutcome {
    c.until(|b| matches!(b, Body::Event(WireEvent::TrialStarted { .. }))).await;
    for (n, &(k, v)) in script.iter().enumerate() {
        let steps = script.get(n + 1).map_or(FOREVER, |&(next, _)| (next - k) as u32);
        c.input(v, steps).await;
    }
    match c.until(|b| matches!(b, Body::Event(WireEvent::TrialEnded(_)))).await.body {
        Body::Event(WireEvent::TrialEnded(o)) => o,
        _ => unreachable!(),
    }
}

fn walk_script() -> Vec<(u64, Vec2)> {
    vec![(0, Vec2::new(0.0, 0.0)), (450, Vec2::new(0.0, 1.4))]
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn idle_client_times_out_every_trial_and_records_preference() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, state) = start(config(dir.path(), 4)).await;
    let p = profile(0);
    let mut c = Client::connect(addr).await;
    let cfg = c.hello(lockstep(p.clone())).await;
    assert_eq!(cfg.run_order.len(), 20);
    assert_eq!(cfg.next_trial, 0);
    assert!((cfg.snapshot_hz - 30.0).abs() < 1e-9);

    for position in 0..20 {
        let o = drive(&mut c, &[(0, Vec2::new(0.0, 0.0))]).await;
        assert_eq!(o.result, TrialResult::Timeout, "trial {position}");
        assert_eq!(o.scenario, cfg.run_order[position].0);
    }
    c.until(|b| matches!(b, Body::Prompt(_))).await;
    c.send(Body::Preference(PreferenceReply { choice: Preference::Av })).await;
    match c.until(|b| matches!(b, Body::Bye(_))).await.body {
        Body::Bye(b) => assert!(b.completed),
        _ => unreachable!(),
    }

    let saved: Session =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sessions").join(format!("{}.json", cfg.session))).unwrap())
            .unwrap();
    assert_eq!(saved.preference, Some(Preference::Av));
    assert_eq!(saved.outcomes.len(), 20);
    for position in 0..20 {
        assert!(!served_log(dir.path(), &saved, position).is_empty());
    }
    assert_eq!(state.sessions(), vec![(cfg.session.clone(), false)]);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn served_logs_match_offline_replay() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(config(dir.path(), 5)).await;
    let p = profile(1);
    let mut c = Client::connect(addr).await;
    c.hello(lockstep(p.clone())).await;
    let script = walk_script();
    drive(&mut c, &script).await;
    drive(&mut c, &script).await;
    c.close().await;

    let session = build_session(p.clone(), Stage::Vire, &TrialParams { seed: 5, ..TrialParams::default() }).unwrap();
    for position in 0..2 {
        assert!(served_log(dir.path(), &session, position) == replay(&p, 5, position, &script), "trial {position}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_sessions_do_not_interfere() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(config(dir.path(), 6)).await;
    let (pa, pb) = (profile(2), profile(3));
    let sa = walk_script();
    let sb = vec![(0, Vec2::new(0.0, 0.0)), (200, Vec2::new(0.5, 1.2)), (700, Vec2::new(0.0, 0.0))];

    let run = |p: RespondentProfile, script: Vec<(u64, Vec2)>| async move {
        let mut c = Client::connect(addr).await;
        c.hello(lockstep(p)).await;
        drive(&mut c, &script).await;
        c.close().await;
    };
    tokio::join!(run(pa.clone(), sa.clone()), run(pb.clone(), sb.clone()));

    let params = TrialParams { seed: 6, ..TrialParams::default() };
    for (p, script) in [(&pa, &sa), (&pb, &sb)] {
        let session = build_session(p.clone(), Stage::Vire, &params).unwrap();
        assert!(served_log(dir.path(), &session, 0) == replay(p, 6, 0, script), "{}", p.id);
    }
}

#[tokio::test]
async fn input_speed_is_capped() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(config(dir.path(), 7)).await;
    let mut c = Client::connect(addr).await;
    let cfg = c.hello(lockstep(profile(4))).await;
    assert_eq!(cfg.max_walk_speed, 2.0);
    c.until(|b| matches!(b, Body::Event(WireEvent::TrialStarted { .. }))).await;
    c.input(Vec2::new(3.0, 0.0), 270).await;

    let mut fastest = 0.0f64;
    let mut last_tick = 0;
    while last_tick < 270 {
        if let Body::Snapshot(s) = c.recv().await.unwrap().body {
            let me = s.agents.iter().find(|a| a.id == s.respondent).unwrap();
            let speed = me.vx.hypot(me.vy);
            assert!(speed <= 2.0 + 1e-9, "speed {speed} at tick {}", s.tick);
            fastest = fastest.max(speed);
            assert_eq!(s.tick % SNAPSHOT_EVERY, 0);
            last_tick = s.tick;
        }
    }
    assert!(fastest > 1.9, "walker never reached the cap: {fastest}");
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn disconnect_mid_trial_resumes_at_same_trial() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, state) = start(config(dir.path(), 8)).await;
    let p = profile(5);
    let mut c = Client::connect(addr).await;
    let cfg = c.hello(lockstep(p.clone())).await;
    drive(&mut c, &walk_script()).await;
    c.until(|b| matches!(b, Body::Event(WireEvent::TrialStarted { trial: 1, .. }))).await;
    c.input(Vec2::new(0.0, 0.0), 30).await;
    c.until(|b| matches!(b, Body::Snapshot(s) if s.tick == 30)).await;

    let mut intruder = Client::connect(addr).await;
    intruder.send(Body::Hello(lockstep_resume(&cfg.session))).await;
    match intruder.until(|b| matches!(b, Body::Bye(_))).await.body {
        Body::Bye(b) => assert!(!b.completed && b.reason.unwrap().contains("already connected")),
        _ => unreachable!(),
    }
    c.close().await;

    let session = build_session(p, Stage::Vire, &TrialParams { seed: 8, ..TrialParams::default() }).unwrap();
    let (scenario, i) = session.run_order()[1];
    let aborted = log_path(dir.path(), &session.id, i, scenario);
    // The server notices the close asynchronously.
    for _ in 0..100 {
        if state.sessions().iter().all(|(_, live)| !live) {
            break;
        }
        tokio::time::sleep(std::time::Duration::from_millis(20)).await;
    }
    assert!(!aborted.exists());

    let mut c = Client::connect(addr).await;
    let resumed = c.hello(lockstep_resume(&cfg.session)).await;
    assert_eq!(resumed.session, cfg.session);
    assert_eq!(resumed.next_trial, 1);
    let o = drive(&mut c, &[(0, Vec2::new(0.0, 0.0))]).await;
    assert_eq!(o.trial_index, i);
    assert!(aborted.exists());
}

#[tokio::test]
async fn bad_frames_get_error_events() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(config(dir.path(), 9)).await;
    let mut c = Client::connect(addr).await;
    c.hello(lockstep(profile(6))).await;
    c.until(|b| matches!(b, Body::Event(WireEvent::TrialStarted { .. }))).await;

    c.send_raw("{not json").await;
    let m = c.until(|b| matches!(b, Body::Event(WireEvent::Error { .. }))).await;
    assert!(matches!(m.body, Body::Event(WireEvent::Error { message }) if message.contains("malformed")));

    c.send_raw(r#"{"seq":1,"type":"input","payload":{"velocity":[0.0,0.0],"steps":3}}"#).await;
    let m = c.until(|b| matches!(b, Body::Event(WireEvent::Error { .. }))).await;
    assert!(matches!(m.body, Body::Event(WireEvent::Error { message }) if message.contains("sequence")));

    c.input(Vec2::new(0.0, 0.0), 3).await;
    let m = c.until(|b| matches!(b, Body::Snapshot(_))).await;
    assert!(matches!(m.body, Body::Snapshot(s) if s.tick == 3));
}

#[tokio::test]
async fn realtime_clock_advances_without_input() {
    let dir = tempfile::tempdir().unwrap();
    let (addr, _) = start(config(dir.path(), 10)).await;
    let mut c = Client::connect(addr).await;
    let cfg = c.hello(Hello { respondent: Some(profile(7)), mode: ClockMode::Realtime, ..Hello::default() }).await;
    assert_eq!(cfg.mode, ClockMode::Realtime);
    let m = c.until(|b| matches!(b, Body::Snapshot(s) if s.tick >= 30)).await;
    assert!(matches!(m.body, Body::Snapshot(s) if s.t > 0.3));
    c.close().await;
}
