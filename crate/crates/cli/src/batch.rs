//! Full protocol runs with the autopilot standing in for every respondent.

use std::collections::BTreeMap;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use spsim_core::autopilot::{Autopilot, GapAcceptanceParams};
use spsim_core::choice::{build_dataset, choice_shares, write_dataset};
use spsim_core::experiment::{
    assign_preferences, build_session, run_trial, PreferenceRule, RespondentProfile, RunConfig, Session, Stage,
    TrialOutcome, TrialParams, TrialResult,
};
use spsim_core::tracking::TrajectoryLog;
use spsim_core::{Scene, SimParams};

use crate::log_path;

#[derive(Clone, Debug)]
pub struct BatchConfig {
    pub scene: Arc<Scene>,
    pub trial: TrialParams,
    pub sim: SimParams,
    pub autopilot: GapAcceptanceParams,
    pub rule: PreferenceRule,
    pub out: PathBuf,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub respondents: usize,
    pub sessions: usize,
    pub trials_run: usize,
    pub crossed: usize,
    pub accidents: usize,
    pub timeouts: usize,
    /// Rows and share preferring the AV crossing, per stage.
    pub shares: BTreeMap<Stage, (usize, f64)>,
}

pub fn load_respondents(path: &Path) -> Result<Vec<RespondentProfile>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading respondents file {}", path.display()))?;
    let profiles: Vec<RespondentProfile> =
        serde_json::from_str(&text).with_context(|| format!("parsing respondents file {}", path.display()))?;
    Ok(profiles)
}

pub fn write_log(path: &Path, log: &TrajectoryLog) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let file = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    log.export(BufWriter::new(file))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// Runs every trial of a simulated session, writing each log as soon as
/// its trial ends.
fn run_session(session: &mut Session, cfg: &BatchConfig) -> Result<()> {
    for (scenario, i) in session.run_order() {
        let spec = session.trials[i].clone().with_scenario(scenario);
        let run = RunConfig {
            sim: cfg.sim.clone(),
            trial: cfg.trial.clone(),
            session_id: session.id.clone(),
            respondent_id: session.respondent.id.clone(),
            ..RunConfig::default()
        };
        let mut pilot = Autopilot::new(cfg.autopilot);
        let (outcome, log) = run_trial(&spec, cfg.scene.clone(), &mut pilot, &run)
            .with_context(|| format!("session {} trial {i} ({})", session.id, scenario.label()))?;
        write_log(&log_path(&cfg.out, &session.id, i, scenario), &log)?;
        session.outcomes.push(outcome);
    }
    Ok(())
}

fn count(outcomes: &[TrialOutcome], r: TrialResult) -> usize {
    outcomes.iter().filter(|o| o.result == r).count()
}

/// Builds three sessions per respondent, runs the immersive ones, assigns
/// preferences and writes sessions, logs, the choice dataset and a summary
/// under `cfg.out`. Logs of completed trials are kept when a later trial
/// fails.
pub fn run_batch(respondents: &[RespondentProfile], cfg: &BatchConfig) -> Result<BatchSummary> {
    if respondents.is_empty() {
        bail!("no respondents");
    }
    fs::create_dir_all(&cfg.out).with_context(|| format!("creating {}", cfg.out.display()))?;
    let mut sessions = Vec::with_capacity(respondents.len() * Stage::ALL.len());
    for stage in Stage::ALL {
        for r in respondents {
            sessions.push(build_session(r.clone(), stage, &cfg.trial)?);
        }
    }
    let failures: Vec<anyhow::Error> = sessions
        .par_iter_mut()
        .filter(|s| s.simulated)
        .map(|s| run_session(s, cfg))
        .filter_map(Result::err)
        .collect();
    if let Some(e) = failures.into_iter().next() {
        return Err(e);
    }
    assign_preferences(&mut sessions, &cfg.rule, cfg.trial.seed)?;
    for s in &sessions {
        write_json(&cfg.out.join("sessions").join(format!("{}.json", s.id)), s)?;
    }
    let data = build_dataset(&sessions)?;
    let file = fs::File::create(cfg.out.join("dataset.csv"))?;
    write_dataset(&data, BufWriter::new(file))?;

    let outcomes: Vec<TrialOutcome> = sessions.iter().flat_map(|s| s.outcomes.iter().cloned()).collect();
    let summary = BatchSummary {
        respondents: respondents.len(),
        sessions: sessions.len(),
        trials_run: outcomes.len(),
        crossed: count(&outcomes, TrialResult::Crossed),
        accidents: count(&outcomes, TrialResult::Accident),
        timeouts: count(&outcomes, TrialResult::Timeout),
        shares: choice_shares(&data),
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}
