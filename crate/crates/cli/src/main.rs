use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use spsim::batch::{load_respondents, run_batch, BatchConfig};
use spsim::bench::run_bench;
use spsim::estimate::{estimate_models, load_datasets, report};
use spsim::server::{self, ServerConfig};
use spsim_core::autopilot::GapAcceptanceParams;
use spsim_core::experiment::{synthetic_respondents, PreferenceRule, Stage, TrialParams};
use spsim_core::scene::laurier_rivard;
use spsim_core::{load_scene, Scene, SimParams};

#[derive(Parser)]
#[command(name = "spsim", version, about = "Crossing experiment simulator and choice estimation")]
struct Cli {
    /// Worker threads for parallel stepping and batch runs (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure stepping throughput on a synthetic dense scene.
    Bench {
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        agents: u64,
        #[arg(long, default_value_t = 5.0)]
        seconds: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run the full protocol with the autopilot for every respondent.
    RunBatch {
        /// Scene document; the built-in intersection when omitted.
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// JSON array of respondent profiles.
        #[arg(long, conflicts_with = "synthetic")]
        respondents: Option<PathBuf>,
        /// Generate this many respondents instead of reading a file.
        #[arg(long)]
        synthetic: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = GapAcceptanceParams::default().critical_gap)]
        critical_gap: f64,
        #[arg(long, default_value_t = GapAcceptanceParams::default().walk_speed)]
        walk_speed: f64,
        /// JSON preference rule; fixed stage shares when omitted.
        #[arg(long)]
        rule: Option<PathBuf>,
    },
    /// Fit the binary logit to one or more dataset files.
    Estimate {
        #[arg(long, required = true, num_args = 1..)]
        data: Vec<PathBuf>,
        /// Pool all datasets with relative scales.
        #[arg(long)]
        joint: bool,
        /// Dataset whose scale is fixed to one.
        #[arg(long, value_parser = parse_stage)]
        reference: Option<Stage>,
        /// Write the report here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a scene document.
    ValidateScene { path: PathBuf },
    /// Serve live sessions over websocket at /ws.
    Serve {
        #[arg(long)]
        scene: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "sessions-out")]
        out: PathBuf,
    },
}

fn parse_stage(s: &str) -> Result<Stage, String> {
    Stage::ALL
        .into_iter()
        .find(|g| g.label() == s)
        .ok_or_else(|| format!("unknown dataset '{s}' (expected text, visual or vire)"))
}

/// Failure split by exit code.
enum Failure {
    Input(anyhow::Error),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

fn input<T>(r: Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Input)
}

fn read_scene(path: Option<&Path>) -> Result<Scene> {
    let Some(path) = path else { return Ok(laurier_rivard()) };
    let text = fs::read_to_string(path).with_context(|| format!("reading scene {}", path.display()))?;
    load_scene(&text).with_context(|| format!("invalid scene {}", path.display()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    if let Some(n) = cli.threads {
        input(rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("configuring threads"))?;
    }
    match cli.command {
        Command::Bench { agents, seconds, seed, json } => {
            if !(seconds > 0.0 && seconds.is_finite()) {
                return Err(Failure::Input(anyhow::anyhow!("--seconds must be positive")));
            }
            let report = run_bench(agents as usize, seconds, seed);
            if json {
                println!("{}", serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?);
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::RunBatch { scene, seed, respondents, synthetic, out, critical_gap, walk_speed, rule } => {
            let scene = input(read_scene(scene.as_deref()))?;
            let profiles = match (respondents, synthetic) {
                (Some(path), _) => input(load_respondents(&path))?,
                (None, Some(n)) => synthetic_respondents(n, seed),
                (None, None) => {
                    return Err(Failure::Input(anyhow::anyhow!("one of --respondents or --synthetic is required")))
                }
            };
            let rule = match rule {
                Some(path) => input(
                    fs::read_to_string(&path)
                        .map_err(anyhow::Error::from)
                        .and_then(|t| Ok(serde_json::from_str::<PreferenceRule>(&t)?))
                        .with_context(|| format!("reading preference rule {}", path.display())),
                )?,
                None => PreferenceRule::default(),
            };
            let cfg = BatchConfig {
                scene: Arc::new(scene),
                trial: TrialParams { seed, ..TrialParams::default() },
                sim: SimParams::default(),
                autopilot: GapAcceptanceParams { critical_gap, walk_speed, ..GapAcceptanceParams::default() },
                rule,
                out,
            };
            let summary = run_batch(&profiles, &cfg)?;
            println!("{}", serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)?);
        }
        Command::Estimate { data, joint, reference, out } => {
            let rows = input(load_datasets(&data))?;
            let models = estimate_models(&rows, joint, reference)?;
            let text = report(&models);
            print!("{text}");
            if let Some(path) = out {
                fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
            }
        }
        Command::ValidateScene { path } => {
            let scene = input(read_scene(Some(&path)))?;
            println!(
                "{}: ok ({} links, {} crosswalks)",
                path.display(),
                scene.links.len(),
                scene.crosswalks.len()
            );
        }
        Command::Serve { scene, seed, port, out } => {
            let scene = input(read_scene(scene.as_deref()))?;
            let cfg = ServerConfig {
                scene: Arc::new(scene),
                trial: TrialParams { seed, ..TrialParams::default() },
                sim: SimParams::default(),
                out,
            };
            let rt = tokio::runtime::Runtime::new().map_err(anyhow::Error::from)?;
            rt.block_on(async {
                let (addr, handle, _) = server::spawn(cfg, SocketAddr::from(([0, 0, 0, 0], port))).await?;
                log::info!("listening on ws://{addr}/ws");
                handle.await.context("server task")?;
                Ok::<_, anyhow::Error>(())
            })?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
