//! Headless throughput measurement on the synthetic dense scene.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use spsim_core::microsim::bench::{bench_world, BenchMix};

/// Steps per throughput sample: one tenth of a simulated second.
const BLOCK: usize = 9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseMillis {
    pub index: f64,
    pub forces: f64,
    pub integrate: f64,
    pub events: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub agents: usize,
    pub pedestrians: usize,
    pub cyclists: usize,
    pub vehicles: usize,
    pub threads: usize,
    pub steps: usize,
    pub wall_seconds: f64,
    pub mean_steps_per_s: f64,
    /// 5th percentile over blocks of nine steps.
    pub p5_steps_per_s: f64,
    /// Mean wall time per step by phase.
    pub phase_ms: PhaseMillis,
    pub checksum: u64,
}

impl BenchReport {
    pub fn to_text(&self) -> String {
        format!(
            "agents {} ({} pedestrians, {} cyclists, {} vehicles), {} threads\n\
             steps {} in {:.2} s\n\
             steps/s mean {:.1}  p5 {:.1}\n\
             per step ms: index {:.3}  forces {:.3}  integrate {:.3}  events {:.3}\n\
             checksum {:016x}\n",
            self.agents,
            self.pedestrians,
            self.cyclists,
            self.vehicles,
            self.threads,
            self.steps,
            self.wall_seconds,
            self.mean_steps_per_s,
            self.p5_steps_per_s,
            self.phase_ms.index,
            self.phase_ms.forces,
            self.phase_ms.integrate,
            self.phase_ms.events,
            self.checksum,
        )
    }
}

/// Nearest-rank percentile of an unsorted sample.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    v[rank.min(v.len()) - 1]
}

/// Steps the bench world for at least `seconds` of wall time, in whole
/// blocks.
pub fn run_bench(agents: usize, seconds: f64, seed: u64) -> BenchReport {
    let mix = BenchMix::for_total(agents);
    let mut world = bench_world(agents, seed);
    let budget = Duration::from_secs_f64(seconds.max(0.0));
    let mut phases = [Duration::ZERO; 4];
    let mut rates = Vec::new();
    let mut steps = 0;
    let start = Instant::now();
    loop {
        let block_start = Instant::now();
        for _ in 0..BLOCK {
            let (_, t) = world.step_profiled();
            phases[0] += t.index;
            phases[1] += t.forces;
            phases[2] += t.integrate;
            phases[3] += t.events;
        }
        steps += BLOCK;
        rates.push(BLOCK as f64 / block_start.elapsed().as_secs_f64());
        if start.elapsed() >= budget {
            break;
        }
    }
    let wall = start.elapsed().as_secs_f64();
    let per_step = |d: Duration| d.as_secs_f64() * 1e3 / steps as f64;
    BenchReport {
        agents,
        pedestrians: mix.pedestrians,
        cyclists: mix.cyclists,
        vehicles: mix.vehicles,
        threads: rayon::current_num_threads(),
        steps,
        wall_seconds: wall,
        mean_steps_per_s: steps as f64 / wall,
        p5_steps_per_s: percentile(&rates, 5.0),
        phase_ms: PhaseMillis {
            index: per_step(phases[0]),
            forces: per_step(phases[1]),
            integrate: per_step(phases[2]),
            events: per_step(phases[3]),
        },
        checksum: world.checksum(),
    }
}

/// World checksum after a fixed number of steps, independent of timing.
pub fn checksum_after(agents: usize, steps: u64, seed: u64) -> u64 {
    let mut world = bench_world(agents, seed);
    for _ in 0..steps {
        world.step();
    }
    world.checksum()
}
