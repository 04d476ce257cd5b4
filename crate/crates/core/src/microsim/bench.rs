//! Synthetic dense scene for throughput measurement.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentKind, SimParams, Steering, World};
use crate::scene::{Link, Node, Scene};
use crate::{Polygon, Vec2};

/// Road length per vehicle on the bench rings (m).
const VEHICLE_SPACING: f64 = 25.0;
/// Walkable area per agent (m²).
const AREA_PER_AGENT: f64 = 100.0;

/// Agent counts for a bench run: 70% pedestrians, 10% cyclists, 20%
/// vehicles split evenly between human and autonomous.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchMix {
    pub pedestrians: usize,
    pub cyclists: usize,
    pub vehicles: usize,
}

impl BenchMix {
    pub fn for_total(agents: usize) -> Self {
        let vehicles = agents / 5;
        let cyclists = agents / 10;
        BenchMix { pedestrians: agents - vehicles - cyclists, cyclists, vehicles }
    }

    pub fn total(&self) -> usize {
        self.pedestrians + self.cyclists + self.vehicles
    }
}

/// Square open plaza crossed by parallel ring roads, sized so density stays
/// constant as the agent count grows.
pub fn bench_scene(mix: &BenchMix) -> Scene {
    let side = (mix.total().max(1) as f64 * AREA_PER_AGENT).sqrt().max(50.0);
    let lanes = ((mix.vehicles as f64 * VEHICLE_SPACING) / side).ceil().max(1.0) as usize;
    let spacing = side / (lanes as f64 + 1.0);
    let mut nodes = Vec::new();
    let mut links = Vec::new();
    for k in 0..lanes {
        let y = spacing * (k as f64 + 1.0);
        let (a, b) = (format!("w{k}"), format!("e{k}"));
        nodes.push(Node { id: a.clone(), position: Vec2::new(0.0, y) });
        nodes.push(Node { id: b.clone(), position: Vec2::new(side, y) });
        links.push(Link {
            id: format!("ring{k}"),
            from: a,
            to: b,
            lane_count: 1,
            lane_width: 3.5,
            speed_limit: 13.89,
            centerline: vec![Vec2::new(0.0, y), Vec2::new(side, y)],
        });
    }
    Scene {
        nodes,
        links,
        crosswalks: Vec::new(),
        spawns: Vec::new(),
        signal: None,
        walk_area: Polygon::rect(0.0, 0.0, side, side),
        obstacles: vec![Polygon::rect(0.45 * side, 0.45 * side, 0.45 * side + 4.0, 0.45 * side + 4.0)],
    }
}

/// A populated bench world with wandering walkers and ring traffic.
pub fn bench_world(agents: usize, seed: u64) -> World {
    let mix = BenchMix::for_total(agents);
    let scene = bench_scene(&mix);
    let (lo, hi) = scene.walk_area.bounding_box();
    let lanes = scene.links.len();
    let side = hi.x - lo.x;
    let params = SimParams { ring_links: true, signalized: false, ..SimParams::default() };
    let mut world = World::new(Arc::new(scene), params, seed).expect("bench scene is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = |rng: &mut ChaCha8Rng| Vec2::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
    let per_lane = mix.vehicles.div_ceil(lanes.max(1));
    for v in 0..mix.vehicles {
        let (link, slot) = (v % lanes, v / lanes);
        let s = (slot as f64 + 0.5) * side / per_lane as f64;
        let kind = if v % 2 == 0 { AgentKind::VehicleHuman } else { AgentKind::VehicleAutonomous };
        world.add_vehicle(kind, link, s, rng.gen_range(8.0..13.89));
    }
    for _ in 0..mix.pedestrians {
        let (p, g) = (point(&mut rng), point(&mut rng));
        world.add_pedestrian(p, Steering::Wander(g));
    }
    for _ in 0..mix.cyclists {
        let (p, g) = (point(&mut rng), point(&mut rng));
        world.add_cyclist(p, Steering::Wander(g));
    }
    world
}
