use std::sync::Arc;

use proptest::prelude::*;
use spsim_core::microsim::bench::bench_world;
use spsim_core::microsim::Steering;
use spsim_core::scene::laurier_rivard;
use spsim_core::social_force::{neighbor_repulsion, social_acceleration, Neighbor, Shape, SourceKind, Walker};
use spsim_core::{AgentKind, SimEventKind, SimParams, SocialForceParams, Vec2, World};

fn world(signalized: bool) -> World {
    World::new(Arc::new(laurier_rivard()), SimParams { signalized, ..SimParams::default() }, 1).unwrap()
}

/// Free-road IDM speed by explicit Euler at a fine step.
fn fine_free_speed(v0: f64, a: f64, delta: f64, until: f64, dt: f64) -> Vec<f64> {
    let mut v = 0.0f64;
    let mut marks = Vec::new();
    let steps_per_s = (1.0 / dt).round() as usize;
    for k in 1..=(until as usize * steps_per_s) {
        v += a * (1.0 - (v / v0).powf(delta)) * dt;
        if k % steps_per_s == 0 {
            marks.push(v);
        }
    }
    marks
}

#[test]
fn empty_world_only_advances_time() {
    let mut w = world(false);
    let events = w.step();
    assert!(events.is_empty());
    assert_eq!(w.tick(), 1);
    assert!((w.t() - 1.0 / 90.0).abs() < 1e-15);
}

#[test]
fn identical_worlds_step_identically() {
    let mut a = bench_world(500, 3);
    let mut b = bench_world(500, 3);
    for _ in 0..30 {
        assert_eq!(a.step(), b.step());
    }
    assert_eq!(a.agents(), b.agents());
    assert_eq!(a.checksum(), b.checksum());
}

#[test]
fn free_vehicle_matches_fine_step_reference() {
    let mut w = world(false);
    let id = w.add_vehicle(AgentKind::VehicleHuman, 0, 0.0, 0.0);
    let v0 = w.agent(id).unwrap().desired_speed;
    let idm = w.params().idm;
    let reference = fine_free_speed(v0, idm.max_accel, idm.exponent, 15.0, 1.0 / 9000.0);
    for (second, want) in reference.iter().enumerate() {
        for _ in 0..90 {
            w.step();
        }
        let got = w.agent(id).unwrap().vehicle.as_ref().unwrap().speed;
        assert!((got - want).abs() < 0.05, "t = {} s: {got} vs {want}", second + 1);
    }
}

#[test]
fn lane_zones_span_one_crosswalk_width() {
    let w = world(false);
    for c in &w.layout().lane_conflicts {
        assert!((c.s_out - c.s_in - 3.5).abs() < 1e-6, "{} {}", c.s_in, c.s_out);
    }
}

#[test]
fn overlapping_bodies_are_an_accident() {
    let mut w = world(false);
    let c = w.layout().lane_conflicts[0].clone();
    let v = w.add_vehicle(AgentKind::VehicleHuman, c.link, c.s_out + 20.0, 5.0);
    let car = w.agent(v).unwrap();
    let ahead = car.position + Vec2::new(car.heading.cos(), car.heading.sin()) * 4.0;
    let p = w.add_pedestrian(ahead, Steering::Idle);
    let mut hit = false;
    for _ in 0..90 {
        hit |= w.step().iter().any(|e| e.kind == SimEventKind::Accident && e.subjects == vec![p, v]);
    }
    assert!(hit);
}

#[test]
fn stepping_in_front_of_a_close_vehicle_is_an_accident() {
    let mut w = world(false);
    let c = w.layout().lane_conflicts[0].clone();
    let v = w.add_vehicle(AgentKind::VehicleHuman, c.link, c.s_in - 7.0, 13.89);
    let (lo, hi) = c.zone.bounding_box();
    let p = w.add_pedestrian(Vec2::new((lo.x + hi.x) * 0.5, lo.y - 0.02), Steering::Velocity(Vec2::new(0.0, 1.4)));
    let mut accident = None;
    for _ in 0..30 {
        if let Some(e) = w.step().into_iter().find(|e| e.kind == SimEventKind::Accident) {
            accident = Some(e);
            break;
        }
    }
    let e = accident.expect("no accident");
    assert_eq!(e.subjects, vec![p, v]);
    let required = e.decel.unwrap();
    let car = w.agent(v).unwrap().vehicle.clone().unwrap();
    let oracle = car.speed.powi(2) / (2.0 * (c.s_in - car.s));
    assert!(required > 8.0, "{required}");
    assert!((required - oracle).abs() < 1e-9, "{required} vs {oracle}");
}

#[test]
fn pedestrian_crossing_emits_start_and_completion() {
    let mut w = world(false);
    let c = w.layout().crossings[0].clone();
    let p = w.add_pedestrian(c.entry - c.axis * 3.0, Steering::Velocity(c.axis * 1.4));
    let mut started = None;
    let mut completed = None;
    for _ in 0..(20 * 90) {
        for e in w.step() {
            match e.kind {
                SimEventKind::CrossingStarted => started = Some(e.t),
                SimEventKind::CrossingCompleted => completed = Some(e.t),
                _ => {}
            }
            assert_eq!(e.subjects, vec![p]);
        }
    }
    let dt = w.dt();
    let duration = completed.unwrap() - started.unwrap();
    assert!((duration - c.length / 1.4).abs() <= dt + 1e-9, "{duration}");
}

#[test]
fn neighbor_query_includes_the_boundary() {
    let mut w = world(false);
    let a = w.add_pedestrian(Vec2::new(0.0, -10.0), Steering::Idle);
    let b = w.add_pedestrian(Vec2::new(3.0, -6.0), Steering::Idle);
    assert_eq!(w.neighbor_query(Vec2::new(0.0, -10.0), 5.0), vec![a, b]);
    assert_eq!(w.neighbor_query(Vec2::new(0.0, -10.0), 4.999), vec![a]);
}

#[test]
fn relaxation_follows_discrete_exponential() {
    let p = SocialForceParams::pedestrian();
    let dt = 1.0 / 90.0;
    let target = Vec2::new(1.4, 0.0);
    let mut v = Vec2::zero();
    for k in 1..=180 {
        let w = Walker { position: Vec2::zero(), velocity: v, radius: 0.25 };
        v += social_acceleration(&w, target, [], &[], &p) * dt;
        let closed = 1.4 * (1.0 - (1.0 - dt / p.relaxation_time).powi(k));
        assert!((v.x - closed).abs() < 1e-12);
        let continuous = 1.4 * (1.0 - (-(k as f64) * dt / p.relaxation_time).exp());
        assert!((v.x - continuous).abs() < 0.02);
    }
}

#[test]
fn neighbor_on_axis_repels_exponentially() {
    let p = SocialForceParams::pedestrian();
    let me = Walker { position: Vec2::zero(), velocity: Vec2::zero(), radius: 0.25 };
    for d in [0.4, 0.7, 1.3, 2.0] {
        let n = Neighbor { kind: SourceKind::Pedestrian, shape: Shape::Disc { center: Vec2::new(d, 0.0), radius: 0.25 } };
        let f = neighbor_repulsion(&me, &n, &p);
        let oracle = 2.1 * ((0.5 - d) / 0.3).exp();
        assert!((f.x + oracle).abs() < 1e-12 && f.y == 0.0, "d {d}: {f:?} vs {oracle}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn neighbor_query_matches_brute_force(seed in 0u64..1000, radius in 0.5f64..20.0, cx in -40.0f64..40.0, cy in -40.0f64..40.0) {
        let w = bench_world(1000, seed);
        let c = Vec2::new(cx, cy);
        let brute: Vec<_> = w.agents().iter().filter(|a| a.position.dist(c) <= radius).map(|a| a.id).collect();
        prop_assert_eq!(w.neighbor_query(c, radius), brute);
    }

    #[test]
    fn walkers_never_exceed_their_cap(seed in 0u64..1000, vx in -6.0f64..6.0, vy in -6.0f64..6.0) {
        let mut w = bench_world(300, seed);
        let ids: Vec<_> = w.agents().iter().filter(|a| a.kind.is_walker()).map(|a| a.id).collect();
        for (k, &id) in ids.iter().enumerate() {
            if k % 2 == 0 {
                w.set_steering(id, Steering::Velocity(Vec2::new(vx, vy)));
            }
        }
        let (ped, cyc) = (w.params().pedestrian.max_speed, w.params().cyclist.max_speed);
        for _ in 0..60 {
            w.step();
            for a in w.agents() {
                let cap = match a.kind {
                    AgentKind::Pedestrian => ped,
                    AgentKind::Cyclist => cyc,
                    _ => continue,
                };
                prop_assert!(a.speed() <= cap + 1e-9, "{:?} at {}", a.kind, a.speed());
            }
        }
    }

    #[test]
    fn vehicle_speeds_stay_non_negative(seed in 0u64..1000) {
        let mut w = bench_world(400, seed);
        for _ in 0..90 {
            w.step();
            for a in w.agents() {
                if let Some(v) = &a.vehicle {
                    prop_assert!(v.speed >= 0.0);
                }
            }
        }
    }
}
