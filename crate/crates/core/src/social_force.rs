//! Social force dynamics for pedestrians and cyclists.
//!
//! Acceleration is a relaxation toward the desired velocity plus an
//! exponential repulsion `A * exp((r - d) / B) * n` from each source, with
//! `{A, B}` chosen by source kind. For discs `d` is the centre distance and
//! `r` the sum of radii; for rectangles and polygons `d` is the distance to
//! the nearest boundary point and `r` the agent's own radius.

use serde::{Deserialize, Serialize};

use crate::geom::{OrientedRect, Polygon, Vec2};
use crate::num::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Repulsion<T: Copy> {
    /// Interaction strength A (m/s²).
    pub strength: T,
    /// Interaction range B (m).
    pub range: T,
}

impl<T: Real> Repulsion<T> {
    pub fn new(strength: T, range: T) -> Self {
        Repulsion { strength, range }
    }

    /// Magnitude at surface separation `d - r`.
    #[inline]
    pub fn magnitude(&self, contact: T, distance: T) -> T {
        self.strength * ((contact - distance) / self.range).exp()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialForceParams<T: Copy> {
    /// Relaxation time τ (s).
    pub relaxation_time: T,
    pub pedestrian: Repulsion<T>,
    pub obstacle: Repulsion<T>,
    pub vehicle: Repulsion<T>,
    pub cyclist: Repulsion<T>,
    /// Hard speed cap (m/s).
    pub max_speed: T,
}

impl<T: Real> SocialForceParams<T> {
    /// Walking defaults; the cap forbids running.
    pub fn pedestrian() -> Self {
        SocialForceParams {
            relaxation_time: T::lit(0.5),
            pedestrian: Repulsion::new(T::lit(2.1), T::lit(0.3)),
            obstacle: Repulsion::new(T::lit(10.0), T::lit(0.2)),
            vehicle: Repulsion::new(T::lit(15.0), T::lit(1.0)),
            cyclist: Repulsion::new(T::lit(5.0), T::lit(0.6)),
            max_speed: T::lit(2.0),
        }
    }

    /// Same interaction table with a cycling speed cap.
    pub fn cyclist() -> Self {
        SocialForceParams { max_speed: T::lit(8.0), ..Self::pedestrian() }
    }

    pub fn repulsion(&self, kind: SourceKind) -> &Repulsion<T> {
        match kind {
            SourceKind::Pedestrian => &self.pedestrian,
            SourceKind::Obstacle => &self.obstacle,
            SourceKind::Vehicle => &self.vehicle,
            SourceKind::Cyclist => &self.cyclist,
        }
    }

    pub fn is_valid(&self, desired_speed: T) -> bool {
        let z = T::zero();
        self.relaxation_time > z
            && [self.pedestrian, self.obstacle, self.vehicle, self.cyclist]
                .iter()
                .all(|r| r.strength > z && r.range > z)
            && self.max_speed >= desired_speed
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceKind {
    Pedestrian,
    Obstacle,
    Vehicle,
    Cyclist,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Shape<T: Copy> {
    Disc { center: Vec2<T>, radius: T },
    Rect(OrientedRect<T>),
}

/// A repelling body near the agent.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor<T: Copy> {
    pub kind: SourceKind,
    pub shape: Shape<T>,
}

/// Kinematic state of the agent the force acts on.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Walker<T: Copy> {
    pub position: Vec2<T>,
    pub velocity: Vec2<T>,
    pub radius: T,
}

#[inline]
pub fn driving_force<T: Real>(velocity: Vec2<T>, desired_velocity: Vec2<T>, relaxation_time: T) -> Vec2<T> {
    (desired_velocity - velocity) / relaxation_time
}

/// Repulsion on `agent` from one neighbour.
pub fn neighbor_repulsion<T: Real>(agent: &Walker<T>, n: &Neighbor<T>, p: &SocialForceParams<T>) -> Vec2<T> {
    let rep = p.repulsion(n.kind);
    match n.shape {
        Shape::Disc { center, radius } => {
            let off = agent.position - center;
            let d = off.norm();
            if d <= T::zero() {
                return Vec2::zero();
            }
            off / d * rep.magnitude(agent.radius + radius, d)
        }
        Shape::Rect(rect) => {
            let (d, normal) = rect.signed_distance(agent.position);
            normal * rep.magnitude(agent.radius, d)
        }
    }
}

/// Repulsion from the nearest boundary point of an obstacle; agents inside
/// the polygon are pushed out.
pub fn obstacle_repulsion<T: Real>(agent: &Walker<T>, obstacle: &Polygon<T>, p: &SocialForceParams<T>) -> Vec2<T> {
    let c = obstacle.closest_boundary_point(agent.position);
    let off = agent.position - c;
    let d = off.norm();
    if d <= T::zero() {
        return Vec2::zero();
    }
    let (dist, normal) = if obstacle.contains(agent.position) { (-d, -off / d) } else { (d, off / d) };
    normal * p.obstacle.magnitude(agent.radius, dist)
}

/// Total acceleration given an explicit desired velocity.
pub fn social_acceleration<'a, T: Real>(
    agent: &Walker<T>,
    desired_velocity: Vec2<T>,
    neighbors: impl IntoIterator<Item = &'a Neighbor<T>>,
    obstacles: &[Polygon<T>],
    p: &SocialForceParams<T>,
) -> Vec2<T> {
    let mut acc = driving_force(agent.velocity, desired_velocity, p.relaxation_time);
    for n in neighbors {
        acc += neighbor_repulsion(agent, n, p);
    }
    for o in obstacles {
        acc += obstacle_repulsion(agent, o, p);
    }
    acc
}

/// Acceleration of an agent heading for `goal` at `desired_speed`. An agent
/// already at its goal only feels velocity damping.
pub fn social_force<'a, T: Real>(
    agent: &Walker<T>,
    desired_speed: T,
    goal: Vec2<T>,
    neighbors: impl IntoIterator<Item = &'a Neighbor<T>>,
    obstacles: &[Polygon<T>],
    p: &SocialForceParams<T>,
) -> Vec2<T> {
    let desired = (goal - agent.position).normalized() * desired_speed;
    social_acceleration(agent, desired, neighbors, obstacles, p)
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec2<f64>;

    fn walker(pos: V, vel: V) -> Walker<f64> {
        Walker { position: pos, velocity: vel, radius: 0.25 }
    }

    #[test]
    fn at_desired_velocity_no_force() {
        let p = SocialForceParams::pedestrian();
        let w = walker(V::zero(), V::new(1.34, 0.0));
        let f = social_force(&w, 1.34, V::new(10.0, 0.0), &[], &[], &p);
        assert!(f.norm() < 1e-12);
    }

    #[test]
    fn from_rest_points_at_goal() {
        let p = SocialForceParams::pedestrian();
        let w = walker(V::zero(), V::zero());
        let f = social_force(&w, 1.34, V::new(0.0, 5.0), &[], &[], &p);
        assert!((f.norm() - 1.34 / 0.5).abs() < 1e-12);
        assert!(f.x.abs() < 1e-12 && f.y > 0.0);
    }

    #[test]
    fn goal_reached_only_damps() {
        let p = SocialForceParams::pedestrian();
        let w = walker(V::new(1.0, 1.0), V::new(0.5, 0.0));
        let f = social_force(&w, 1.34, V::new(1.0, 1.0), &[], &[], &p);
        assert!((f.x + 1.0).abs() < 1e-12 && f.y == 0.0);
    }

    #[test]
    fn mirror_neighbors_cancel_laterally() {
        let p = SocialForceParams::pedestrian();
        let w = walker(V::zero(), V::zero());
        let ns = [
            Neighbor { kind: SourceKind::Pedestrian, shape: Shape::Disc { center: V::new(1.0, 0.7), radius: 0.25 } },
            Neighbor { kind: SourceKind::Pedestrian, shape: Shape::Disc { center: V::new(1.0, -0.7), radius: 0.25 } },
        ];
        let f = social_force(&w, 1.34, V::new(10.0, 0.0), &ns, &[], &p);
        assert_eq!(f.y, 0.0);
    }

    #[test]
    fn inside_obstacle_pushed_out() {
        let p = SocialForceParams::pedestrian();
        let w = walker(V::new(0.9, 0.5), V::zero());
        let f = obstacle_repulsion(&w, &Polygon::rect(0.0, 0.0, 1.0, 1.0), &p);
        assert!(f.x > 0.0);
    }

    #[test]
    fn vehicle_rectangle_repels_from_nearest_side() {
        let p = SocialForceParams::pedestrian();
        let car = Neighbor { kind: SourceKind::Vehicle, shape: Shape::Rect(OrientedRect::new(V::zero(), 4.5, 1.8, 0.0)) };
        let w = walker(V::new(0.0, 2.0), V::zero());
        let f = neighbor_repulsion(&w, &car, &p);
        let expected = 15.0 * ((0.25 - 1.1) / 1.0f64).exp();
        assert!(f.x.abs() < 1e-12 && (f.y - expected).abs() < 1e-12);
    }
}
