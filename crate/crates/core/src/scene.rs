//! Static world: road network, crosswalks, signal plan and spawn points,
//! plus the JSON scene document format.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{OrientedRect, Polyline};
use crate::{Polygon, Vec2};

/// Tolerance for centreline endpoints vs. node positions and anchors vs.
/// crosswalk boundaries.
pub const GEOMETRY_TOLERANCE: f64 = 0.01;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("malformed scene document: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scene: {0}")]
    Invalid(String),
    #[error("unknown crosswalk '{0}'")]
    UnknownCrosswalk(String),
    #[error("unknown link '{0}'")]
    UnknownLink(String),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SceneError> {
    Err(SceneError::Invalid(msg.into()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Node {
    pub id: String,
    pub position: Vec2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    pub id: String,
    pub from: String,
    pub to: String,
    pub lane_count: u32,
    pub lane_width: f64,
    pub speed_limit: f64,
    pub centerline: Vec<Vec2>,
}

impl Link {
    pub fn polyline(&self) -> Polyline<f64> {
        Polyline::new(self.centerline.clone())
    }

    pub fn width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    /// One rectangle per centreline segment; their union is the footprint.
    pub fn footprint(&self) -> Vec<Polygon> {
        self.centerline
            .windows(2)
            .filter(|w| w[0] != w[1])
            .map(|w| {
                let d = w[1] - w[0];
                OrientedRect::new((w[0] + w[1]) * 0.5, d.norm(), self.width(), d.angle()).to_polygon()
            })
            .collect()
    }

    pub fn footprint_contains(&self, p: Vec2) -> bool {
        self.footprint().iter().any(|r| r.contains(p))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Crosswalk {
    pub id: String,
    pub polygon: Polygon,
    pub entry: Vec2,
    pub exit: Vec2,
    pub crossed_links: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpawnKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

/// Vehicles enter on `link` at `offset`; pedestrians and cyclists appear at
/// `position`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnPoint {
    pub id: String,
    pub kind: SpawnKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub link: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<Vec2>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPhaseTimes {
    pub vehicle_green_s: f64,
    pub clearance_s: f64,
    pub walk_green_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalPlan {
    pub phases: Vec<SignalPhaseTimes>,
    #[serde(default)]
    pub cycle_offset_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPhase {
    VehicleGreen,
    Clearance,
    WalkGreen,
}

impl SignalPlan {
    pub fn new(vehicle_green_s: f64, clearance_s: f64, walk_green_s: f64) -> Self {
        SignalPlan {
            phases: vec![SignalPhaseTimes { vehicle_green_s, clearance_s, walk_green_s }],
            cycle_offset_s: 0.0,
        }
    }

    pub fn cycle_length(&self) -> f64 {
        self.phases.iter().map(|p| p.vehicle_green_s + p.clearance_s + p.walk_green_s).sum()
    }

    /// Phase at time `t`. Intervals are closed on the left.
    pub fn state(&self, t: f64) -> SignalPhase {
        let cycle = self.cycle_length();
        let mut u = (t + self.cycle_offset_s).rem_euclid(cycle);
        for p in &self.phases {
            if u < p.vehicle_green_s {
                return SignalPhase::VehicleGreen;
            }
            u -= p.vehicle_green_s;
            if u < p.clearance_s {
                return SignalPhase::Clearance;
            }
            u -= p.clearance_s;
            if u < p.walk_green_s {
                return SignalPhase::WalkGreen;
            }
            u -= p.walk_green_s;
        }
        // Only reachable through rounding at the very end of the cycle.
        SignalPhase::WalkGreen
    }

    fn validate(&self) -> Result<(), SceneError> {
        if self.phases.is_empty() {
            return invalid("signal plan has no phases");
        }
        for (i, p) in self.phases.iter().enumerate() {
            let ok = [p.vehicle_green_s, p.clearance_s, p.walk_green_s].iter().all(|&d| d > 0.0 && d.is_finite());
            if !ok {
                return invalid(format!("signal phase {i} has a non-positive duration"));
            }
        }
        if !self.cycle_offset_s.is_finite() {
            return invalid("signal cycle offset is not finite");
        }
        Ok(())
    }
}

impl Default for SignalPlan {
    fn default() -> Self {
        SignalPlan::new(30.0, 5.0, 20.0)
    }
}

/// Phase of `plan` at `t` seconds.
pub fn signal_state(plan: &SignalPlan, t: f64) -> SignalPhase {
    plan.state(t)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub nodes: Vec<Node>,
    pub links: Vec<Link>,
    pub crosswalks: Vec<Crosswalk>,
    #[serde(default)]
    pub spawns: Vec<SpawnPoint>,
    #[serde(default)]
    pub signal: Option<SignalPlan>,
    pub walk_area: Polygon,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
}

const LAURIER_RIVARD: &str = include_str!("../scenes/laurier_rivard.json");

/// Parses and validates a scene document.
pub fn load_scene(document: &str) -> Result<Scene, SceneError> {
    let scene: Scene = serde_json::from_str(document)?;
    scene.validate()?;
    Ok(scene)
}

/// Canonical (pretty-printed JSON) form of a scene.
pub fn save_scene(scene: &Scene) -> String {
    serde_json::to_string_pretty(scene).expect("scene serialises")
}

/// Bundled two-approach mid-block crossing with a pedestrian signal.
pub fn laurier_rivard() -> Scene {
    load_scene(LAURIER_RIVARD).expect("bundled scene is valid")
}

impl Scene {
    pub fn link_index(&self, id: &str) -> Option<usize> {
        self.links.iter().position(|l| l.id == id)
    }

    pub fn crosswalk(&self, id: &str) -> Option<&Crosswalk> {
        self.crosswalks.iter().find(|c| c.id == id)
    }

    fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Checks every structural invariant, reporting the first violation.
    pub fn validate(&self) -> Result<(), SceneError> {
        let mut seen = HashSet::new();
        for n in &self.nodes {
            if !seen.insert(n.id.as_str()) {
                return invalid(format!("duplicate node id '{}'", n.id));
            }
            if !n.position.is_finite() {
                return invalid(format!("node '{}' has a non-finite position", n.id));
            }
        }
        let mut seen = HashSet::new();
        for l in &self.links {
            if !seen.insert(l.id.as_str()) {
                return invalid(format!("duplicate link id '{}'", l.id));
            }
            let from = match self.node(&l.from) {
                Some(n) => n,
                None => return invalid(format!("unknown node '{}' referenced by link '{}'", l.from, l.id)),
            };
            let to = match self.node(&l.to) {
                Some(n) => n,
                None => return invalid(format!("unknown node '{}' referenced by link '{}'", l.to, l.id)),
            };
            if l.lane_count == 0 {
                return invalid(format!("link '{}' has no lanes", l.id));
            }
            if !(l.lane_width > 0.0) {
                return invalid(format!("link '{}' lane width must be positive", l.id));
            }
            if !(l.speed_limit > 0.0) || !l.speed_limit.is_finite() {
                return invalid(format!("link '{}' speed limit must be positive", l.id));
            }
            if l.centerline.len() < 2 || l.centerline.iter().any(|p| !p.is_finite()) {
                return invalid(format!("link '{}' centerline needs at least two finite points", l.id));
            }
            if !(l.polyline().length() > 0.0) {
                return invalid(format!("link '{}' has zero length", l.id));
            }
            let (first, last) = (l.centerline[0], *l.centerline.last().unwrap());
            if first.dist(from.position) > GEOMETRY_TOLERANCE || last.dist(to.position) > GEOMETRY_TOLERANCE {
                return invalid(format!("link '{}' centerline endpoints do not coincide with its nodes", l.id));
            }
        }
        let mut seen = HashSet::new();
        for c in &self.crosswalks {
            if !seen.insert(c.id.as_str()) {
                return invalid(format!("duplicate crosswalk id '{}'", c.id));
            }
            if !c.polygon.is_simple() {
                return invalid(format!("crosswalk '{}' polygon is not simple", c.id));
            }
            for (name, p) in [("entry", c.entry), ("exit", c.exit)] {
                if c.polygon.boundary_distance(p) > GEOMETRY_TOLERANCE {
                    return invalid(format!("crosswalk '{}' {name} anchor is not on its boundary", c.id));
                }
            }
            if c.crossed_links.is_empty() {
                return invalid(format!("crosswalk '{}' crosses no links", c.id));
            }
            for lid in &c.crossed_links {
                if self.link_index(lid).is_none() {
                    return invalid(format!("crosswalk '{}' references unknown link '{}'", c.id, lid));
                }
            }
            let touches = c.crossed_links.iter().any(|lid| {
                let link = &self.links[self.link_index(lid).unwrap()];
                link.footprint().iter().any(|r| c.polygon.clip_convex(r).is_some())
            });
            if !touches {
                return invalid(format!("crosswalk '{}' does not intersect any crossed link footprint", c.id));
            }
        }
        if !self.walk_area.is_simple() {
            return invalid("walk_area is not a simple polygon");
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if o.len() < 3 || o.area() <= 0.0 {
                return invalid(format!("obstacle {i} is degenerate"));
            }
        }
        if let Some(sig) = &self.signal {
            sig.validate()?;
        }
        let mut seen = HashSet::new();
        for s in &self.spawns {
            if !seen.insert(s.id.as_str()) {
                return invalid(format!("duplicate spawn id '{}'", s.id));
            }
            match s.kind {
                SpawnKind::Vehicle => {
                    let Some(lid) = &s.link else {
                        return invalid(format!("vehicle spawn '{}' has no link", s.id));
                    };
                    let Some(li) = self.link_index(lid) else {
                        return invalid(format!("spawn '{}' references unknown link '{}'", s.id, lid));
                    };
                    let off = s.offset.unwrap_or(0.0);
                    if !(0.0..self.links[li].polyline().length()).contains(&off) {
                        return invalid(format!("spawn '{}' offset lies outside its link", s.id));
                    }
                }
                SpawnKind::Pedestrian | SpawnKind::Cyclist => {
                    if s.position.is_none() {
                        return invalid(format!("spawn '{}' has no position", s.id));
                    }
                }
            }
        }
        Ok(())
    }

    /// Intersection of a crosswalk with the footprints of its crossed links.
    ///
    /// Pieces from different link segments are merged by their convex hull,
    /// which is exact for adjacent straight lanes.
    pub fn conflict_zone(&self, crosswalk_id: &str) -> Result<Polygon, SceneError> {
        let cw = self.crosswalk(crosswalk_id).ok_or_else(|| SceneError::UnknownCrosswalk(crosswalk_id.into()))?;
        let mut pieces = Vec::new();
        for lid in &cw.crossed_links {
            let li = self.link_index(lid).ok_or_else(|| SceneError::UnknownLink(lid.clone()))?;
            pieces.extend(self.links[li].footprint().iter().filter_map(|r| cw.polygon.clip_convex(r)));
        }
        match pieces.len() {
            0 => Err(SceneError::Invalid(format!("crosswalk '{crosswalk_id}' has an empty conflict zone"))),
            1 => Ok(pieces.pop().unwrap()),
            _ => {
                let pts: Vec<Vec2> = pieces.iter().flat_map(|p| p.vertices.iter().copied()).collect();
                Ok(Polygon::convex_hull(&pts))
            }
        }
    }

    /// Portion of a crosswalk lying on one link.
    pub fn lane_conflict_zone(&self, crosswalk_id: &str, link_id: &str) -> Result<Option<Polygon>, SceneError> {
        let cw = self.crosswalk(crosswalk_id).ok_or_else(|| SceneError::UnknownCrosswalk(crosswalk_id.into()))?;
        let li = self.link_index(link_id).ok_or_else(|| SceneError::UnknownLink(link_id.into()))?;
        let pieces: Vec<Polygon> =
            self.links[li].footprint().iter().filter_map(|r| cw.polygon.clip_convex(r)).collect();
        Ok(match pieces.len() {
            0 => None,
            1 => pieces.into_iter().next(),
            _ => {
                let pts: Vec<Vec2> = pieces.iter().flat_map(|p| p.vertices.iter().copied()).collect();
                Some(Polygon::convex_hull(&pts))
            }
        })
    }

    /// True when `p` is somewhere a pedestrian or cyclist may stand.
    pub fn walkable(&self, p: Vec2) -> bool {
        self.walk_area.contains(p)
            || self.crosswalks.iter().any(|c| c.polygon.contains(p))
            || self.links.iter().any(|l| l.footprint_contains(p))
    }
}

/// Where a crosswalk cuts a single link.
#[derive(Clone, Debug)]
pub struct LaneConflict {
    pub crosswalk: usize,
    pub link: usize,
    pub zone: Polygon,
    /// Centreline arc length where the zone starts.
    pub s_in: f64,
    /// Centreline arc length where the zone ends.
    pub s_out: f64,
}

/// Crossing geometry derived once from a scene.
#[derive(Clone, Debug)]
pub struct CrossingGeometry {
    pub crosswalk: usize,
    pub zone: Polygon,
    pub entry: Vec2,
    pub exit: Vec2,
    /// Unit vector from entry to exit anchor.
    pub axis: Vec2,
    pub length: f64,
    /// Half extent of the crosswalk across its axis.
    pub half_width: f64,
    pub lanes: Vec<usize>,
}

impl CrossingGeometry {
    /// Signed progress along the crossing: 0 at the entry anchor line, 1 at
    /// the exit anchor line.
    pub fn progress(&self, p: Vec2) -> f64 {
        (p - self.entry).dot(self.axis) / self.length
    }

    /// Distance from the crossing axis.
    pub fn lateral(&self, p: Vec2) -> f64 {
        (p - self.entry).dot(self.axis.perp())
    }
}

/// Precomputed per-link and per-crosswalk conflict data.
#[derive(Clone, Debug)]
pub struct SceneLayout {
    pub polylines: Vec<Polyline<f64>>,
    pub crossings: Vec<CrossingGeometry>,
    pub lane_conflicts: Vec<LaneConflict>,
    /// Lane conflicts on each link, ordered by `s_in`.
    pub conflicts_by_link: Vec<Vec<usize>>,
}

impl SceneLayout {
    pub fn new(scene: &Scene) -> Result<Self, SceneError> {
        let polylines: Vec<Polyline<f64>> = scene.links.iter().map(Link::polyline).collect();
        let mut crossings = Vec::new();
        let mut lane_conflicts = Vec::new();
        let mut conflicts_by_link = vec![Vec::new(); scene.links.len()];
        for (ci, cw) in scene.crosswalks.iter().enumerate() {
            let zone = scene.conflict_zone(&cw.id)?;
            let mut lanes = Vec::new();
            for lid in &cw.crossed_links {
                let li = scene.link_index(lid).ok_or_else(|| SceneError::UnknownLink(lid.clone()))?;
                let Some(lane_zone) = scene.lane_conflict_zone(&cw.id, lid)? else { continue };
                let Some((s_in, s_out)) = polylines[li].span_inside(&lane_zone) else { continue };
                lanes.push(lane_conflicts.len());
                conflicts_by_link[li].push(lane_conflicts.len());
                lane_conflicts.push(LaneConflict { crosswalk: ci, link: li, zone: lane_zone, s_in, s_out });
            }
            let d = cw.exit - cw.entry;
            let axis = d.normalized();
            let half_width = cw
                .polygon
                .vertices
                .iter()
                .map(|v| (*v - cw.entry).dot(axis.perp()).abs())
                .fold(0.0, f64::max);
            crossings.push(CrossingGeometry {
                crosswalk: ci,
                zone,
                entry: cw.entry,
                exit: cw.exit,
                axis,
                length: d.norm(),
                half_width,
                lanes,
            });
        }
        for list in &mut conflicts_by_link {
            list.sort_by(|&a, &b| lane_conflicts[a].s_in.total_cmp(&lane_conflicts[b].s_in));
        }
        Ok(SceneLayout { polylines, crossings, lane_conflicts, conflicts_by_link })
    }

    /// Arc length of the stop line on a link: `setback` metres before its
    /// first crosswalk.
    pub fn stop_line(&self, link: usize, setback: f64) -> Option<f64> {
        self.conflicts_by_link[link].first().map(|&c| self.lane_conflicts[c].s_in - setback)
    }
}
