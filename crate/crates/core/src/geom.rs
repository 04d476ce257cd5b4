//! Planar geometry: vectors, polygons, polylines and oriented rectangles.
//!
//! Polygons are stored as an open vertex ring (the closing edge is implied).
//! Orientation is not normalised on input; routines that need it check the
//! signed area.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::num::Real;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[T; 2]", into = "[T; 2]")]
pub struct Vec2<T: Copy> {
    pub x: T,
    pub y: T,
}

impl<T: Copy> From<[T; 2]> for Vec2<T> {
    fn from(a: [T; 2]) -> Self {
        Vec2 { x: a[0], y: a[1] }
    }
}

impl<T: Copy> From<Vec2<T>> for [T; 2] {
    fn from(v: Vec2<T>) -> Self {
        [v.x, v.y]
    }
}

impl<T: Real> Vec2<T> {
    #[inline]
    pub fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec2::new(T::zero(), T::zero())
    }

    /// Unit vector at angle `theta` (radians, counter-clockwise from +x).
    #[inline]
    pub fn from_angle(theta: T) -> Self {
        Vec2::new(theta.cos(), theta.sin())
    }

    #[inline]
    pub fn dot(self, o: Self) -> T {
        self.x * o.x + self.y * o.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, o: Self) -> T {
        self.x * o.y - self.y * o.x
    }

    #[inline]
    pub fn norm_sq(self) -> T {
        self.dot(self)
    }

    #[inline]
    pub fn norm(self) -> T {
        self.x.hypot(self.y)
    }

    #[inline]
    pub fn dist(self, o: Self) -> T {
        (self - o).norm()
    }

    #[inline]
    pub fn dist_sq(self, o: Self) -> T {
        (self - o).norm_sq()
    }

    /// Unit vector in the same direction, or zero for a zero vector.
    #[inline]
    pub fn normalized(self) -> Self {
        let n = self.norm();
        if n > T::zero() {
            self / n
        } else {
            Vec2::zero()
        }
    }

    /// Counter-clockwise perpendicular.
    #[inline]
    pub fn perp(self) -> Self {
        Vec2::new(-self.y, self.x)
    }

    #[inline]
    pub fn angle(self) -> T {
        self.y.atan2(self.x)
    }

    /// Rescales to at most `max` length.
    #[inline]
    pub fn clamp_norm(self, max: T) -> Self {
        let n = self.norm();
        if n > max && n > T::zero() {
            self * (max / n)
        } else {
            self
        }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    #[inline]
    pub fn lerp(self, o: Self, u: T) -> Self {
        self + (o - self) * u
    }
}

impl<T: Real> Add for Vec2<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Vec2::new(self.x + o.x, self.y + o.y)
    }
}

impl<T: Real> AddAssign for Vec2<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> Sub for Vec2<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Vec2::new(self.x - o.x, self.y - o.y)
    }
}

impl<T: Real> SubAssign for Vec2<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> Mul<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn mul(self, k: T) -> Self {
        Vec2::new(self.x * k, self.y * k)
    }
}

impl<T: Real> Div<T> for Vec2<T> {
    type Output = Self;
    #[inline]
    fn div(self, k: T) -> Self {
        Vec2::new(self.x / k, self.y / k)
    }
}

impl<T: Real> Neg for Vec2<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Vec2::new(-self.x, -self.y)
    }
}

/// Closest point to `p` on segment `a`-`b`.
pub fn closest_on_segment<T: Real>(p: Vec2<T>, a: Vec2<T>, b: Vec2<T>) -> Vec2<T> {
    let ab = b - a;
    let len_sq = ab.norm_sq();
    if len_sq <= T::zero() {
        return a;
    }
    let u = ((p - a).dot(ab) / len_sq).max(T::zero()).min(T::one());
    a + ab * u
}

/// Parameter pair `(u, v)` where segments `p + u (q - p)` and `a + v (b - a)`
/// intersect, both in `[0, 1]`. Parallel segments yield `None`.
pub fn segment_intersection<T: Real>(
    p: Vec2<T>,
    q: Vec2<T>,
    a: Vec2<T>,
    b: Vec2<T>,
) -> Option<(T, T)> {
    let r = q - p;
    let s = b - a;
    let denom = r.cross(s);
    if denom.abs() <= T::epsilon() * (r.norm() * s.norm()).max(T::min_positive_value()) {
        return None;
    }
    let ap = a - p;
    let u = ap.cross(s) / denom;
    let v = ap.cross(r) / denom;
    if u >= T::zero() && u <= T::one() && v >= T::zero() && v <= T::one() {
        Some((u, v))
    } else {
        None
    }
}

fn orient<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>) -> T {
    (b - a).cross(c - a)
}

fn on_segment<T: Real>(a: Vec2<T>, b: Vec2<T>, p: Vec2<T>) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed-segment intersection test including collinear overlap.
pub fn segments_touch<T: Real>(a: Vec2<T>, b: Vec2<T>, c: Vec2<T>, d: Vec2<T>) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    let z = T::zero();
    if ((d1 > z && d2 < z) || (d1 < z && d2 > z)) && ((d3 > z && d4 < z) || (d3 < z && d4 > z)) {
        return true;
    }
    (d1 == z && on_segment(c, d, a))
        || (d2 == z && on_segment(c, d, b))
        || (d3 == z && on_segment(a, b, c))
        || (d4 == z && on_segment(a, b, d))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Polygon<T: Copy> {
    pub vertices: Vec<Vec2<T>>,
}

impl<T: Real> Polygon<T> {
    pub fn new(vertices: Vec<Vec2<T>>) -> Self {
        Polygon { vertices }
    }

    /// Axis-aligned rectangle `[x0, x1] x [y0, y1]`, counter-clockwise.
    pub fn rect(x0: T, y0: T, x1: T, y1: T) -> Self {
        Polygon::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn edges(&self) -> impl Iterator<Item = (Vec2<T>, Vec2<T>)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area, positive for counter-clockwise rings.
    pub fn signed_area(&self) -> T {
        let half = T::lit(0.5);
        self.edges().map(|(a, b)| a.cross(b)).sum::<T>() * half
    }

    pub fn area(&self) -> T {
        self.signed_area().abs()
    }

    pub fn centroid(&self) -> Vec2<T> {
        let a = self.signed_area();
        if a.abs() <= T::epsilon() {
            let n = T::from_usize(self.vertices.len().max(1)).unwrap();
            let sum = self.vertices.iter().fold(Vec2::zero(), |acc, &v| acc + v);
            return sum / n;
        }
        let mut c = Vec2::zero();
        for (p, q) in self.edges() {
            let w = p.cross(q);
            c += (p + q) * w;
        }
        c / (T::lit(6.0) * a)
    }

    /// Even-odd containment; points on the boundary may land on either side.
    pub fn contains(&self, p: Vec2<T>) -> bool {
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    /// Closest point on the boundary ring.
    pub fn closest_boundary_point(&self, p: Vec2<T>) -> Vec2<T> {
        let mut best = self.vertices[0];
        let mut best_d = T::infinity();
        for (a, b) in self.edges() {
            let c = closest_on_segment(p, a, b);
            let d = c.dist_sq(p);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn boundary_distance(&self, p: Vec2<T>) -> T {
        self.closest_boundary_point(p).dist(p)
    }

    /// True when the ring has at least three vertices, non-zero area and no
    /// two non-adjacent edges touch.
    pub fn is_simple(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 || self.area() <= T::epsilon() {
            return false;
        }
        for i in 0..n {
            let (a, b) = (self.vertices[i], self.vertices[(i + 1) % n]);
            if a == b {
                return false;
            }
            for j in (i + 1)..n {
                let adjacent = j == i + 1 || (i == 0 && j == n - 1);
                if adjacent {
                    continue;
                }
                let (c, d) = (self.vertices[j], self.vertices[(j + 1) % n]);
                if segments_touch(a, b, c, d) {
                    return false;
                }
            }
        }
        true
    }

    pub fn is_convex(&self) -> bool {
        let n = self.vertices.len();
        if n < 3 {
            return false;
        }
        let mut sign = T::zero();
        for i in 0..n {
            let o = orient(self.vertices[i], self.vertices[(i + 1) % n], self.vertices[(i + 2) % n]);
            if o != T::zero() {
                if sign == T::zero() {
                    sign = o.signum();
                } else if o.signum() != sign {
                    return false;
                }
            }
        }
        true
    }

    /// Copy with counter-clockwise orientation.
    pub fn to_ccw(&self) -> Self {
        let mut p = self.clone();
        if p.signed_area() < T::zero() {
            p.vertices.reverse();
        }
        p
    }

    /// Sutherland-Hodgman clip of `self` against a convex `clip` polygon.
    /// Returns `None` when the intersection has no area.
    pub fn clip_convex(&self, clip: &Polygon<T>) -> Option<Polygon<T>> {
        let clip = clip.to_ccw();
        let mut out = self.vertices.clone();
        for (a, b) in clip.edges() {
            if out.is_empty() {
                break;
            }
            let input = std::mem::take(&mut out);
            let inside = |p: Vec2<T>| orient(a, b, p) >= T::zero();
            let m = input.len();
            for i in 0..m {
                let cur = input[i];
                let prev = input[(i + m - 1) % m];
                let (ci, pi) = (inside(cur), inside(prev));
                if ci != pi {
                    let d = cur - prev;
                    let denom = (b - a).cross(d);
                    if denom != T::zero() {
                        let u = (b - a).cross(a - prev) / denom;
                        out.push(prev + d * u);
                    }
                }
                if ci {
                    out.push(cur);
                }
            }
        }
        out.dedup_by(|p, q| p.dist_sq(*q) <= T::epsilon());
        let poly = Polygon::new(out);
        if poly.len() >= 3 && poly.area() > T::lit(1e-9) {
            Some(poly)
        } else {
            None
        }
    }

    /// Andrew's monotone-chain hull of a point cloud, counter-clockwise.
    pub fn convex_hull(points: &[Vec2<T>]) -> Polygon<T> {
        let mut pts: Vec<Vec2<T>> = points.to_vec();
        pts.sort_by(|a, b| {
            a.x.partial_cmp(&b.x)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.y.partial_cmp(&b.y).unwrap_or(std::cmp::Ordering::Equal))
        });
        pts.dedup();
        if pts.len() < 3 {
            return Polygon::new(pts);
        }
        let mut lower: Vec<Vec2<T>> = Vec::new();
        for &p in &pts {
            while lower.len() >= 2 && orient(lower[lower.len() - 2], lower[lower.len() - 1], p) <= T::zero() {
                lower.pop();
            }
            lower.push(p);
        }
        let mut upper: Vec<Vec2<T>> = Vec::new();
        for &p in pts.iter().rev() {
            while upper.len() >= 2 && orient(upper[upper.len() - 2], upper[upper.len() - 1], p) <= T::zero() {
                upper.pop();
            }
            upper.push(p);
        }
        lower.pop();
        upper.pop();
        lower.extend(upper);
        Polygon::new(lower)
    }

    /// Ray `origin + t * dir` (t >= 0) against the polygon: the first
    /// interval `(t_in, t_out)` spent inside. `t_out` is infinite when the
    /// ray never leaves. A zero direction yields `(0, inf)` for an interior
    /// origin and `None` otherwise.
    pub fn ray_interval(&self, origin: Vec2<T>, dir: Vec2<T>) -> Option<(T, T)> {
        let inside = self.contains(origin);
        if dir.norm_sq() <= T::zero() {
            return if inside { Some((T::zero(), T::infinity())) } else { None };
        }
        // Long finite probe; callers work at street scale.
        let reach = T::lit(1e6) / dir.norm();
        let far = origin + dir * reach;
        let mut hits: Vec<T> = self
            .edges()
            .filter_map(|(a, b)| segment_intersection(origin, far, a, b).map(|(u, _)| u * reach))
            .collect();
        hits.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        hits.dedup_by(|a, b| (*a - *b).abs() <= T::lit(1e-12));
        if inside {
            let exit = hits.into_iter().find(|&t| t > T::zero()).unwrap_or(T::infinity());
            Some((T::zero(), exit))
        } else {
            let mut it = hits.into_iter();
            let t_in = it.next()?;
            let t_out = it.next().unwrap_or(T::infinity());
            Some((t_in, t_out))
        }
    }

    pub fn bounding_box(&self) -> (Vec2<T>, Vec2<T>) {
        let mut lo = Vec2::new(T::infinity(), T::infinity());
        let mut hi = Vec2::new(T::neg_infinity(), T::neg_infinity());
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }
}

/// Polyline with arc-length parametrisation.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline<T: Copy> {
    points: Vec<Vec2<T>>,
    cumulative: Vec<T>,
}

impl<T: Real> Polyline<T> {
    pub fn new(points: Vec<Vec2<T>>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = T::zero();
        for (i, p) in points.iter().enumerate() {
            if i > 0 {
                acc = acc + p.dist(points[i - 1]);
            }
            cumulative.push(acc);
        }
        Polyline { points, cumulative }
    }

    pub fn points(&self) -> &[Vec2<T>] {
        &self.points
    }

    pub fn length(&self) -> T {
        self.cumulative.last().copied().unwrap_or(T::zero())
    }

    fn segment_at(&self, s: T) -> usize {
        let n = self.points.len();
        if n < 2 {
            return 0;
        }
        match self.cumulative.binary_search_by(|c| c.partial_cmp(&s).unwrap_or(std::cmp::Ordering::Less)) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        }
    }

    /// Point and unit tangent at arc length `s`; extrapolates linearly
    /// beyond either end.
    pub fn point_at(&self, s: T) -> (Vec2<T>, Vec2<T>) {
        if self.points.len() < 2 {
            let p = self.points.first().copied().unwrap_or_else(Vec2::zero);
            return (p, Vec2::new(T::one(), T::zero()));
        }
        let i = self.segment_at(s);
        let a = self.points[i];
        let b = self.points[i + 1];
        let tangent = (b - a).normalized();
        (a + tangent * (s - self.cumulative[i]), tangent)
    }

    /// Arc length of the closest point on the polyline to `p`.
    pub fn project(&self, p: Vec2<T>) -> T {
        let mut best_s = T::zero();
        let mut best_d = T::infinity();
        for i in 0..self.points.len().saturating_sub(1) {
            let c = closest_on_segment(p, self.points[i], self.points[i + 1]);
            let d = c.dist_sq(p);
            if d < best_d {
                best_d = d;
                best_s = self.cumulative[i] + c.dist(self.points[i]);
            }
        }
        best_s
    }

    /// Arc-length span `(first entry, last exit)` the polyline spends inside
    /// `poly`, or `None` if it never enters.
    pub fn span_inside(&self, poly: &Polygon<T>) -> Option<(T, T)> {
        let mut params: Vec<T> = Vec::new();
        for i in 0..self.points.len().saturating_sub(1) {
            let (a, b) = (self.points[i], self.points[i + 1]);
            let seg_len = self.cumulative[i + 1] - self.cumulative[i];
            for (c, d) in poly.edges() {
                if let Some((u, _)) = segment_intersection(a, b, c, d) {
                    params.push(self.cumulative[i] + u * seg_len);
                }
            }
        }
        if self.points.first().map_or(false, |&p| poly.contains(p)) {
            params.push(T::zero());
        }
        if self.points.last().map_or(false, |&p| poly.contains(p)) {
            params.push(self.length());
        }
        if params.len() < 2 {
            return None;
        }
        let lo = params.iter().copied().fold(T::infinity(), T::min);
        let hi = params.iter().copied().fold(T::neg_infinity(), T::max);
        if hi > lo {
            Some((lo, hi))
        } else {
            None
        }
    }
}

/// Rectangle of given length and width centred at `center`, long axis
/// along `heading`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OrientedRect<T: Copy> {
    pub center: Vec2<T>,
    pub half_length: T,
    pub half_width: T,
    pub heading: T,
}

impl<T: Real> OrientedRect<T> {
    pub fn new(center: Vec2<T>, length: T, width: T, heading: T) -> Self {
        let half = T::lit(0.5);
        OrientedRect { center, half_length: length * half, half_width: width * half, heading }
    }

    fn axes(&self) -> (Vec2<T>, Vec2<T>) {
        let u = Vec2::from_angle(self.heading);
        (u, u.perp())
    }

    pub fn corners(&self) -> [Vec2<T>; 4] {
        let (u, v) = self.axes();
        let (l, w) = (u * self.half_length, v * self.half_width);
        [self.center - l - w, self.center + l - w, self.center + l + w, self.center - l + w]
    }

    pub fn to_polygon(&self) -> Polygon<T> {
        Polygon::new(self.corners().to_vec())
    }

    /// Closest point of the (solid) rectangle to `p`; `p` itself when inside.
    pub fn closest_point(&self, p: Vec2<T>) -> Vec2<T> {
        let (u, v) = self.axes();
        let d = p - self.center;
        let a = d.dot(u).max(-self.half_length).min(self.half_length);
        let b = d.dot(v).max(-self.half_width).min(self.half_width);
        self.center + u * a + v * b
    }

    pub fn contains(&self, p: Vec2<T>) -> bool {
        let (u, v) = self.axes();
        let d = p - self.center;
        d.dot(u).abs() <= self.half_length && d.dot(v).abs() <= self.half_width
    }

    /// Distance from `p` to the nearest boundary point, with the outward
    /// unit normal pointing from the rectangle toward `p`. Inside points
    /// report a negative distance.
    pub fn signed_distance(&self, p: Vec2<T>) -> (T, Vec2<T>) {
        let (u, v) = self.axes();
        let d = p - self.center;
        let (a, b) = (d.dot(u), d.dot(v));
        if a.abs() <= self.half_length && b.abs() <= self.half_width {
            let dx = self.half_length - a.abs();
            let dy = self.half_width - b.abs();
            if dx < dy {
                (-dx, u * a.signum())
            } else {
                (-dy, v * b.signum())
            }
        } else {
            let c = self.closest_point(p);
            let off = p - c;
            (off.norm(), off.normalized())
        }
    }

    pub fn overlaps_disc(&self, center: Vec2<T>, radius: T) -> bool {
        self.closest_point(center).dist_sq(center) <= radius * radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type V = Vec2<f64>;

    #[test]
    fn area_and_containment() {
        let sq = Polygon::rect(0.0, 0.0, 2.0, 3.0);
        assert_eq!(sq.signed_area(), 6.0);
        assert!(sq.contains(V::new(1.0, 1.0)));
        assert!(!sq.contains(V::new(3.0, 1.0)));
        let c = sq.centroid();
        assert!((c.x - 1.0).abs() < 1e-12 && (c.y - 1.5).abs() < 1e-12);
    }

    #[test]
    fn bowtie_is_not_simple() {
        let bow = Polygon::new(vec![V::new(0.0, 0.0), V::new(1.0, 1.0), V::new(1.0, 0.0), V::new(0.0, 1.0)]);
        assert!(!bow.is_simple());
        assert!(Polygon::rect(0.0, 0.0, 1.0, 1.0).is_simple());
    }

    #[test]
    fn clip_square_by_square() {
        let a = Polygon::<f64>::rect(0.0, 0.0, 2.0, 2.0);
        let b = Polygon::rect(1.0, 1.0, 3.0, 3.0);
        let c = a.clip_convex(&b).unwrap();
        assert!((c.area() - 1.0).abs() < 1e-12);
        assert!(a.clip_convex(&Polygon::rect(5.0, 5.0, 6.0, 6.0)).is_none());
        // Clip polygon orientation does not matter.
        let mut cw = b.clone();
        cw.vertices.reverse();
        assert!((a.clip_convex(&cw).unwrap().area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_through_square() {
        let sq = Polygon::rect(0.0, 0.0, 1.0, 1.0);
        let (a, b) = sq.ray_interval(V::new(-1.0, 0.5), V::new(2.0, 0.0)).unwrap();
        assert!((a - 0.5).abs() < 1e-9 && (b - 1.0).abs() < 1e-9);
        let (a, b) = sq.ray_interval(V::new(0.5, 0.5), V::new(0.0, 1.0)).unwrap();
        assert_eq!(a, 0.0);
        assert!((b - 0.5).abs() < 1e-9);
        assert!(sq.ray_interval(V::new(2.0, 0.5), V::new(1.0, 0.0)).is_none());
        assert!(sq.ray_interval(V::new(2.0, 0.5), V::zero()).is_none());
        assert_eq!(sq.ray_interval(V::new(0.5, 0.5), V::zero()), Some((0.0, f64::INFINITY)));
    }

    #[test]
    fn polyline_arc_length() {
        let pl = Polyline::new(vec![V::new(0.0, 0.0), V::new(3.0, 0.0), V::new(3.0, 4.0)]);
        assert_eq!(pl.length(), 7.0);
        let (p, t) = pl.point_at(5.0);
        assert!((p.x - 3.0).abs() < 1e-12 && (p.y - 2.0).abs() < 1e-12);
        assert!((t.y - 1.0).abs() < 1e-12);
        assert!((pl.project(V::new(4.0, 1.0)) - 4.0).abs() < 1e-12);
        let span = pl.span_inside(&Polygon::rect(1.0, -1.0, 2.0, 1.0)).unwrap();
        assert!((span.0 - 1.0).abs() < 1e-12 && (span.1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rect_distance_and_overlap() {
        let r = OrientedRect::new(V::zero(), 4.0, 2.0, 0.0);
        let (d, n) = r.signed_distance(V::new(4.0, 0.0));
        assert!((d - 2.0).abs() < 1e-12 && (n.x - 1.0).abs() < 1e-12);
        let (d, _) = r.signed_distance(V::new(1.5, 0.0));
        assert!((d + 0.5).abs() < 1e-12);
        assert!(r.overlaps_disc(V::new(2.2, 0.0), 0.25));
        assert!(!r.overlaps_disc(V::new(2.3, 0.0), 0.25));
        let rotated = OrientedRect::new(V::zero(), 4.0, 2.0, std::f64::consts::FRAC_PI_2);
        assert!(rotated.contains(V::new(0.0, 1.9)));
        assert!(!rotated.contains(V::new(1.9, 0.0)));
    }

    #[test]
    fn hull_of_square_with_interior_point() {
        let pts = [V::new(0.0, 0.0), V::new(1.0, 0.0), V::new(1.0, 1.0), V::new(0.0, 1.0), V::new(0.5, 0.5)];
        let h = Polygon::convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((h.area() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generic_over_f32() {
        let sq: Polygon<f32> = Polygon::rect(0.0, 0.0, 1.0, 1.0);
        assert!((sq.area() - 1.0).abs() < 1e-6);
    }
}
