//! Continuous 2D environment: bounded free space, obstacles, collision and
//! line-of-sight queries, and the straight-line motion primitive.
//!
//! The inspector is a disc of diameter `r_i`. Obstacles are closed sets; a
//! disc touching an obstacle boundary is still considered free. Outer walls
//! bound motion but never block line of sight between interior points.

use std::f64::consts::TAU;
use std::ops::{Add, Mul, Sub};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack used by collision predicates so that poses placed exactly at contact
/// survive floating-point rounding.
pub const GEOM_EPS: f64 = 1e-9;

/// Distance a blocked motion stops short of the contact point.
const CONTACT_BACKOFF: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn from_angle(theta: f64) -> Self {
        Self::new(theta.cos(), theta.sin())
    }

    pub fn dot(self, other: Vec2) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Normalizes an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    // rem_euclid can return TAU itself for tiny negative inputs
    if t >= TAU {
        0.0
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: Vec2,
    pub heading: f64,
}

impl Pose {
    pub fn new(position: Vec2, heading: f64) -> Self {
        Self {
            position,
            heading: normalize_angle(heading),
        }
    }

    pub fn rotated(self, dtheta: f64) -> Self {
        Self::new(self.position, self.heading + dtheta)
    }
}

/// Obstacle shapes. Serialized with a `kind` tag (`rect` or `circle`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    Rect { min: Vec2, max: Vec2 },
    Circle { center: Vec2, radius: f64 },
}

impl Obstacle {
    pub fn rect(min: (f64, f64), max: (f64, f64)) -> Self {
        Obstacle::Rect {
            min: Vec2::new(min.0, min.1),
            max: Vec2::new(max.0, max.1),
        }
    }

    pub fn circle(center: (f64, f64), radius: f64) -> Self {
        Obstacle::Circle {
            center: Vec2::new(center.0, center.1),
            radius,
        }
    }

    /// Euclidean distance from `p` to the shape (zero inside).
    pub fn distance(&self, p: Vec2) -> f64 {
        match *self {
            Obstacle::Rect { min, max } => {
                let dx = (min.x - p.x).max(0.0).max(p.x - max.x);
                let dy = (min.y - p.y).max(0.0).max(p.y - max.y);
                dx.hypot(dy)
            }
            Obstacle::Circle { center, radius } => (p.distance(center) - radius).max(0.0),
        }
    }

    /// True when the shape's interior overlaps the closed box `[lo, hi]` in a
    /// set of positive area (shared edges and corners do not count).
    pub fn overlaps_box(&self, lo: Vec2, hi: Vec2) -> bool {
        match *self {
            Obstacle::Rect { min, max } => {
                min.x.max(lo.x) < max.x.min(hi.x) && min.y.max(lo.y) < max.y.min(hi.y)
            }
            Obstacle::Circle { center, radius } => {
                let q = Vec2::new(center.x.clamp(lo.x, hi.x), center.y.clamp(lo.y, hi.y));
                q.distance(center) < radius
            }
        }
    }

    /// True when the open segment `(a, b)` passes through the interior.
    pub fn blocks_segment(&self, a: Vec2, b: Vec2) -> bool {
        match *self {
            Obstacle::Rect { min, max } => {
                let d = b - a;
                let mut t0 = 0.0_f64;
                let mut t1 = 1.0_f64;
                for (p, dp, lo, hi) in [(a.x, d.x, min.x, max.x), (a.y, d.y, min.y, max.y)] {
                    if dp == 0.0 {
                        if !(lo < p && p < hi) {
                            return false;
                        }
                    } else {
                        let ta = (lo - p) / dp;
                        let tb = (hi - p) / dp;
                        t0 = t0.max(ta.min(tb));
                        t1 = t1.min(ta.max(tb));
                    }
                }
                t0 < t1
            }
            Obstacle::Circle { center, radius } => segment_point_distance(a, b, center) < radius,
        }
    }

    /// First `t >= 0` at which a disc of radius `r` moving from `p` along the
    /// unit vector `dir` touches the shape, if ever. Assumes the disc starts
    /// clear of the shape by more than [`GEOM_EPS`].
    fn time_of_impact(&self, p: Vec2, dir: Vec2, r: f64) -> Option<f64> {
        match *self {
            Obstacle::Circle { center, radius } => ray_circle_entry(p, dir, center, radius + r),
            Obstacle::Rect { min, max } => {
                // Minkowski sum of the box and the disc: two crossing boxes and
                // four corner circles.
                let wide = ray_box_entry(p, dir, Vec2::new(min.x - r, min.y), Vec2::new(max.x + r, max.y));
                let tall = ray_box_entry(p, dir, Vec2::new(min.x, min.y - r), Vec2::new(max.x, max.y + r));
                let corners = [
                    min,
                    max,
                    Vec2::new(min.x, max.y),
                    Vec2::new(max.x, min.y),
                ]
                .into_iter()
                .filter_map(|c| ray_circle_entry(p, dir, c, r));
                [wide, tall].into_iter().flatten().chain(corners).reduce(f64::min)
            }
        }
    }

    fn within(&self, l_x: f64, l_y: f64) -> bool {
        match *self {
            Obstacle::Rect { min, max } => min.x >= 0.0 && min.y >= 0.0 && max.x <= l_x && max.y <= l_y,
            Obstacle::Circle { center, radius } => {
                center.x - radius >= 0.0
                    && center.y - radius >= 0.0
                    && center.x + radius <= l_x
                    && center.y + radius <= l_y
            }
        }
    }
}

fn segment_point_distance(a: Vec2, b: Vec2, p: Vec2) -> f64 {
    let d = b - a;
    let len2 = d.dot(d);
    if len2 == 0.0 {
        return a.distance(p);
    }
    let t = ((p - a).dot(d) / len2).clamp(0.0, 1.0);
    (a + d * t).distance(p)
}

fn ray_circle_entry(p: Vec2, dir: Vec2, center: Vec2, radius: f64) -> Option<f64> {
    let m = p - center;
    let b = m.dot(dir);
    let c = m.dot(m) - radius * radius;
    if c > 0.0 && b >= 0.0 {
        return None;
    }
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    Some((-b - disc.sqrt()).max(0.0))
}

fn ray_box_entry(p: Vec2, dir: Vec2, lo: Vec2, hi: Vec2) -> Option<f64> {
    let mut t_enter = f64::NEG_INFINITY;
    let mut t_exit = f64::INFINITY;
    for (pc, dc, l, h) in [(p.x, dir.x, lo.x, hi.x), (p.y, dir.y, lo.y, hi.y)] {
        if dc == 0.0 {
            if pc < l || pc > h {
                return None;
            }
        } else {
            let ta = (l - pc) / dc;
            let tb = (h - pc) / dc;
            t_enter = t_enter.max(ta.min(tb));
            t_exit = t_exit.min(ta.max(tb));
        }
    }
    if t_enter > t_exit || t_exit < 0.0 {
        None
    } else {
        Some(t_enter.max(0.0))
    }
}

/// Point emitter. A strength of zero is equivalent to no source at all.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    #[serde(flatten)]
    pub position: Vec2,
    /// Expected counts·m² per measurement interval.
    pub strength: f64,
}

/// Continuous environment description, loaded from the map JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub l_x: f64,
    pub l_y: f64,
    /// Expected background counts per measurement interval.
    pub background: f64,
    #[serde(default)]
    pub obstacles: Vec<Obstacle>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<SourceSpec>,
    /// Extra clearance kept around obstacles and walls during motion.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub inflation: f64,
}

fn is_zero(v: &f64) -> bool {
    *v == 0.0
}

/// Result of a single straight-line motion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelOutcome {
    pub end: Pose,
    pub traveled: f64,
    pub blocked: bool,
}

impl MapSpec {
    pub fn empty(l_x: f64, l_y: f64, background: f64) -> Self {
        Self {
            name: None,
            l_x,
            l_y,
            background,
            obstacles: Vec::new(),
            source: None,
            inflation: 0.0,
        }
    }

    pub fn with_obstacles(mut self, obstacles: Vec<Obstacle>) -> Self {
        self.obstacles = obstacles;
        self
    }

    pub fn with_source(mut self, source: Option<SourceSpec>) -> Self {
        self.source = source;
        self
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let map: MapSpec = serde_json::from_str(text)?;
        map.validate()?;
        Ok(map)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    /// Checks the structural invariants of the document.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidMap(msg));
        if !(self.l_x.is_finite() && self.l_x > 0.0 && self.l_y.is_finite() && self.l_y > 0.0) {
            return bad(format!("bounds must be positive, got {} x {}", self.l_x, self.l_y));
        }
        if !(self.background.is_finite() && self.background >= 0.0) {
            return bad(format!("background must be >= 0, got {}", self.background));
        }
        if !(self.inflation.is_finite() && self.inflation >= 0.0) {
            return bad(format!("inflation must be >= 0, got {}", self.inflation));
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            match *ob {
                Obstacle::Rect { min, max } => {
                    if !(min.is_finite() && max.is_finite() && min.x < max.x && min.y < max.y) {
                        return bad(format!("obstacle {i}: rect needs min < max"));
                    }
                }
                Obstacle::Circle { center, radius } => {
                    if !(center.is_finite() && radius.is_finite() && radius > 0.0) {
                        return bad(format!("obstacle {i}: circle needs radius > 0"));
                    }
                }
            }
            if !ob.within(self.l_x, self.l_y) {
                return bad(format!("obstacle {i} extends outside the map"));
            }
        }
        if let Some(src) = &self.source {
            if !(src.strength.is_finite() && src.strength >= 0.0) {
                return bad(format!("source strength must be >= 0, got {}", src.strength));
            }
            if !self.contains(src.position) {
                return bad("source lies outside the map".into());
            }
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.is_finite() && (0.0..=self.l_x).contains(&p.x) && (0.0..=self.l_y).contains(&p.y)
    }

    /// The source, if one is present with positive strength.
    pub fn active_source(&self) -> Option<&SourceSpec> {
        self.source.as_ref().filter(|s| s.strength > 0.0)
    }

    fn motion_radius(&self, r_i: f64) -> f64 {
        0.5 * r_i + self.inflation
    }

    /// True iff a disc of diameter `r_i` centered at `center` touches no
    /// obstacle interior and stays inside the outer walls.
    pub fn is_free(&self, center: Vec2, r_i: f64) -> bool {
        if !center.is_finite() {
            return false;
        }
        let r = self.motion_radius(r_i);
        let lo = r - GEOM_EPS;
        if center.x < lo || center.y < lo || center.x > self.l_x - lo || center.y > self.l_y - lo {
            return false;
        }
        self.obstacles.iter().all(|ob| ob.distance(center) >= lo)
    }

    /// True iff the open segment `(a, b)` crosses no obstacle interior.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        !self.obstacles.iter().any(|ob| ob.blocks_segment(a, b))
    }

    /// Moves straight along `start.heading` until `distance` is used up or the
    /// disc makes contact with an obstacle or wall. Contact is resolved
    /// exactly, so a blocked motion ends tangent to the obstacle.
    pub fn travel(&self, start: Pose, distance: f64, r_i: f64) -> Result<TravelOutcome> {
        if !self.is_free(start.position, r_i) {
            return Err(Error::StartInCollision);
        }
        if distance <= 0.0 {
            return Ok(TravelOutcome {
                end: start,
                traveled: 0.0,
                blocked: false,
            });
        }
        let t_hit = self.time_of_impact(start.position, start.heading, r_i);
        let (traveled, blocked) = if t_hit >= distance {
            (distance, false)
        } else {
            ((t_hit - CONTACT_BACKOFF).max(0.0), true)
        };
        let dir = Vec2::from_angle(start.heading);
        let end = Pose {
            position: start.position + dir * traveled,
            heading: start.heading,
        };
        debug_assert!(self.is_free(end.position, r_i), "travel ended in collision: {end:?}");
        Ok(TravelOutcome { end, traveled, blocked })
    }

    /// Distance along `heading` from `p` until the disc first touches
    /// something. Obstacles the disc is already touching only count when the
    /// motion heads into them.
    fn time_of_impact(&self, p: Vec2, heading: f64, r_i: f64) -> f64 {
        let r = self.motion_radius(r_i);
        let dir = Vec2::from_angle(heading);
        let mut t_hit = f64::INFINITY;

        for (pc, dc, hi) in [(p.x, dir.x, self.l_x), (p.y, dir.y, self.l_y)] {
            if dc > 0.0 {
                t_hit = t_hit.min((hi - r - pc) / dc);
            } else if dc < 0.0 {
                t_hit = t_hit.min((r - pc) / dc);
            }
        }
        t_hit = t_hit.max(0.0);

        for ob in &self.obstacles {
            let d0 = ob.distance(p);
            let t = if d0 <= r + GEOM_EPS {
                // in contact: blocked only if the next instant moves closer
                let probe = ob.distance(p + dir * 1e-7);
                if probe < d0 {
                    Some(0.0)
                } else {
                    None
                }
            } else {
                ob.time_of_impact(p, dir, r)
            };
            if let Some(t) = t {
                t_hit = t_hit.min(t);
            }
        }
        t_hit
    }

    /// Draws a collision-free center uniformly over the free placements by
    /// rejection sampling.
    pub fn sample_free_position<R: Rng + ?Sized>(&self, rng: &mut R, r_i: f64) -> Result<Vec2> {
        const MAX_ATTEMPTS: usize = 200_000;
        let r = self.motion_radius(r_i);
        if 2.0 * r >= self.l_x || 2.0 * r >= self.l_y {
            return Err(Error::NoFreeSpace);
        }
        for _ in 0..MAX_ATTEMPTS {
            let p = Vec2::new(rng.gen_range(r..self.l_x - r), rng.gen_range(r..self.l_y - r));
            if self.is_free(p, r_i) {
                return Ok(p);
            }
        }
        Err(Error::NoFreeSpace)
    }

    /// Draws a uniformly random collision-free pose.
    pub fn sample_free_pose<R: Rng + ?Sized>(&self, rng: &mut R, r_i: f64) -> Result<Pose> {
        let position = self.sample_free_position(rng, r_i)?;
        Ok(Pose::new(position, rng.gen_range(0.0..TAU)))
    }
}
