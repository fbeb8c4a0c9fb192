//! Corridors and follow-the-leader placement for back-drivable joints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Vec2;

use super::log::wrap_angle;

/// Cross-section of the robot including screw blades (m).
pub const BODY_DIAMETER: f64 = 0.15;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorridorSpec {
    pub centerline: Vec<[f64; 2]>,
    pub width: f64,
    /// Slope of the inclined section (deg).
    #[serde(default)]
    pub incline_deg: f64,
    /// Arc length along the centerline where the incline starts.
    #[serde(default)]
    pub incline_start: f64,
}

impl CorridorSpec {
    /// Straight entry, an S-shaped zigzag, then a 15 deg ramp; 0.22 m wide.
    pub fn zigzag_with_incline() -> Self {
        let mut b = PathBuilder::new();
        b.straight(1.6);
        b.arc(0.6, 35.0);
        b.straight(0.3);
        b.arc(0.6, -70.0);
        b.straight(0.3);
        b.arc(0.6, 35.0);
        b.straight(0.4);
        let incline_start = b.length;
        b.straight(1.0);
        Self {
            centerline: b.points.iter().map(|p| [p.x, p.y]).collect(),
            width: 0.22,
            incline_deg: 15.0,
            incline_start,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.centerline.len() < 2 {
            return Err(Error::config("corridor.centerline", "needs at least 2 points"));
        }
        if !(self.width >= BODY_DIAMETER) {
            return Err(Error::config(
                "corridor.width",
                format!("{} m is narrower than the {BODY_DIAMETER} m body", self.width),
            ));
        }
        if !(0.0..90.0).contains(&self.incline_deg.abs()) {
            return Err(Error::config("corridor.incline_deg", "must be in (-90, 90)"));
        }
        Ok(())
    }
}

struct PathBuilder {
    points: Vec<Vec2>,
    heading: f64,
    length: f64,
}

impl PathBuilder {
    fn new() -> Self {
        Self {
            points: vec![Vec2::zeros()],
            heading: 0.0,
            length: 0.0,
        }
    }

    fn last(&self) -> Vec2 {
        *self.points.last().unwrap()
    }

    fn straight(&mut self, len: f64) {
        let p = self.last() + len * Vec2::new(self.heading.cos(), self.heading.sin());
        self.points.push(p);
        self.length += len;
    }

    fn arc(&mut self, radius: f64, angle_deg: f64) {
        let angle = angle_deg.to_radians();
        let steps = ((radius * angle.abs()) / 0.01).ceil().max(1.0) as usize;
        let dh = angle / steps as f64;
        let chord = 2.0 * radius * (dh.abs() / 2.0).sin();
        for _ in 0..steps {
            let mid = self.heading + dh / 2.0;
            let p = self.last() + chord * Vec2::new(mid.cos(), mid.sin());
            self.points.push(p);
            self.heading += dh;
            self.length += chord;
        }
    }
}

/// Centerline polyline with arc-length lookups.
#[derive(Debug, Clone)]
pub struct CorridorTrack {
    spec: CorridorSpec,
    points: Vec<Vec2>,
    arc: Vec<f64>,
}

impl CorridorTrack {
    pub fn new(spec: CorridorSpec) -> Result<Self> {
        spec.validate()?;
        let points: Vec<Vec2> = spec.centerline.iter().map(|p| Vec2::new(p[0], p[1])).collect();
        let mut arc = vec![0.0];
        for w in points.windows(2) {
            let d = (w[1] - w[0]).norm();
            if d <= 0.0 {
                return Err(Error::config("corridor.centerline", "repeated point"));
            }
            arc.push(arc.last().unwrap() + d);
        }
        Ok(Self { spec, points, arc })
    }

    pub fn spec(&self) -> &CorridorSpec {
        &self.spec
    }

    pub fn length(&self) -> f64 {
        *self.arc.last().unwrap()
    }

    /// Allowed distance of the body axis from the centerline.
    pub fn clearance(&self) -> f64 {
        (self.spec.width - BODY_DIAMETER) / 2.0
    }

    fn segment_index(&self, s: f64) -> usize {
        match self.arc.binary_search_by(|a| a.total_cmp(&s)) {
            Ok(k) => k.min(self.points.len() - 2),
            Err(k) => k.saturating_sub(1).min(self.points.len() - 2),
        }
    }

    /// Point at arc length `s`; extends linearly beyond either end.
    pub fn point_at(&self, s: f64) -> Vec2 {
        let k = self.segment_index(s);
        let dir = (self.points[k + 1] - self.points[k]).normalize();
        self.points[k] + (s - self.arc[k]) * dir
    }

    pub fn tangent_at(&self, s: f64) -> Vec2 {
        let k = self.segment_index(s);
        (self.points[k + 1] - self.points[k]).normalize()
    }

    /// Arc length of the closest centerline point and the distance to it.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        self.project_between(p, 0, self.points.len() - 1)
    }

    /// Like [`project`](Self::project), restricted to centerline pieces
    /// overlapping the arc-length window `[s_lo, s_hi]`.
    pub fn project_near(&self, p: Vec2, s_lo: f64, s_hi: f64) -> (f64, f64) {
        let lo = self.segment_index(s_lo);
        let hi = self.segment_index(s_hi) + 1;
        self.project_between(p, lo, hi)
    }

    fn project_between(&self, p: Vec2, lo: usize, hi: usize) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for k in lo..hi {
            let a = self.points[k];
            let ab = self.points[k + 1] - a;
            let t = ((p - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
            let d = (a + t * ab - p).norm();
            if d < best.1 {
                best = (self.arc[k] + t * ab.norm(), d);
            }
        }
        best
    }

    /// Speed multiplier for a body at arc length `s`.
    pub fn incline_factor(&self, s: f64) -> f64 {
        if s >= self.spec.incline_start {
            self.spec.incline_deg.to_radians().cos()
        } else {
            1.0
        }
    }

    /// Walks back from arc length `s_from` to the first point at straight-line
    /// distance `chord` from `anchor`.
    fn point_behind(&self, anchor: Vec2, s_from: f64, chord: f64) -> (f64, Vec2) {
        let k0 = self.segment_index(s_from);
        // candidate segment ends, walking backward
        let mut hi = s_from;
        for k in (0..=k0).rev() {
            let lo = self.arc[k];
            let p_lo = self.point_at(lo);
            if (p_lo - anchor).norm() >= chord || k == 0 {
                // root lies on [lo, hi] (or before the start when k == 0)
                let a = self.point_at(hi);
                let dir = self.tangent_at(if k == 0 { lo } else { (lo + hi) / 2.0 });
                // |a - t dir - anchor| = chord, t >= 0
                let q = a - anchor;
                let b = -q.dot(&dir);
                let c = q.norm_squared() - chord * chord;
                let disc = (b * b - c).max(0.0);
                let t = -b + disc.sqrt();
                let s = hi - t;
                return (s, self.point_at(s));
            }
            hi = lo;
        }
        unreachable!("loop returns at k == 0")
    }

    /// Joint positions `J_0` (head tip) through `J_n` (tail end) for a chain
    /// whose head tip sits at arc length `s_tip`, each link a chord of
    /// length `2l`.
    pub fn place_chain(&self, s_tip: f64, n_segments: usize, half_link: f64) -> Vec<(f64, Vec2)> {
        let mut out = vec![(s_tip, self.point_at(s_tip))];
        for _ in 0..n_segments {
            let (s, p) = *out.last().unwrap();
            out.push(self.point_behind(p, s, 2.0 * half_link));
        }
        out
    }
}

/// Chain pose implied by a follow-the-leader placement.
#[derive(Debug, Clone, PartialEq)]
pub struct ConformedPose {
    pub centers: Vec<Vec2>,
    /// World heading of each segment.
    pub headings: Vec<f64>,
    /// Joint deflections, head joint first.
    pub deflections: Vec<f64>,
    pub center_arcs: Vec<f64>,
}

pub fn conform(track: &CorridorTrack, s_tip: f64, n_segments: usize, half_link: f64) -> ConformedPose {
    let joints = track.place_chain(s_tip, n_segments, half_link);
    let mut centers = Vec::with_capacity(n_segments);
    let mut headings = Vec::with_capacity(n_segments);
    let mut center_arcs = Vec::with_capacity(n_segments);
    for w in joints.windows(2) {
        let (front_s, front) = w[0];
        let (back_s, back) = w[1];
        centers.push((front + back) / 2.0);
        let d = front - back;
        headings.push(d.y.atan2(d.x));
        center_arcs.push((front_s + back_s) / 2.0);
    }
    let deflections = headings
        .windows(2)
        .map(|h| wrap_angle(h[0] - h[1]))
        .collect();
    ConformedPose {
        centers,
        headings,
        deflections,
        center_arcs,
    }
}

/// Number of segments whose axis leaves the allowed band around the
/// centerline.
pub fn wall_violations(track: &CorridorTrack, pose: &ConformedPose, half_link: f64) -> usize {
    let limit = track.clearance() + 1e-9;
    let window = 2.0 * half_link + track.spec().width;
    pose.centers
        .iter()
        .zip(&pose.headings)
        .zip(&pose.center_arcs)
        .filter(|((c, h), s)| {
            let axis = Vec2::new(h.cos(), h.sin());
            (0..=10).any(|k| {
                let t = -1.0 + 0.2 * k as f64;
                let p = *c + t * half_link * axis;
                // the local search only over-estimates the distance
                track.project_near(p, *s - window, *s + window).1 > limit
                    && track.project(p).1 > limit
            })
        })
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn straight_track() -> CorridorTrack {
        CorridorTrack::new(CorridorSpec {
            centerline: vec![[0.0, 0.0], [3.0, 0.0]],
            width: 0.22,
            incline_deg: 0.0,
            incline_start: 0.0,
        })
        .unwrap()
    }

    #[test]
    fn straight_placement() {
        let t = straight_track();
        let pose = conform(&t, 2.0, 4, 0.182);
        assert_abs_diff_eq!(pose.centers[0].x, 2.0 - 0.182, epsilon = 1e-12);
        assert_abs_diff_eq!(pose.centers[3].x, 2.0 - 7.0 * 0.182, epsilon = 1e-12);
        assert!(pose.deflections.iter().all(|d| d.abs() < 1e-12));
        assert_eq!(wall_violations(&t, &pose, 0.182), 0);
    }

    #[test]
    fn placement_extends_behind_start() {
        let t = straight_track();
        let pose = conform(&t, 0.5, 4, 0.182);
        assert_abs_diff_eq!(pose.centers[3].x, 0.5 - 7.0 * 0.182, epsilon = 1e-12);
    }

    #[test]
    fn links_are_rigid_on_curves() {
        let t = CorridorTrack::new(CorridorSpec::zigzag_with_incline()).unwrap();
        for s in [1.7, 2.0, 2.4, 2.9, 3.3] {
            let joints = t.place_chain(s, 4, 0.182);
            for w in joints.windows(2) {
                assert_abs_diff_eq!((w[0].1 - w[1].1).norm(), 0.364, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn narrow_corridor_rejected() {
        let spec = CorridorSpec {
            width: 0.1,
            ..CorridorSpec::zigzag_with_incline()
        };
        assert!(CorridorTrack::new(spec).is_err());
    }

    #[test]
    fn projection_distance() {
        let t = straight_track();
        let (s, d) = t.project(Vec2::new(1.0, 0.05));
        assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(d, 0.05, epsilon = 1e-12);
    }
}
