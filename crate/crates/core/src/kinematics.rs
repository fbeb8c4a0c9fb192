//! Planar forward kinematics of the screw-segment chain.
//!
//! Segments are numbered from the head (segment 1) to the tail. Joint `k`
//! connects segment `k` to segment `k + 1`. Joint angles use the convention
//! where `π` is a straight joint; the deflection of a joint is `π - θ`, and a
//! positive deflection bends the trailing segments toward `+y` of the head
//! frame.
//!
//! All positions are expressed in the head frame: origin at the head segment
//! center, `+x` along the head axis pointing forward.

use std::f64::consts::PI;

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;

/// Converts a joint angle (π = straight) to its deflection from straight.
#[inline]
pub fn deflection(theta: f64) -> f64 {
    PI - theta
}

/// Converts a deflection back to the π-is-straight joint angle.
#[inline]
pub fn angle_from_deflection(deflection: f64) -> f64 {
    PI - deflection
}

/// Rotates a planar vector counter-clockwise by `angle`.
#[inline]
pub fn rotate(v: Vec2, angle: f64) -> Vec2 {
    Rotation2::new(angle) * v
}

/// Thread chirality of a screw segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Handedness {
    Right,
    Left,
}

impl Handedness {
    pub fn sign(self) -> f64 {
        match self {
            Handedness::Right => 1.0,
            Handedness::Left => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Handedness::Right => Handedness::Left,
            Handedness::Left => Handedness::Right,
        }
    }
}

/// Static parameters of the robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainGeometry {
    pub n_segments: usize,
    /// Distance from a segment center to its neighboring U-joint (m).
    pub half_link: f64,
    /// Outer radius of the screw shell (m).
    pub screw_radius: f64,
    /// Axial speed of the screw thread at full motor speed (m/s).
    pub lead_speed_max: f64,
    /// Screw angular speed at full motor speed (rad/s).
    pub omega_max: f64,
    /// Maximum joint deflection per axis (rad).
    pub joint_limit: f64,
    /// Chirality of the head segment; the rest alternate.
    pub head_handedness: Handedness,
}

impl Default for ChainGeometry {
    fn default() -> Self {
        Self::arcsnake()
    }
}

impl ChainGeometry {
    /// Four-segment prototype: 18.2 cm from segment center to joint,
    /// 128 mm screw diameter, 0.23 m/s lead speed, 90 deg joints.
    pub fn arcsnake() -> Self {
        let screw_radius = 0.064;
        let lead_speed_max = 0.23;
        // 22 deg thread pitch angle: lead per revolution = 2π r tan(22°).
        let lead_per_rev = 2.0 * PI * screw_radius * 22f64.to_radians().tan();
        Self {
            n_segments: 4,
            half_link: 0.182,
            screw_radius,
            lead_speed_max,
            omega_max: 2.0 * PI * lead_speed_max / lead_per_rev,
            joint_limit: PI / 2.0,
            head_handedness: Handedness::Right,
        }
    }

    pub fn with_segments(mut self, n_segments: usize) -> Self {
        self.n_segments = n_segments;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidGeometry(msg.to_owned()));
        if self.n_segments < 2 {
            return bad("n_segments must be >= 2");
        }
        for (name, v) in [
            ("half_link", self.half_link),
            ("screw_radius", self.screw_radius),
            ("lead_speed_max", self.lead_speed_max),
            ("omega_max", self.omega_max),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidGeometry(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(self.joint_limit > 0.0 && self.joint_limit <= PI / 2.0) {
            return bad("joint_limit must lie in (0, π/2]");
        }
        Ok(())
    }

    pub fn n_joints(&self) -> usize {
        self.n_segments - 1
    }

    /// Handedness of segment `i` (1-based).
    pub fn handedness(&self, i: usize) -> Handedness {
        if (i - 1) % 2 == 0 {
            self.head_handedness
        } else {
            self.head_handedness.flipped()
        }
    }

    /// Meters of axial thread travel per radian of screw rotation.
    pub fn lead_per_radian(&self) -> f64 {
        self.lead_speed_max / self.omega_max
    }

    fn check_segment(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.n_segments {
            return Err(Error::SegmentIndex {
                index: i,
                n_segments: self.n_segments,
            });
        }
        Ok(())
    }
}

/// Planar joint angles and rates. Pitch is carried for teleoperation and
/// ignored by the planar model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub angles: Vec<f64>,
    pub rates: Vec<f64>,
    #[serde(default)]
    pub pitch: Vec<f64>,
}

impl JointState {
    pub fn straight(n_joints: usize) -> Self {
        Self::from_angles(vec![PI; n_joints])
    }

    pub fn from_angles(angles: Vec<f64>) -> Self {
        let n = angles.len();
        Self {
            angles,
            rates: vec![0.0; n],
            pitch: vec![0.0; n],
        }
    }

    pub fn from_deflections(deflections: &[f64]) -> Self {
        Self::from_angles(deflections.iter().map(|d| angle_from_deflection(*d)).collect())
    }

    pub fn with_rates(mut self, rates: Vec<f64>) -> Self {
        self.rates = rates;
        self
    }

    pub fn deflections(&self) -> Vec<f64> {
        self.angles.iter().map(|a| deflection(*a)).collect()
    }

    /// Cumulative deflections `θ'_{1:j}` for `j = 0..n_joints` (index 0 is the
    /// empty sum).
    pub fn cumulative_deflections(&self) -> Vec<f64> {
        cumulative(self.angles.iter().map(|a| deflection(*a)))
    }

    /// Cumulative joint rates `θ̇_{1:j}` for `j = 0..n_joints`.
    pub fn cumulative_rates(&self) -> Vec<f64> {
        cumulative(self.rates.iter().copied())
    }

    pub fn validate(&self, geom: &ChainGeometry) -> Result<()> {
        let n = geom.n_joints();
        if self.angles.len() != n || self.rates.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "joint state has {} angles / {} rates, chain has {n} joints",
                self.angles.len(),
                self.rates.len()
            )));
        }
        for (k, a) in self.angles.iter().enumerate() {
            let d = deflection(*a);
            if !d.is_finite() || d.abs() > geom.joint_limit + 1e-12 {
                return Err(Error::JointLimit {
                    joint: k + 1,
                    deflection: d,
                    limit: geom.joint_limit,
                });
            }
        }
        Ok(())
    }
}

fn cumulative(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0];
    let mut acc = 0.0;
    for v in values {
        acc += v;
        out.push(acc);
    }
    out
}

/// Reference frame a body twist is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Frame {
    Head,
    MCenter,
}

/// Instantaneous planar velocity of a body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyTwist {
    pub frame: Frame,
    pub vx: f64,
    pub vy: f64,
    pub yaw_rate: f64,
}

impl BodyTwist {
    pub fn head(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self {
            frame: Frame::Head,
            vx,
            vy,
            yaw_rate,
        }
    }

    pub fn m_center(vx: f64, vy: f64, yaw_rate: f64) -> Self {
        Self {
            frame: Frame::MCenter,
            vx,
            vy,
            yaw_rate,
        }
    }

    pub fn expect_frame(&self, expected: Frame) -> Result<()> {
        if self.frame != expected {
            return Err(Error::FrameMismatch {
                expected,
                found: self.frame,
            });
        }
        Ok(())
    }

    /// Velocity of the body-fixed point `p` (same frame as the twist).
    pub fn velocity_at(&self, p: Vec2) -> Vec2 {
        Vec2::new(self.vx - p.y * self.yaw_rate, self.vy + p.x * self.yaw_rate)
    }
}

/// Velocity of a segment center in its own axes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SegmentVelocity {
    pub axial: f64,
    pub radial: f64,
}

impl SegmentVelocity {
    pub fn new(axial: f64, radial: f64) -> Self {
        Self { axial, radial }
    }

    pub fn as_vec(&self) -> Vec2 {
        Vec2::new(self.axial, self.radial)
    }
}

/// Heading of segment `i` relative to the head axis.
pub fn segment_heading(geom: &ChainGeometry, joints: &JointState, i: usize) -> Result<f64> {
    geom.check_segment(i)?;
    joints.validate(geom)?;
    Ok(-joints.cumulative_deflections()[i - 1])
}

/// Center of segment `i` in the head frame.
pub fn segment_position(geom: &ChainGeometry, joints: &JointState, i: usize) -> Result<Vec2> {
    geom.check_segment(i)?;
    joints.validate(geom)?;
    Ok(position_unchecked(geom.half_link, &joints.cumulative_deflections(), i))
}

/// Centers of every segment, head first.
pub fn segment_positions(geom: &ChainGeometry, joints: &JointState) -> Result<Vec<Vec2>> {
    joints.validate(geom)?;
    let cum = joints.cumulative_deflections();
    Ok((1..=geom.n_segments)
        .map(|i| position_unchecked(geom.half_link, &cum, i))
        .collect())
}

pub(crate) fn position_unchecked(l: f64, cum: &[f64], i: usize) -> Vec2 {
    let mut x = -l;
    let mut y = 0.0;
    for c in &cum[1..i] {
        x -= 2.0 * l * c.cos();
        y += 2.0 * l * c.sin();
    }
    let last = cum[i - 1];
    Vec2::new(x + l * last.cos(), y - l * last.sin())
}

/// Location of joint `k` (between segments `k` and `k + 1`) in the head frame.
pub fn joint_position(geom: &ChainGeometry, joints: &JointState, k: usize) -> Result<Vec2> {
    if k == 0 || k > geom.n_joints() {
        return Err(Error::SegmentIndex {
            index: k,
            n_segments: geom.n_joints(),
        });
    }
    joints.validate(geom)?;
    Ok(joint_unchecked(geom.half_link, &joints.cumulative_deflections(), k))
}

pub(crate) fn joint_unchecked(l: f64, cum: &[f64], k: usize) -> Vec2 {
    let mut p = Vec2::new(-l, 0.0);
    for c in &cum[1..k] {
        p += Vec2::new(-2.0 * l * c.cos(), 2.0 * l * c.sin());
    }
    p
}

/// Head-frame velocity of segment `i`'s center caused by joint motion alone.
///
/// This is the time derivative of [`segment_position`] with `θ̇` the rate of
/// the π-is-straight joint angle.
pub fn induced_velocity(geom: &ChainGeometry, joints: &JointState, i: usize) -> Result<Vec2> {
    geom.check_segment(i)?;
    joints.validate(geom)?;
    Ok(induced_unchecked(
        geom.half_link,
        &joints.cumulative_deflections(),
        &joints.cumulative_rates(),
        i,
    ))
}

pub(crate) fn induced_unchecked(l: f64, cum: &[f64], cum_rates: &[f64], i: usize) -> Vec2 {
    // d/dt θ'_{1:j} = -θ̇_{1:j}
    let mut w = Vec2::zeros();
    for j in 1..i {
        w += 2.0 * l * cum_rates[j] * Vec2::new(-cum[j].sin(), -cum[j].cos());
    }
    let last = cum[i - 1];
    w + l * cum_rates[i - 1] * Vec2::new(last.sin(), last.cos())
}

/// Axial and radial velocity of segment `i` given the head twist and joint
/// rates.
pub fn axial_radial_velocity(
    geom: &ChainGeometry,
    joints: &JointState,
    twist: &BodyTwist,
    i: usize,
) -> Result<SegmentVelocity> {
    twist.expect_frame(Frame::Head)?;
    let p = segment_position(geom, joints, i)?;
    let w = induced_velocity(geom, joints, i)?;
    let v = twist.velocity_at(p) + w;
    // segment i points along -θ'_{1:i-1}; rotate into its axes
    let local = rotate(v, joints.cumulative_deflections()[i - 1]);
    Ok(SegmentVelocity::new(local.x, local.y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_PI_2;

    fn geom() -> ChainGeometry {
        ChainGeometry::arcsnake()
    }

    #[test]
    fn head_segment_is_origin() {
        let g = geom();
        let j = JointState::from_deflections(&[0.3, -0.5, 1.0]);
        assert_eq!(segment_position(&g, &j, 1).unwrap(), Vec2::zeros());
    }

    #[test]
    fn straight_chain_third_segment() {
        let g = geom();
        let p = segment_position(&g, &JointState::straight(3), 3).unwrap();
        assert_abs_diff_eq!(p.x, -0.728, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn right_angle_first_joint() {
        // joint 1 at (-l, 0); segment 2 center l further, bent toward +y
        let g = geom();
        let j = JointState::from_angles(vec![FRAC_PI_2, PI, PI]);
        let p = segment_position(&g, &j, 2).unwrap();
        assert_abs_diff_eq!(p.x, -0.182, epsilon = 1e-12);
        assert_abs_diff_eq!(p.y, 0.182, epsilon = 1e-12);
    }

    #[test]
    fn out_of_range_index_and_limits() {
        let g = geom();
        let j = JointState::straight(3);
        assert!(matches!(
            segment_position(&g, &j, 0),
            Err(Error::SegmentIndex { .. })
        ));
        assert!(matches!(
            segment_position(&g, &j, 5),
            Err(Error::SegmentIndex { .. })
        ));
        let bent = JointState::from_deflections(&[0.0, 1.7, 0.0]);
        assert!(matches!(
            segment_position(&g, &bent, 2),
            Err(Error::JointLimit { joint: 2, .. })
        ));
    }

    #[test]
    fn induced_velocity_zero_cases() {
        let g = geom();
        let j = JointState::from_deflections(&[0.2, 0.1, -0.3]);
        assert_eq!(induced_velocity(&g, &j, 3).unwrap(), Vec2::zeros());
        let moving = j.with_rates(vec![1.0, -2.0, 0.5]);
        assert_eq!(induced_velocity(&g, &moving, 1).unwrap(), Vec2::zeros());
    }

    #[test]
    fn induced_velocity_straight_single_rate() {
        // θ_1 = π + t bends segment 2 toward -y at l rad/s
        let g = geom();
        let j = JointState::straight(3).with_rates(vec![1.0, 0.0, 0.0]);
        let w = induced_velocity(&g, &j, 2).unwrap();
        assert_abs_diff_eq!(w.x, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.y, -0.182, epsilon = 1e-12);
    }

    #[test]
    fn axial_radial_examples() {
        let g = geom();
        let straight = JointState::straight(3);
        for i in 1..=4 {
            let v =
                axial_radial_velocity(&g, &straight, &BodyTwist::head(0.1, 0.0, 0.0), i).unwrap();
            assert_abs_diff_eq!(v.axial, 0.1, epsilon = 1e-12);
            assert_abs_diff_eq!(v.radial, 0.0, epsilon = 1e-12);
        }
        let v = axial_radial_velocity(&g, &straight, &BodyTwist::head(0.0, 0.0, 1.0), 3).unwrap();
        assert_abs_diff_eq!(v.axial, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.radial, -0.728, epsilon = 1e-12);

        let bent = JointState::from_deflections(&[0.4, -0.2, 0.9]);
        let v = axial_radial_velocity(&g, &bent, &BodyTwist::head(0.3, -0.2, 0.7), 1).unwrap();
        assert_abs_diff_eq!(v.axial, 0.3, epsilon = 1e-12);
        assert_abs_diff_eq!(v.radial, -0.2, epsilon = 1e-12);
    }

    #[test]
    fn frame_mismatch_rejected() {
        let g = geom();
        let err = axial_radial_velocity(
            &g,
            &JointState::straight(3),
            &BodyTwist::m_center(0.1, 0.0, 0.0),
            1,
        )
        .unwrap_err();
        assert!(matches!(err, Error::FrameMismatch { .. }));
    }

    #[test]
    fn handedness_alternates() {
        let g = geom();
        let signs: Vec<f64> = (1..=4).map(|i| g.handedness(i).sign()).collect();
        assert_eq!(signs, vec![1.0, -1.0, 1.0, -1.0]);
    }

    #[test]
    fn default_geometry_is_valid() {
        let g = geom();
        g.validate().unwrap();
        assert_abs_diff_eq!(g.omega_max * g.lead_per_radian(), 0.23, epsilon = 1e-12);
        assert!(g.clone().with_segments(1).validate().is_err());
    }
}
