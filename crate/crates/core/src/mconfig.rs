//! M-configuration: a four-segment zigzag that drives on rigid ground by
//! letting the screws roll like wheels.
//!
//! Quantities here live in the M-center frame: origin on the line through all
//! segment centers (their centroid), `+y` toward the head, `+x` the forward
//! driving direction.

use std::f64::consts::{FRAC_PI_2, PI};

use crate::control::{Setpoints, TurnRadius};
use crate::error::{Error, Result};
use crate::kinematics::{rotate, BodyTwist, ChainGeometry, Frame, SegmentVelocity, Vec2};

/// The M shape is defined for exactly this many segments.
pub const M_SEGMENTS: usize = 4;

/// Default M angle; the steadiest gait in the field trials.
pub const DEFAULT_THETA_M: f64 = 140.0 * PI / 180.0;

fn check(geom: &ChainGeometry, theta_m: f64) -> Result<()> {
    if geom.n_segments != M_SEGMENTS {
        return Err(Error::UnsupportedConfiguration {
            n_segments: geom.n_segments,
        });
    }
    if !(theta_m > FRAC_PI_2 && theta_m <= PI) {
        return Err(Error::AngleRange {
            value: theta_m,
            expected: "(π/2, π]",
        });
    }
    Ok(())
}

fn check_index(i: usize) -> Result<()> {
    if i == 0 || i > M_SEGMENTS {
        return Err(Error::SegmentIndex {
            index: i,
            n_segments: M_SEGMENTS,
        });
    }
    Ok(())
}

/// `cos(θ'_m / 2)`, the spacing factor of the zigzag.
fn spacing(theta_m: f64) -> f64 {
    ((PI - theta_m) / 2.0).cos()
}

/// Joint angles forming the M shape: deflections `-θ'_m, +θ'_m, -θ'_m`.
pub fn mconfig_joint_angles(geom: &ChainGeometry, theta_m: f64) -> Result<Vec<f64>> {
    check(geom, theta_m)?;
    let d = PI - theta_m;
    Ok((0..geom.n_joints())
        .map(|k| if k % 2 == 0 { PI + d } else { PI - d })
        .collect())
}

/// Center of segment `i` in the M-center frame.
pub fn mconfig_position(geom: &ChainGeometry, theta_m: f64, i: usize) -> Result<Vec2> {
    check(geom, theta_m)?;
    check_index(i)?;
    let coeff = 5.0 - 2.0 * i as f64;
    Ok(Vec2::new(0.0, coeff * geom.half_link * spacing(theta_m)))
}

/// Rotation taking M-frame vectors into segment `i`'s (axial, radial) axes.
pub fn mconfig_segment_rotation(theta_m: f64, i: usize) -> f64 {
    let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
    sign * (PI - theta_m) / 2.0 - FRAC_PI_2
}

pub fn mconfig_axial_radial(
    geom: &ChainGeometry,
    theta_m: f64,
    twist: &BodyTwist,
    i: usize,
) -> Result<SegmentVelocity> {
    twist.expect_frame(Frame::MCenter)?;
    let y = mconfig_position(geom, theta_m, i)?.y;
    let v = Vec2::new(twist.vx - y * twist.yaw_rate, twist.vy);
    let local = rotate(v, mconfig_segment_rotation(theta_m, i));
    Ok(SegmentVelocity::new(local.x, local.y))
}

/// Fraction of the rolling speed `ω r_s` lost to slip.
pub fn slippage_ratio(radial: f64, omega: f64, screw_radius: f64) -> Result<f64> {
    if omega == 0.0 {
        return Err(Error::UndefinedSlippage);
    }
    Ok(1.0 - radial / (omega * screw_radius))
}

/// Screw speed for segment `i` that realizes `(ẋ_m, φ̇_m)` under slip `s`.
pub fn screw_speed_ik(
    geom: &ChainGeometry,
    theta_m: f64,
    vx: f64,
    yaw_rate: f64,
    slip: f64,
    i: usize,
) -> Result<f64> {
    if !(slip < 1.0) {
        return Err(Error::NoTraction { slip });
    }
    let y = mconfig_position(geom, theta_m, i)?.y;
    let r = geom.screw_radius;
    Ok(spacing(theta_m) * (y * yaw_rate - vx) / (r - r * slip))
}

/// Required `ω_i / ω_j` for a turning radius, assuming equal slip on every
/// segment.
pub fn speed_ratio(
    geom: &ChainGeometry,
    theta_m: f64,
    radius: TurnRadius,
    i: usize,
    j: usize,
) -> Result<f64> {
    let yi = mconfig_position(geom, theta_m, i)?.y;
    let yj = mconfig_position(geom, theta_m, j)?.y;
    let r = match radius {
        TurnRadius::Straight => return Ok(1.0),
        TurnRadius::Finite(r) => r,
    };
    let den = yj - r;
    if den.abs() < 1e-12 {
        return Err(Error::SegmentOnCenter { segment: j });
    }
    Ok((yi - r) / den)
}

/// Recovers `(ẋ_m, φ̇_m)` from the radial velocities of all four segments by
/// least squares (`ẏ_m = 0`).
pub fn twist_from_radial(geom: &ChainGeometry, theta_m: f64, radial: &[f64]) -> Result<BodyTwist> {
    check(geom, theta_m)?;
    if radial.len() != M_SEGMENTS {
        return Err(Error::InvalidGeometry(format!(
            "expected {M_SEGMENTS} radial speeds, got {}",
            radial.len()
        )));
    }
    // u_r^i = c (y_i φ̇ - ẋ); the y_i sum to zero so the normal equations split
    let c = spacing(theta_m);
    let ys: Vec<f64> = (1..=M_SEGMENTS)
        .map(|i| mconfig_position(geom, theta_m, i).map(|p| p.y))
        .collect::<Result<_>>()?;
    let vx = -radial.iter().sum::<f64>() / (M_SEGMENTS as f64 * c);
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let yaw = ys.iter().zip(radial).map(|(y, u)| y * u).sum::<f64>() / (c * syy);
    Ok(BodyTwist::m_center(vx, 0.0, yaw))
}

/// Joint pose plus screw speeds for driving at `radius`.
///
/// `base_speed` is the fastest screw's speed as a fraction of `ω_max`;
/// magnitudes above 1 are clamped and flagged. Positive `base_speed` drives
/// toward `+x_m`.
pub fn mconfig_setpoints(
    geom: &ChainGeometry,
    theta_m: f64,
    radius: TurnRadius,
    base_speed: f64,
) -> Result<Setpoints> {
    let joint_angles = mconfig_joint_angles(geom, theta_m)?;
    let (vx, yaw) = match radius {
        TurnRadius::Straight => (1.0, 0.0),
        TurnRadius::Finite(r) if r == 0.0 => (0.0, 1.0),
        TurnRadius::Finite(r) => (r.abs(), r.signum()),
    };
    let pattern: Vec<f64> = (1..=M_SEGMENTS)
        .map(|i| screw_speed_ik(geom, theta_m, vx, yaw, 0.0, i))
        .collect::<Result<_>>()?;
    let peak = pattern.iter().fold(0.0f64, |m, w| m.max(w.abs()));
    let saturated = base_speed.abs() > 1.0;
    let base = base_speed.clamp(-1.0, 1.0);
    let screw_omega = pattern
        .iter()
        .map(|w| if peak > 0.0 { base * geom.omega_max * w / peak } else { 0.0 })
        .collect();
    Ok(Setpoints {
        joint_angles,
        screw_omega,
        saturated,
    })
}
