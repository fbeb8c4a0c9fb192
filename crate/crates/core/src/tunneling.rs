//! Tunneling mode: joints held at a common angle, screws propelling equally.
//!
//! With every joint at the same angle the chain lies on a circle, and each
//! segment's axis is tangent to it. Holding that pose while all screws push
//! with equal axial speed turns the robot about the circle's center.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::control::{Setpoints, TurnRadius};
use crate::error::{Error, Result};
use crate::kinematics::{angle_from_deflection, deflection, ChainGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunnelingCommand {
    pub radius: TurnRadius,
    /// Fraction of the maximum screw speed, in [-1, 1].
    pub speed_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointMode {
    PositionHold,
    Compliant,
}

/// Tightest turning radius reachable before a joint hits its limit.
pub fn min_turn_radius(geom: &ChainGeometry) -> f64 {
    geom.half_link / (geom.joint_limit / 2.0).tan()
}

/// Common joint angle (π = straight) that puts the center of rotation at
/// `(0, R)` in the head frame.
pub fn heading_angle(geom: &ChainGeometry, radius: TurnRadius) -> Result<f64> {
    let r = match radius {
        TurnRadius::Straight => return Ok(PI),
        TurnRadius::Finite(r) => r,
    };
    let r_min = min_turn_radius(geom);
    if !r.is_finite() || r.abs() < r_min * (1.0 - 1e-12) {
        return Err(Error::InfeasibleRadius { radius: r, r_min });
    }
    let bend = PI - 2.0 * (r.abs() / geom.half_link).atan();
    Ok(angle_from_deflection(r.signum() * bend.min(geom.joint_limit)))
}

/// Inverse of [`heading_angle`]: the turning radius produced by a common
/// joint angle.
pub fn radius_for_angle(geom: &ChainGeometry, theta: f64) -> TurnRadius {
    let d = deflection(theta);
    if d == 0.0 {
        return TurnRadius::Straight;
    }
    TurnRadius::Finite(d.signum() * geom.half_link * ((PI - d.abs()) / 2.0).tan())
}

pub fn tunneling_setpoints(geom: &ChainGeometry, cmd: &TunnelingCommand) -> Result<Setpoints> {
    if !(-1.0..=1.0).contains(&cmd.speed_fraction) {
        return Err(Error::config(
            "speed_fraction",
            format!("{} outside [-1, 1]", cmd.speed_fraction),
        ));
    }
    let theta = heading_angle(geom, cmd.radius)?;
    // Signs follow handedness so every axial thrust points forward.
    let omega = cmd.speed_fraction * geom.omega_max;
    Ok(Setpoints {
        joint_angles: vec![theta; geom.n_joints()],
        screw_omega: (1..=geom.n_segments)
            .map(|i| geom.handedness(i).sign() * omega)
            .collect(),
        saturated: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConformingSetpoints {
    pub modes: Vec<JointMode>,
    pub head_angle: f64,
}

/// Corridor-conforming mode: only the head joint is position-held; the rest
/// are back-drivable.
pub fn conforming_setpoints(
    geom: &ChainGeometry,
    head_steer_deflection: f64,
) -> Result<ConformingSetpoints> {
    if !head_steer_deflection.is_finite() || head_steer_deflection.abs() > geom.joint_limit {
        return Err(Error::JointLimit {
            joint: 1,
            deflection: head_steer_deflection,
            limit: geom.joint_limit,
        });
    }
    let mut modes = vec![JointMode::Compliant; geom.n_joints()];
    modes[0] = JointMode::PositionHold;
    Ok(ConformingSetpoints {
        modes,
        head_angle: angle_from_deflection(head_steer_deflection),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn geom() -> ChainGeometry {
        ChainGeometry::arcsnake()
    }

    #[test]
    fn straight_is_pi() {
        assert_eq!(heading_angle(&geom(), TurnRadius::Straight).unwrap(), PI);
    }

    #[test]
    fn minimum_radius_at_right_angle_limit() {
        let g = geom();
        assert_abs_diff_eq!(min_turn_radius(&g), 0.182, epsilon = 1e-12);
        let theta = heading_angle(&g, TurnRadius::Finite(0.182)).unwrap();
        assert_abs_diff_eq!(deflection(theta), PI / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn below_minimum_is_infeasible() {
        // 0.18 m needs 90.63 deg of deflection
        let err = heading_angle(&geom(), TurnRadius::Finite(0.18)).unwrap_err();
        match err {
            Error::InfeasibleRadius { r_min, .. } => assert_abs_diff_eq!(r_min, 0.182, epsilon = 1e-12),
            e => panic!("unexpected {e}"),
        }
        assert!(heading_angle(&geom(), TurnRadius::Finite(0.0)).is_err());
    }

    #[test]
    fn round_trip_radius() {
        let g = geom();
        for r in [0.43, -0.43, 0.2, 1.0, 5.0] {
            let theta = heading_angle(&g, TurnRadius::Finite(r)).unwrap();
            assert_abs_diff_eq!(radius_for_angle(&g, theta).meters(), r, epsilon = 1e-12);
        }
    }

    #[test]
    fn straight_full_speed_setpoints() {
        let g = geom();
        let sp = tunneling_setpoints(
            &g,
            &TunnelingCommand {
                radius: TurnRadius::Straight,
                speed_fraction: 1.0,
            },
        )
        .unwrap();
        assert_eq!(sp.joint_angles, vec![PI; 3]);
        let w = g.omega_max;
        assert_eq!(sp.screw_omega, vec![w, -w, w, -w]);
    }

    #[test]
    fn half_speed_turn_setpoints() {
        let g = geom();
        let sp = tunneling_setpoints(
            &g,
            &TunnelingCommand {
                radius: TurnRadius::Finite(0.43),
                speed_fraction: 0.5,
            },
        )
        .unwrap();
        let theta = heading_angle(&g, TurnRadius::Finite(0.43)).unwrap();
        assert_eq!(sp.joint_angles, vec![theta; 3]);
        assert!(sp.screw_omega.iter().all(|w| (w.abs() - 0.5 * g.omega_max).abs() < 1e-12));
    }

    #[test]
    fn zero_speed_still_poses() {
        let g = geom();
        let sp = tunneling_setpoints(
            &g,
            &TunnelingCommand {
                radius: TurnRadius::Finite(0.5),
                speed_fraction: 0.0,
            },
        )
        .unwrap();
        assert!(sp.screw_omega.iter().all(|w| *w == 0.0));
        assert!(sp.joint_angles.iter().all(|a| *a < PI));
    }

    #[test]
    fn conforming_modes() {
        let g = geom();
        let sp = conforming_setpoints(&g, 0.0).unwrap();
        assert_eq!(sp.head_angle, PI);
        assert_eq!(
            sp.modes,
            vec![JointMode::PositionHold, JointMode::Compliant, JointMode::Compliant]
        );
        let sp = conforming_setpoints(&g, 20f64.to_radians()).unwrap();
        assert_abs_diff_eq!(sp.head_angle, PI - 20f64.to_radians(), epsilon = 1e-15);
        assert!(conforming_setpoints(&g, 1.6).is_err());
    }
}
