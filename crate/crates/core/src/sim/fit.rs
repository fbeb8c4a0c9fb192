//! Least-squares estimators used by the simulator and its measurements.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::kinematics::Vec2;

use super::log::TrajectoryLog;

/// Radii above this are reported as straight-line motion.
pub const STRAIGHT_RADIUS_THRESHOLD: f64 = 1e3;

/// Minimum heading change a log must sweep before a radius is fitted.
pub const MIN_SWEEP_DEG: f64 = 90.0;

/// Rigid planar motion `(vx, vy, ω)` at the frame origin that best explains
/// the velocities observed at `points`.
pub fn fit_rigid_twist(points: &[Vec2], velocities: &[Vec2]) -> (f64, f64, f64) {
    assert_eq!(points.len(), velocities.len());
    let n = points.len() as f64;
    let p_mean = points.iter().sum::<Vec2>() / n;
    let v_mean = velocities.iter().sum::<Vec2>() / n;
    let mut cross = 0.0;
    let mut spread = 0.0;
    for (p, v) in points.iter().zip(velocities) {
        let dp = p - p_mean;
        let dv = v - v_mean;
        cross += dp.x * dv.y - dp.y * dv.x;
        spread += dp.norm_squared();
    }
    let omega = if spread > 0.0 { cross / spread } else { 0.0 };
    (
        v_mean.x + omega * p_mean.y,
        v_mean.y - omega * p_mean.x,
        omega,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CircleFit {
    pub center: Vec2,
    pub radius: f64,
    pub rms_residual: f64,
}

/// Algebraic (Kåsa) circle fit. Returns `None` when the points are collinear
/// or coincident.
pub fn fit_circle(points: &[Vec2]) -> Option<CircleFit> {
    if points.len() < 3 {
        return None;
    }
    // Center the data for conditioning.
    let n = points.len() as f64;
    let mean = points.iter().sum::<Vec2>() / n;
    let mut ata = Matrix3::zeros();
    let mut atb = Vector3::zeros();
    for p in points {
        let q = p - mean;
        let row = Vector3::new(q.x, q.y, 1.0);
        let rhs = -(q.x * q.x + q.y * q.y);
        ata += row * row.transpose();
        atb += row * rhs;
    }
    let sol = ata.lu().solve(&atb)?;
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let center = Vec2::new(-d / 2.0, -e / 2.0);
    let r2 = center.norm_squared() - f;
    if !(r2.is_finite() && r2 > 0.0) {
        return None;
    }
    let radius = r2.sqrt();
    let rms = (points
        .iter()
        .map(|p| ((p - mean - center).norm() - radius).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Some(CircleFit {
        center: center + mean,
        radius,
        rms_residual: rms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TurnFit {
    /// Fitted radius in meters; `f64::INFINITY` when the path is straight.
    pub radius: f64,
    pub rms_residual: f64,
    pub swept_deg: f64,
}

/// Fits the turning radius of the log's reference-point track.
pub fn fit_turn_radius(log: &TrajectoryLog) -> Result<TurnFit> {
    let swept_deg = log.swept_heading().to_degrees().abs();
    if swept_deg < MIN_SWEEP_DEG {
        return Err(Error::InsufficientArc { swept_deg });
    }
    let points: Vec<Vec2> = log.entries.iter().map(|e| e.reference).collect();
    let mean = points.iter().sum::<Vec2>() / points.len() as f64;
    let spread = points.iter().map(|p| (p - mean).norm()).fold(0.0, f64::max);
    // Turning in place: the reference point does not move.
    if spread < 1e-6 {
        return Ok(TurnFit {
            radius: spread,
            rms_residual: 0.0,
            swept_deg,
        });
    }
    match fit_circle(&points) {
        Some(c) if c.radius <= STRAIGHT_RADIUS_THRESHOLD => Ok(TurnFit {
            radius: c.radius,
            rms_residual: c.rms_residual,
            swept_deg,
        }),
        _ => Ok(TurnFit {
            radius: f64::INFINITY,
            rms_residual: 0.0,
            swept_deg,
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn exact_circle() {
        let c = Vec2::new(0.3, -1.2);
        let pts: Vec<Vec2> = (0..50)
            .map(|k| {
                let a = 0.05 * k as f64;
                c + 0.43 * Vec2::new(a.cos(), a.sin())
            })
            .collect();
        let fit = fit_circle(&pts).unwrap();
        assert_abs_diff_eq!(fit.radius, 0.43, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.center.x, 0.3, epsilon = 1e-9);
        assert!(fit.rms_residual < 1e-9);
    }

    #[test]
    fn collinear_points_have_no_circle() {
        let pts: Vec<Vec2> = (0..10).map(|k| Vec2::new(k as f64, 2.0 * k as f64)).collect();
        assert!(fit_circle(&pts).map_or(true, |c| c.radius > STRAIGHT_RADIUS_THRESHOLD));
    }

    #[test]
    fn pure_translation_and_rotation() {
        let pts = vec![Vec2::new(0.0, 0.0), Vec2::new(-1.0, 0.0), Vec2::new(-2.0, 0.5)];
        let vel = vec![Vec2::new(0.3, 0.1); 3];
        let (vx, vy, w) = fit_rigid_twist(&pts, &vel);
        assert_abs_diff_eq!(vx, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(vy, 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(w, 0.0, epsilon = 1e-15);

        let vel: Vec<Vec2> = pts.iter().map(|p| Vec2::new(-p.y, p.x) * 0.7).collect();
        let (vx, vy, w) = fit_rigid_twist(&pts, &vel);
        assert_abs_diff_eq!(vx, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(vy, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(w, 0.7, epsilon = 1e-15);
    }
}
