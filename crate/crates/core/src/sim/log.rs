use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::kinematics::{SegmentVelocity, Vec2};

use super::PoseState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: f64,
    pub state: PoseState,
    /// World position of the point whose path defines the turning radius:
    /// the M-center in M-configuration, the head otherwise.
    pub reference: Vec2,
    pub velocities: Vec<SegmentVelocity>,
    pub screw_omega: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub entries: Vec<LogEntry>,
}

/// Wraps an angle to (-π, π].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl TrajectoryLog {
    pub fn new(dt: f64) -> Self {
        Self {
            dt,
            entries: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Unwrapped heading change from the first to the last entry (rad).
    pub fn swept_heading(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| wrap_angle(w[1].state.psi - w[0].state.psi))
            .sum()
    }

    /// Length of the reference-point path.
    pub fn path_length(&self) -> f64 {
        self.entries
            .windows(2)
            .map(|w| (w[1].reference - w[0].reference).norm())
            .sum()
    }

    pub fn header(n_segments: usize) -> Vec<String> {
        let mut h: Vec<String> = ["t", "x", "y", "psi"].iter().map(|s| s.to_string()).collect();
        h.extend((1..n_segments).map(|k| format!("theta_{k}")));
        h.extend((1..=n_segments).map(|k| format!("omega_{k}")));
        h.extend((1..=n_segments).map(|k| format!("va_{k}")));
        h.extend((1..=n_segments).map(|k| format!("vr_{k}")));
        h
    }

    pub fn write_csv<W: Write>(&self, n_segments: usize, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(Self::header(n_segments))?;
        for e in &self.entries {
            let mut row = vec![e.t, e.state.x, e.state.y, e.state.psi];
            row.extend(&e.state.joints.angles);
            row.extend(&e.screw_omega);
            row.extend(e.velocities.iter().map(|v| v.axial));
            row.extend(e.velocities.iter().map(|v| v.radial));
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush().map_err(|e| crate::error::Error::io("<csv>", e))?;
        Ok(())
    }
}
