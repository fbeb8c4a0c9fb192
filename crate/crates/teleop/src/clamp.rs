//! Restricting operator input to the device's convex joint box.

use serde::{Deserialize, Serialize};

use crate::protocol::{FrameMode, JointAngles, TeleopFrame};
use crate::TeleopError;

/// Per-axis symmetric limit on joint deflection (rad). The clamped set is the
/// axis-aligned box `[-pitch, pitch] × [-yaw, yaw]` for every joint, which
/// keeps the operator away from the robot's own joint limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampPolicy {
    pub pitch_rad: f64,
    pub yaw_rad: f64,
}

impl ClampPolicy {
    pub const DEFAULT_LIMIT_DEG: f64 = 80.0;

    pub fn symmetric(limit_rad: f64) -> Self {
        Self {
            pitch_rad: limit_rad,
            yaw_rad: limit_rad,
        }
    }

    /// Both axes must be strictly inside the robot's joint limit.
    pub fn validate(&self, joint_limit: f64) -> Result<(), TeleopError> {
        for (axis, v) in [("pitch", self.pitch_rad), ("yaw", self.yaw_rad)] {
            if !(v > 0.0 && v < joint_limit) {
                return Err(TeleopError::Policy(format!(
                    "{axis} device limit {v} rad must be in (0, {joint_limit})"
                )));
            }
        }
        Ok(())
    }

    pub fn clamp(&self, frame: &TeleopFrame) -> Result<ClampedFrame, TeleopError> {
        if !frame.screw.is_finite() {
            return Err(TeleopError::BadFrame(format!("screw throttle is {}", frame.screw)));
        }
        let mut joints = Vec::with_capacity(frame.joints.len());
        let mut flags = Vec::with_capacity(frame.joints.len());
        for (k, j) in frame.joints.iter().enumerate() {
            if !(j.pitch_rad.is_finite() && j.yaw_rad.is_finite()) {
                return Err(TeleopError::BadFrame(format!("joint {k} has a non-finite angle")));
            }
            let pitch = j.pitch_rad.clamp(-self.pitch_rad, self.pitch_rad);
            let yaw = j.yaw_rad.clamp(-self.yaw_rad, self.yaw_rad);
            joints.push(JointAngles::new(pitch, yaw));
            flags.push([pitch != j.pitch_rad, yaw != j.yaw_rad]);
        }
        Ok(ClampedFrame {
            seq: frame.seq,
            t_ms: frame.t_ms,
            joints,
            screw: frame.screw.clamp(-1.0, 1.0),
            mode: frame.mode,
            flags,
        })
    }
}

impl Default for ClampPolicy {
    fn default() -> Self {
        Self::symmetric(Self::DEFAULT_LIMIT_DEG.to_radians())
    }
}

/// A frame after clamping, with per-axis `[pitch, yaw]` flags.
#[derive(Debug, Clone, PartialEq)]
pub struct ClampedFrame {
    pub seq: u64,
    pub t_ms: f64,
    pub joints: Vec<JointAngles>,
    pub screw: f64,
    pub mode: Option<FrameMode>,
    pub flags: Vec<[bool; 2]>,
}

impl ClampedFrame {
    pub fn any_clamped(&self) -> bool {
        self.flags.iter().flatten().any(|f| *f)
    }

    /// Per-joint flag as sent on the wire.
    pub fn joint_flags(&self) -> Vec<bool> {
        self.flags.iter().map(|f| f[0] || f[1]).collect()
    }

    pub fn to_frame(&self) -> TeleopFrame {
        TeleopFrame {
            seq: self.seq,
            t_ms: self.t_ms,
            joints: self.joints.clone(),
            screw: self.screw,
            mode: self.mode,
        }
    }
}
