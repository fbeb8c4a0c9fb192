//! JSON wire messages exchanged with pilot and observer clients.
//!
//! Every message is a single WebSocket text frame holding one JSON object
//! with a `type` tag. Angles are radians, lengths meters, times milliseconds.

use serde::{Deserialize, Serialize};

/// One universal joint as seen by the operator device.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct JointAngles {
    pub pitch_rad: f64,
    pub yaw_rad: f64,
}

impl JointAngles {
    pub fn new(pitch_rad: f64, yaw_rad: f64) -> Self {
        Self { pitch_rad, yaw_rad }
    }
}

/// Mode a frame asks the gateway to interpret it in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FrameMode {
    /// `joints[0].yaw_rad` is the common deflection of every joint.
    Tunneling,
    /// `joints[0].yaw_rad` is the M deflection `π − θ_m`; `joints[1].yaw_rad`
    /// scaled by the device limit selects the turning radius.
    MConfig,
    /// One-to-one joint mapping.
    #[default]
    Teleop,
}

/// Operator input frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeleopFrame {
    pub seq: u64,
    pub t_ms: f64,
    pub joints: Vec<JointAngles>,
    /// Screw throttle in [-1, 1].
    pub screw: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<FrameMode>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMessage {
    Frame(TeleopFrame),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub x: f64,
    pub y: f64,
    pub psi: f64,
}

/// Telemetry snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateUpdate {
    pub t_ms: f64,
    pub pose: Pose,
    /// Measured joint angles (deflections), head joint first.
    pub joints: Vec<JointAngles>,
    /// Per joint: whether either axis of the last forwarded frame was clamped.
    pub clamped: Vec<bool>,
    /// Realized ground speed of each segment (m/s).
    pub speeds: Vec<f64>,
    /// Bus deadline misses since start.
    pub misses: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    /// Another pilot holds the simulation.
    Occupied,
    /// No input for the hold timeout; joints regulate to the last setpoints.
    Hold,
    /// Frame failed validation (non-finite value, wrong joint count, ...).
    BadFrame,
    /// Text that is not a recognised message.
    BadMessage,
    /// Observers cannot send frames.
    NotPilot,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMessage {
    State(StateUpdate),
    Error { code: ErrorCode, detail: String },
}

impl ServerMessage {
    pub fn error(code: ErrorCode, detail: impl Into<String>) -> Self {
        ServerMessage::Error {
            code,
            detail: detail.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages hold only finite numbers")
    }
}

pub fn parse_client(text: &str) -> Result<ClientMessage, serde_json::Error> {
    serde_json::from_str(text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::{json, Value};

    #[test]
    fn frame_field_names() {
        let text = r#"{"type":"frame","seq":3,"t_ms":40.0,"joints":[{"pitch_rad":0.1,"yaw_rad":-0.2}],"screw":0.5,"mode":"M_CONFIG"}"#;
        let ClientMessage::Frame(f) = parse_client(text).unwrap();
        assert_eq!(f.seq, 3);
        assert_eq!(f.joints[0], JointAngles::new(0.1, -0.2));
        assert_eq!(f.mode, Some(FrameMode::MConfig));
    }

    #[test]
    fn mode_is_optional() {
        let text = r#"{"type":"frame","seq":1,"t_ms":0,"joints":[],"screw":0}"#;
        let ClientMessage::Frame(f) = parse_client(text).unwrap();
        assert_eq!(f.mode, None);
    }

    #[test]
    fn mode_names() {
        for (m, s) in [
            (FrameMode::Tunneling, "\"TUNNELING\""),
            (FrameMode::MConfig, "\"M_CONFIG\""),
            (FrameMode::Teleop, "\"TELEOP\""),
        ] {
            assert_eq!(serde_json::to_string(&m).unwrap(), s);
        }
    }

    #[test]
    fn state_field_names() {
        let msg = ServerMessage::State(StateUpdate {
            t_ms: 13.5,
            pose: Pose { x: 1.0, y: 2.0, psi: 0.5 },
            joints: vec![JointAngles::new(0.0, 0.25)],
            clamped: vec![true],
            speeds: vec![0.1],
            misses: 2,
        });
        let v: Value = serde_json::from_str(&msg.to_json()).unwrap();
        assert_eq!(
            v,
            json!({
                "type": "state",
                "t_ms": 13.5,
                "pose": {"x": 1.0, "y": 2.0, "psi": 0.5},
                "joints": [{"pitch_rad": 0.0, "yaw_rad": 0.25}],
                "clamped": [true],
                "speeds": [0.1],
                "misses": 2
            })
        );
    }

    #[test]
    fn error_shape() {
        let v: Value = serde_json::from_str(&ServerMessage::error(ErrorCode::Hold, "silent").to_json()).unwrap();
        assert_eq!(v, json!({"type": "error", "code": "hold", "detail": "silent"}));
    }

    #[test]
    fn unknown_type_rejected() {
        assert!(parse_client(r#"{"type":"hello"}"#).is_err());
        assert!(parse_client("not json").is_err());
    }
}
