//! Teleoperation gateway for the screw-propelled snake simulator.
//!
//! A pilot streams joint frames from a scaled replica of the robot (or any
//! client speaking [`protocol`]); the gateway clamps them to the device's
//! joint box, forwards them over the virtual segment bus and streams state
//! back. [`gateway::Gateway`] is the transport-free core, driven in virtual
//! time; [`server`] exposes it over WebSocket.

pub mod clamp;
pub mod gateway;
pub mod protocol;
pub mod server;

pub use clamp::{ClampPolicy, ClampedFrame};
pub use gateway::{Gateway, GatewayConfig, GatewayStats, PilotId, Submit};
pub use protocol::{ClientMessage, ErrorCode, FrameMode, JointAngles, ServerMessage, StateUpdate, TeleopFrame};

#[derive(Debug, thiserror::Error)]
pub enum TeleopError {
    #[error("rejected frame: {0}")]
    BadFrame(String),
    #[error("invalid clamp policy: {0}")]
    Policy(String),
    #[error("another pilot is connected")]
    Occupied,
    #[error("only the connected pilot may send frames")]
    NotPilot,
    #[error("refusing unsafe setpoint: {0}")]
    Unsafe(String),
    #[error(transparent)]
    Core(#[from] screwsim_core::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl TeleopError {
    pub fn code(&self) -> ErrorCode {
        match self {
            TeleopError::BadFrame(_) => ErrorCode::BadFrame,
            TeleopError::Occupied => ErrorCode::Occupied,
            TeleopError::NotPilot => ErrorCode::NotPilot,
            TeleopError::Policy(_) | TeleopError::Unsafe(_) | TeleopError::Core(_) | TeleopError::Io(_) => {
                ErrorCode::Internal
            }
        }
    }

    pub fn to_message(&self) -> ServerMessage {
        ServerMessage::error(self.code(), self.to_string())
    }
}
