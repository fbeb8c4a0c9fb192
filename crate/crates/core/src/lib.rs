//! Kinematics, controllers, traction model, simulator and segment bus for a
//! screw-propelled snake robot.
//!
//! Conventions used throughout:
//!
//! * Joint angles are measured so that π is straight; the deflection of a
//!   joint is `π - θ` and positive deflections bend toward `+y`.
//! * The head frame sits at the head segment's center with `+x` pointing
//!   forward along its axis. Segments are numbered `1..=n` from the head.
//! * Lengths are meters, angles radians, times seconds unless a name says
//!   otherwise (`_deg`, `_ms`).

pub mod bus;
pub mod control;
pub mod error;
pub mod kinematics;
pub mod mconfig;
pub mod sim;
pub mod terrain;
pub mod tunneling;

pub use control::{Setpoints, TurnRadius};
pub use error::{Error, Result};
pub use kinematics::{BodyTwist, ChainGeometry, Frame, Handedness, JointState, SegmentVelocity, Vec2};
pub use sim::{Mode, ModeCommand, PoseState, Simulation};
pub use terrain::{TerrainLibrary, TerrainProfile};
