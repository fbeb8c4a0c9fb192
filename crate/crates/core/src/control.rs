use serde::{Deserialize, Serialize};

/// Commanded turning radius. Positive radii turn toward `+y` of the body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnRadius {
    Straight,
    Finite(f64),
}

impl TurnRadius {
    /// Maps `f64::INFINITY` (either sign) to `Straight`.
    pub fn from_meters(r: f64) -> Self {
        if r.is_infinite() {
            TurnRadius::Straight
        } else {
            TurnRadius::Finite(r)
        }
    }

    pub fn meters(&self) -> f64 {
        match self {
            TurnRadius::Straight => f64::INFINITY,
            TurnRadius::Finite(r) => *r,
        }
    }
}

/// Joint targets (π-is-straight) and per-screw angular velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    pub joint_angles: Vec<f64>,
    pub screw_omega: Vec<f64>,
    /// Set when the requested screw speeds had to be scaled down.
    pub saturated: bool,
}
