use serde::{Deserialize, Serialize};

/// Continuous motor torque rating of the joint actuators (Nm).
pub const TORQUE_LIMIT: f64 = 2.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Symmetric output clamp (Nm).
    pub output_limit: f64,
}

impl Default for PidGains {
    fn default() -> Self {
        Self {
            kp: 8.0,
            ki: 0.0,
            kd: 0.0,
            output_limit: TORQUE_LIMIT,
        }
    }
}

/// Position regulator with clamped output. The integrator only accumulates
/// while the output is unsaturated or the error would pull it back in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pid {
    pub gains: PidGains,
    integral: f64,
    prev_error: Option<f64>,
}

impl Pid {
    pub fn new(gains: PidGains) -> Self {
        Self {
            gains,
            integral: 0.0,
            prev_error: None,
        }
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.prev_error = None;
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// One regulation update; `dt` in seconds.
    pub fn update(&mut self, error: f64, dt: f64) -> f64 {
        let g = self.gains;
        let derivative = match self.prev_error {
            Some(prev) if dt > 0.0 => (error - prev) / dt,
            _ => 0.0,
        };
        self.prev_error = Some(error);
        let trial = self.integral + error * dt;
        let unclamped = g.kp * error + g.ki * trial + g.kd * derivative;
        let out = unclamped.clamp(-g.output_limit, g.output_limit);
        let winding_up = out != unclamped && unclamped.signum() == error.signum();
        if !winding_up {
            self.integral = trial;
        }
        out
    }
}

impl Default for Pid {
    fn default() -> Self {
        Self::new(PidGains::default())
    }
}

/// Joint actuator stand-in: speed proportional to torque, speed-limited.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JointPlant {
    pub angle: f64,
    pub rate: f64,
    /// rad/s per Nm.
    pub gain: f64,
    /// rad/s.
    pub rate_limit: f64,
}

impl Default for JointPlant {
    fn default() -> Self {
        Self {
            angle: 0.0,
            rate: 0.0,
            gain: 1.0,
            rate_limit: 1.0,
        }
    }
}

impl JointPlant {
    pub fn apply(&mut self, torque: f64, dt: f64) {
        self.rate = (self.gain * torque).clamp(-self.rate_limit, self.rate_limit);
        self.angle += self.rate * dt;
    }
}
