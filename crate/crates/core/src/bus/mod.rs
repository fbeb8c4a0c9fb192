//! Daisy-chained segment controllers seen from the remote desktop.
//!
//! Round-trip time grows linearly with the number of nodes on the chain:
//! `rtt(n) = base_rtt + per_hop · n`. The remote control loop is feasible as
//! long as the round trip to the farthest node fits in one loop period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub mod network;
pub mod pid;

pub use network::{BusMessage, MessageKind, Payload, SegmentNode, TickOutput, VirtualBus};
pub use pid::{JointPlant, Pid, PidGains};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusModel {
    /// Round trip from the desktop to the first node (ms).
    pub base_rtt: f64,
    /// Added round-trip time per node (ms).
    pub per_hop: f64,
    pub loop_rate: f64,
    /// Standard deviation of a full round trip (ms).
    pub jitter_sd: f64,
}

impl Default for BusModel {
    fn default() -> Self {
        Self {
            base_rtt: 8.85,
            per_hop: 0.31,
            loop_rate: 75.0,
            jitter_sd: 0.11,
        }
    }
}

/// Result of [`BusModel::max_segments`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentBound {
    Bounded(usize),
    /// Latency does not grow with chain length and the base round trip fits.
    Unbounded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleRow {
    pub n: usize,
    pub rtt: f64,
    pub period: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleReport {
    pub loop_rate: f64,
    pub max_segments: SegmentBound,
    pub rows: Vec<ScheduleRow>,
}

impl ScheduleReport {
    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

impl BusModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_rtt > 0.0) {
            return Err(Error::config("bus.base_rtt", "must be > 0"));
        }
        if !(self.per_hop >= 0.0) {
            return Err(Error::config("bus.per_hop", "must be >= 0"));
        }
        if !(self.loop_rate > 0.0) {
            return Err(Error::config("bus.loop_rate", "must be > 0"));
        }
        if !(self.jitter_sd >= 0.0) {
            return Err(Error::config("bus.jitter_sd", "must be >= 0"));
        }
        Ok(())
    }

    /// Loop period in ms.
    pub fn period(&self) -> f64 {
        1000.0 / self.loop_rate
    }

    /// Mean round trip to the `n`-th node (ms).
    pub fn rtt(&self, n: usize) -> f64 {
        self.base_rtt + self.per_hop * n as f64
    }

    pub fn feasible(&self, n: usize) -> bool {
        self.rtt(n) < self.period()
    }

    /// Largest chain whose farthest round trip fits in one period.
    pub fn max_segments(&self) -> SegmentBound {
        let period = self.period();
        if self.base_rtt >= period {
            return SegmentBound::Bounded(0);
        }
        if self.per_hop == 0.0 {
            return SegmentBound::Unbounded;
        }
        // largest n with base + per_hop·n < period
        let mut n = ((period - self.base_rtt) / self.per_hop).floor() as usize;
        while n > 0 && !self.feasible(n) {
            n -= 1;
        }
        while self.feasible(n + 1) {
            n += 1;
        }
        SegmentBound::Bounded(n)
    }

    pub fn schedule(&self, max_n: usize) -> ScheduleReport {
        ScheduleReport {
            loop_rate: self.loop_rate,
            max_segments: self.max_segments(),
            rows: (1..=max_n)
                .map(|n| ScheduleRow {
                    n,
                    rtt: self.rtt(n),
                    period: self.period(),
                    feasible: self.feasible(n),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn default_round_trips() {
        let m = BusModel::default();
        assert_abs_diff_eq!(m.rtt(1), 9.16, epsilon = 1e-12);
        assert_abs_diff_eq!(m.rtt(14), 13.19, epsilon = 1e-12);
        assert!(m.feasible(14));
        assert!(!m.feasible(15));
        assert_eq!(m.max_segments(), SegmentBound::Bounded(14));
    }

    #[test]
    fn degenerate_bounds() {
        let flat = BusModel {
            per_hop: 0.0,
            ..BusModel::default()
        };
        assert_eq!(flat.max_segments(), SegmentBound::Unbounded);
        let fast = BusModel {
            loop_rate: 1000.0,
            ..BusModel::default()
        };
        assert_eq!(fast.max_segments(), SegmentBound::Bounded(0));
    }

    #[test]
    fn report_serializes() {
        let r = BusModel::default().schedule(16);
        assert_eq!(r.rows.iter().filter(|r| r.feasible).count(), 14);
        let text = r.to_toml_string().unwrap();
        assert!(text.contains("feasible"));
    }
}
