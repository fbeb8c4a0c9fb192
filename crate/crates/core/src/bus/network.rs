//! Discrete-event model of the segment bus in virtual milliseconds.
//!
//! The desktop sends a SETPOINT frame to every node once per loop period.
//! A node answers each setpoint with a SENSOR frame and, independently,
//! runs its joint regulators on its own timer at the loop rate. Each link
//! (desktop→node k and node k→desktop) delivers in FIFO order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io::Write;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::pid::{JointPlant, Pid, PidGains};
use super::BusModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MessageKind {
    Setpoint,
    Sensor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Payload {
    Setpoint {
        /// Targets for the node's joint (deflections, rad).
        pitch: f64,
        yaw: f64,
        screw_omega: f64,
    },
    Sensor {
        pitch: f64,
        yaw: f64,
        screw_omega: f64,
        /// Heading estimate from the segment IMU (rad).
        orientation: f64,
        /// Joint motor currents (A).
        motor_current: [f64; 2],
        temperature_c: f64,
    },
}

impl Payload {
    pub fn kind(&self) -> MessageKind {
        match self {
            Payload::Setpoint { .. } => MessageKind::Setpoint,
            Payload::Sensor { .. } => MessageKind::Sensor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusMessage {
    pub id: u64,
    pub segment_id: usize,
    pub payload: Payload,
    pub send_time: f64,
    pub deliver_time: f64,
    /// For SENSOR replies: set when the round trip exceeded one loop period.
    pub deadline_missed: bool,
    /// For SENSOR replies: send time of the setpoint being answered.
    pub request_time: Option<f64>,
}

impl BusMessage {
    pub fn kind(&self) -> MessageKind {
        self.payload.kind()
    }
}

/// Per-segment controller board.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentNode {
    pub segment_id: usize,
    /// Regulators for the joint ahead of this segment; the head has none.
    pub regulators: Option<[Pid; 2]>,
    /// Pitch and yaw actuators (deflection, rad).
    pub plants: [JointPlant; 2],
    pub target: [f64; 2],
    pub screw_omega: f64,
    pub max_torque_seen: f64,
}

impl SegmentNode {
    pub fn new(segment_id: usize, gains: PidGains) -> Self {
        Self {
            segment_id,
            regulators: (segment_id >= 2).then(|| [Pid::new(gains), Pid::new(gains)]),
            plants: [JointPlant::default(); 2],
            target: [0.0; 2],
            screw_omega: 0.0,
            max_torque_seen: 0.0,
        }
    }

    fn regulate(&mut self, dt_s: f64) {
        if let Some(regs) = &mut self.regulators {
            for axis in 0..2 {
                let err = self.target[axis] - self.plants[axis].angle;
                let torque = regs[axis].update(err, dt_s);
                self.max_torque_seen = self.max_torque_seen.max(torque.abs());
                self.plants[axis].apply(torque, dt_s);
            }
        }
    }

    fn sensor_payload(&self) -> Payload {
        Payload::Sensor {
            pitch: self.plants[0].angle,
            yaw: self.plants[1].angle,
            screw_omega: self.screw_omega,
            orientation: 0.0,
            motor_current: [self.plants[0].rate.abs(), self.plants[1].rate.abs()],
            temperature_c: 25.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Direction {
    Down,
    Up,
}

#[derive(Debug)]
struct Pending(BusMessage);

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Pending {}
impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Pending {
    // Min-heap on (deliver_time, id).
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .0
            .deliver_time
            .total_cmp(&self.0.deliver_time)
            .then(other.0.id.cmp(&self.0.id))
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TickOutput {
    /// SENSOR frames that reached the desktop during the window.
    pub delivered: Vec<BusMessage>,
    /// Setpoints applied by nodes during the window.
    pub applied: usize,
    pub deadline_misses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub send_time: f64,
    pub deliver_time: f64,
    pub kind: MessageKind,
    pub segment_id: usize,
    pub deadline_missed: bool,
}

/// Desktop plus `n` nodes on a shared virtual clock.
#[derive(Debug)]
pub struct VirtualBus {
    model: BusModel,
    nodes: Vec<SegmentNode>,
    now: f64,
    next_node_tick: f64,
    next_id: u64,
    queue: BinaryHeap<Pending>,
    // one jitter stream per link so adding nodes leaves others unchanged
    link_rng: Vec<[ChaCha8Rng; 2]>,
    last_deliver: Vec<[f64; 2]>,
    leg_noise: Option<Normal<f64>>,
    trace: Vec<TraceRecord>,
    misses: usize,
}

impl VirtualBus {
    pub fn new(model: BusModel, n_segments: usize, gains: PidGains, seed: u64) -> Result<Self> {
        model.validate()?;
        if n_segments == 0 {
            return Err(Error::config("bus.n_segments", "must be >= 1"));
        }
        let leg_sd = model.jitter_sd / std::f64::consts::SQRT_2;
        let leg_noise = if leg_sd > 0.0 {
            Some(Normal::new(0.0, leg_sd).map_err(|e| Error::config("bus.jitter_sd", e.to_string()))?)
        } else {
            None
        };
        let link_rng = (1..=n_segments as u64)
            .map(|k| {
                let mk = |dir: u64| {
                    let mut r = ChaCha8Rng::seed_from_u64(seed);
                    r.set_stream(2 * k + dir);
                    r
                };
                [mk(0), mk(1)]
            })
            .collect();
        Ok(Self {
            model,
            nodes: (1..=n_segments).map(|k| SegmentNode::new(k, gains)).collect(),
            now: 0.0,
            next_node_tick: 0.0,
            next_id: 0,
            queue: BinaryHeap::new(),
            link_rng,
            last_deliver: vec![[f64::NEG_INFINITY; 2]; n_segments],
            leg_noise,
            trace: Vec::new(),
            misses: 0,
        })
    }

    pub fn model(&self) -> &BusModel {
        &self.model
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn nodes(&self) -> &[SegmentNode] {
        &self.nodes
    }

    pub fn trace(&self) -> &[TraceRecord] {
        &self.trace
    }

    /// Forgets recorded trace rows (long-running sessions).
    pub fn clear_trace(&mut self) {
        self.trace.clear();
    }

    pub fn deadline_misses(&self) -> usize {
        self.misses
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Current joint deflections (yaw), head joint first.
    pub fn joint_yaws(&self) -> Vec<f64> {
        self.nodes[1..].iter().map(|n| n.plants[1].angle).collect()
    }

    pub fn joint_yaw_rates(&self) -> Vec<f64> {
        self.nodes[1..].iter().map(|n| n.plants[1].rate).collect()
    }

    pub fn screw_omegas(&self) -> Vec<f64> {
        self.nodes.iter().map(|n| n.screw_omega).collect()
    }

    fn leg_latency(&mut self, segment: usize, dir: Direction) -> f64 {
        let mean = self.model.rtt(segment) / 2.0;
        let jitter = match &self.leg_noise {
            Some(d) => d.sample(&mut self.link_rng[segment - 1][dir as usize]),
            None => 0.0,
        };
        (mean + jitter).max(0.0)
    }

    fn post(&mut self, segment: usize, dir: Direction, payload: Payload, request_time: Option<f64>) -> f64 {
        let latency = self.leg_latency(segment, dir);
        let slot = &mut self.last_deliver[segment - 1][dir as usize];
        let deliver_time = (self.now + latency).max(*slot);
        *slot = deliver_time;
        let deadline_missed = request_time.is_some_and(|t| deliver_time - t > self.model.period());
        let msg = BusMessage {
            id: self.next_id,
            segment_id: segment,
            payload,
            send_time: self.now,
            deliver_time,
            deadline_missed,
            request_time,
        };
        self.next_id += 1;
        self.queue.push(Pending(msg));
        deliver_time
    }

    /// Queues a setpoint for segment `segment` (1-based) at the current time.
    /// Returns the scheduled delivery time.
    pub fn send_setpoint(&mut self, segment: usize, pitch: f64, yaw: f64, screw_omega: f64) -> Result<f64> {
        if segment == 0 || segment > self.nodes.len() {
            return Err(Error::SegmentIndex {
                index: segment,
                n_segments: self.nodes.len(),
            });
        }
        Ok(self.post(segment, Direction::Down, Payload::Setpoint { pitch, yaw, screw_omega }, None))
    }

    /// Sends one setpoint to every node. `yaws` holds joint deflections
    /// (head joint first) and is routed to the node behind each joint.
    pub fn broadcast(&mut self, yaws: &[f64], screw_omega: &[f64]) -> Result<()> {
        let n = self.nodes.len();
        if yaws.len() + 1 != n || screw_omega.len() != n {
            return Err(Error::InvalidGeometry(format!(
                "broadcast needs {} joint and {n} screw values",
                n - 1
            )));
        }
        for k in 1..=n {
            let yaw = if k >= 2 { yaws[k - 2] } else { 0.0 };
            self.send_setpoint(k, 0.0, yaw, screw_omega[k - 1])?;
        }
        Ok(())
    }

    /// Advances virtual time by `dt_ms`, delivering messages and running
    /// node regulation steps in time order.
    pub fn tick(&mut self, dt_ms: f64) -> Result<TickOutput> {
        if !(dt_ms > 0.0) {
            return Err(Error::InvalidTimestep(dt_ms / 1000.0));
        }
        let end = self.now + dt_ms;
        let period = self.model.period();
        let mut out = TickOutput::default();
        loop {
            let next_msg = self.queue.peek().map_or(f64::INFINITY, |p| p.0.deliver_time);
            let t = next_msg.min(self.next_node_tick);
            if t > end {
                break;
            }
            self.now = t;
            if next_msg <= self.next_node_tick {
                let msg = self.queue.pop().unwrap().0;
                self.trace.push(TraceRecord {
                    send_time: msg.send_time,
                    deliver_time: msg.deliver_time,
                    kind: msg.kind(),
                    segment_id: msg.segment_id,
                    deadline_missed: msg.deadline_missed,
                });
                match msg.payload {
                    Payload::Setpoint { pitch, yaw, screw_omega } => {
                        let node = &mut self.nodes[msg.segment_id - 1];
                        node.target = [pitch, yaw];
                        node.screw_omega = screw_omega;
                        let reply = node.sensor_payload();
                        out.applied += 1;
                        self.post(msg.segment_id, Direction::Up, reply, Some(msg.send_time));
                    }
                    Payload::Sensor { .. } => {
                        if msg.deadline_missed {
                            self.misses += 1;
                            out.deadline_misses += 1;
                        }
                        out.delivered.push(msg);
                    }
                }
            } else {
                for node in &mut self.nodes {
                    node.regulate(period / 1000.0);
                }
                self.next_node_tick += period;
            }
        }
        self.now = end;
        Ok(out)
    }

    /// Sends a setpoint echoing the node's current target and waits for the
    /// reply; returns the measured round trip (ms).
    pub fn ping(&mut self, segment: usize) -> Result<f64> {
        let node = &self.nodes.get(segment.wrapping_sub(1)).ok_or(Error::SegmentIndex {
            index: segment,
            n_segments: self.nodes.len(),
        })?;
        let (target, omega) = (node.target, node.screw_omega);
        let sent = self.now;
        self.send_setpoint(segment, target[0], target[1], omega)?;
        loop {
            let out = self.tick(1.0)?;
            if let Some(reply) = out.delivered.iter().find(|m| m.segment_id == segment) {
                return Ok(reply.deliver_time - sent);
            }
        }
    }

    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.trace {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }
}

/// `count` sequential round-trip measurements to node `n`.
pub fn sample_rtts(model: BusModel, n: usize, count: usize, seed: u64) -> Result<Vec<f64>> {
    let mut bus = VirtualBus::new(model, n, PidGains::default(), seed)?;
    (0..count).map(|_| bus.ping(n)).collect()
}
