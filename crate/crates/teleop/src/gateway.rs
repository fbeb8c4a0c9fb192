//! Transport-independent gateway: one pilot, a virtual segment bus and a
//! simulation, all advanced in virtual time.
//!
//! Accepted frames are clamped and kept as the single pending command
//! (newest wins). At every bus period the pending command is forwarded to
//! the segment nodes; the simulation follows the joint actuators behind the
//! bus. Each bus period runs [`SUBSTEPS`] simulation steps.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use screwsim_core::bus::{BusModel, PidGains, VirtualBus};
use screwsim_core::kinematics::{angle_from_deflection, deflection};
use screwsim_core::sim::{SimConfig, StepCommand, StepConfig};
use screwsim_core::tunneling::{radius_for_angle, TunnelingCommand};
use screwsim_core::{ChainGeometry, JointState, Mode, ModeCommand, PoseState, Simulation, TerrainProfile, TurnRadius};

use crate::clamp::{ClampPolicy, ClampedFrame};
use crate::protocol::{ErrorCode, FrameMode, JointAngles, Pose, ServerMessage, StateUpdate, TeleopFrame};
use crate::TeleopError;

/// Simulation steps per bus period.
pub const SUBSTEPS: usize = 8;
pub const DEFAULT_HOLD_AFTER_MS: f64 = 500.0;

#[derive(Debug, Clone)]
pub struct GatewayConfig {
    pub geometry: ChainGeometry,
    pub terrain: TerrainProfile,
    pub policy: ClampPolicy,
    pub bus: BusModel,
    pub gains: PidGains,
    pub hold_after_ms: f64,
    pub seed: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        Self {
            geometry: ChainGeometry::arcsnake(),
            terrain: TerrainProfile::ideal_screw_medium(),
            policy: ClampPolicy::default(),
            bus: BusModel::default(),
            gains: PidGains::default(),
            hold_after_ms: DEFAULT_HOLD_AFTER_MS,
            seed: 0,
        }
    }
}

pub type PilotId = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Submit {
    /// Queued for the next bus period; `replaced` if it overwrote a frame
    /// that had not been forwarded yet.
    Accepted { replaced: bool },
    /// Sequence number did not increase.
    Dropped,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LatencyStats {
    pub count: u64,
    pub mean_ms: f64,
    pub max_ms: f64,
    pub last_ms: f64,
}

impl LatencyStats {
    fn record(&mut self, ms: f64) {
        self.count += 1;
        self.mean_ms += (ms - self.mean_ms) / self.count as f64;
        self.max_ms = self.max_ms.max(ms);
        self.last_ms = ms;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GatewayStats {
    pub forwarded: u64,
    pub dropped: u64,
    pub coalesced: u64,
    pub rejected: u64,
    pub misses: u64,
    pub hold: bool,
    /// Frame receipt to the state update confirming every node applied it.
    pub latency: LatencyStats,
    /// Largest |angle| ever sent to a node (rad).
    pub max_setpoint_rad: f64,
}

#[derive(Debug, Clone)]
struct Pending {
    frame: ClampedFrame,
    command: ModeCommand,
    pitch: Vec<f64>,
    received_ms: f64,
}

#[derive(Debug, Clone, Copy)]
struct Batch {
    sent_ms: f64,
    received_ms: f64,
    outstanding: usize,
}

pub struct Gateway {
    cfg: GatewayConfig,
    bus: VirtualBus,
    sim: Simulation,
    substeps: u64,
    dt_ms: f64,
    pilot: Option<PilotId>,
    next_pilot: PilotId,
    mode: FrameMode,
    last_seq: Option<u64>,
    last_input_ms: Option<f64>,
    pending: Option<Pending>,
    in_flight: Vec<Batch>,
    clamped: Vec<bool>,
    speeds: Vec<f64>,
    stats: GatewayStats,
}

impl Gateway {
    pub fn new(cfg: GatewayConfig) -> Result<Self, TeleopError> {
        cfg.geometry.validate()?;
        cfg.policy.validate(cfg.geometry.joint_limit)?;
        if !(cfg.hold_after_ms > 0.0) {
            return Err(TeleopError::Policy("hold timeout must be positive".into()));
        }
        let n = cfg.geometry.n_segments;
        let bus = VirtualBus::new(cfg.bus, n, cfg.gains, cfg.seed)?;
        let dt_ms = cfg.bus.period() / SUBSTEPS as f64;
        let sim = Simulation::new(
            cfg.geometry.clone(),
            cfg.terrain.clone(),
            SimConfig {
                dt: dt_ms / 1000.0,
                step: StepConfig::default(),
                seed: cfg.seed,
            },
            PoseState::at_origin(JointState::straight(cfg.geometry.n_joints()), Mode::Teleop),
        )?;
        Ok(Self {
            bus,
            sim,
            substeps: 0,
            dt_ms,
            pilot: None,
            next_pilot: 1,
            mode: FrameMode::Teleop,
            last_seq: None,
            last_input_ms: None,
            pending: None,
            in_flight: Vec::new(),
            clamped: vec![false; cfg.geometry.n_joints()],
            speeds: vec![0.0; n],
            stats: GatewayStats::default(),
            cfg,
        })
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn policy(&self) -> &ClampPolicy {
        &self.cfg.policy
    }

    /// Virtual time (ms).
    pub fn now(&self) -> f64 {
        self.substeps as f64 * self.dt_ms
    }

    pub fn period_ms(&self) -> f64 {
        self.cfg.bus.period()
    }

    pub fn mode(&self) -> FrameMode {
        self.mode
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            misses: self.bus.deadline_misses() as u64,
            ..self.stats
        }
    }

    pub fn bus(&self) -> &VirtualBus {
        &self.bus
    }

    pub fn simulation(&self) -> &Simulation {
        &self.sim
    }

    pub fn pilot(&self) -> Option<PilotId> {
        self.pilot
    }

    pub fn connect_pilot(&mut self) -> Result<PilotId, TeleopError> {
        if self.pilot.is_some() {
            return Err(TeleopError::Occupied);
        }
        let id = self.next_pilot;
        self.next_pilot += 1;
        self.pilot = Some(id);
        self.last_seq = None;
        self.last_input_ms = Some(self.now());
        Ok(id)
    }

    /// The nodes keep regulating to the last setpoints; the hold timer keeps
    /// running from the last frame.
    pub fn disconnect(&mut self, pilot: PilotId) {
        if self.pilot == Some(pilot) {
            self.pilot = None;
        }
    }

    pub fn submit(&mut self, pilot: PilotId, frame: &TeleopFrame) -> Result<Submit, TeleopError> {
        if self.pilot != Some(pilot) {
            return Err(TeleopError::NotPilot);
        }
        if self.last_seq.is_some_and(|last| frame.seq <= last) {
            self.stats.dropped += 1;
            return Ok(Submit::Dropped);
        }
        let pending = match self.prepare(frame) {
            Ok(p) => p,
            Err(e) => {
                self.stats.rejected += 1;
                return Err(e);
            }
        };
        self.last_seq = Some(frame.seq);
        self.last_input_ms = Some(self.now());
        self.stats.hold = false;
        if let Some(m) = frame.mode {
            self.mode = m;
        }
        let replaced = self.pending.replace(pending).is_some();
        self.stats.coalesced += replaced as u64;
        Ok(Submit::Accepted { replaced })
    }

    fn prepare(&self, frame: &TeleopFrame) -> Result<Pending, TeleopError> {
        let geom = &self.cfg.geometry;
        let clamped = self.cfg.policy.clamp(frame)?;
        if clamped.joints.len() != geom.n_joints() {
            return Err(TeleopError::BadFrame(format!(
                "expected {} joints, got {}",
                geom.n_joints(),
                clamped.joints.len()
            )));
        }
        let mode = frame.mode.unwrap_or(self.mode);
        let yaw = |k: usize| clamped.joints[k].yaw_rad;
        let (command, pitch) = match mode {
            FrameMode::Teleop => (
                ModeCommand::Teleop {
                    deflections: clamped.joints.iter().map(|j| j.yaw_rad).collect(),
                    speed_fraction: clamped.screw,
                },
                clamped.joints.iter().map(|j| j.pitch_rad).collect(),
            ),
            FrameMode::Tunneling => (
                ModeCommand::Tunneling(TunnelingCommand {
                    radius: radius_for_angle(geom, angle_from_deflection(yaw(0))),
                    speed_fraction: clamped.screw,
                }),
                vec![0.0; geom.n_joints()],
            ),
            FrameMode::MConfig => {
                let bend = yaw(0).abs();
                (
                    ModeCommand::MConfig {
                        theta_m: PI - bend,
                        radius: m_radius(geom, bend, yaw(1) / self.cfg.policy.yaw_rad),
                        base_speed: clamped.screw,
                    },
                    vec![0.0; geom.n_joints()],
                )
            }
        };
        Ok(Pending {
            frame: clamped,
            command,
            pitch,
            received_ms: self.now(),
        })
    }

    fn forward(&mut self, p: Pending) -> Result<(), TeleopError> {
        let geom = &self.cfg.geometry;
        let sp = p.command.setpoints(geom)?;
        let yaws: Vec<f64> = sp.joint_angles.iter().map(|a| deflection(*a)).collect();
        let limit = geom.joint_limit;
        let largest = yaws.iter().chain(&p.pitch).fold(0.0f64, |m, v| m.max(v.abs()));
        if !(largest <= limit) {
            return Err(TeleopError::Unsafe(format!(
                "setpoint {largest:.4} rad beyond joint limit {limit:.4} rad"
            )));
        }
        let n = geom.n_segments;
        for k in 1..=n {
            let (pitch, yaw) = if k >= 2 { (p.pitch[k - 2], yaws[k - 2]) } else { (0.0, 0.0) };
            self.bus.send_setpoint(k, pitch, yaw, sp.screw_omega[k - 1])?;
        }
        self.in_flight.push(Batch {
            sent_ms: self.bus.now(),
            received_ms: p.received_ms,
            outstanding: n,
        });
        self.sim.set_mode(p.command.mode());
        self.clamped = p.frame.joint_flags();
        self.stats.forwarded += 1;
        self.stats.max_setpoint_rad = self.stats.max_setpoint_rad.max(largest);
        Ok(())
    }

    fn substep(&mut self, out: &mut Vec<ServerMessage>) -> Result<(), TeleopError> {
        if self.substeps % SUBSTEPS as u64 == 0 {
            if let Some(p) = self.pending.take() {
                self.forward(p)?;
            }
        }
        let tick = self.bus.tick(self.dt_ms)?;
        self.bus.clear_trace();
        self.substeps += 1;
        let now = self.now();

        let mut confirmed = false;
        for reply in &tick.delivered {
            let Some(sent) = reply.request_time else { continue };
            if let Some(pos) = self.in_flight.iter().position(|b| (b.sent_ms - sent).abs() < 1e-9) {
                let batch = &mut self.in_flight[pos];
                batch.outstanding -= 1;
                if batch.outstanding == 0 {
                    self.stats.latency.record(now - batch.received_ms);
                    self.in_flight.remove(pos);
                    confirmed = true;
                }
            }
        }

        let targets = self.bus.joint_yaws().into_iter().map(angle_from_deflection).collect();
        let entry = self.sim.advance(&StepCommand {
            joint_targets: targets,
            screw_omega: self.bus.screw_omegas(),
        })?;
        self.speeds = entry.velocities.iter().map(|v| v.as_vec().norm()).collect();
        self.sim.clear_log();

        if confirmed || self.substeps % SUBSTEPS as u64 == 0 {
            out.push(ServerMessage::State(self.snapshot()));
        }
        if !self.stats.hold
            && self
                .last_input_ms
                .is_some_and(|t| now - t >= self.cfg.hold_after_ms - 1e-9)
        {
            self.stats.hold = true;
            out.push(ServerMessage::error(
                ErrorCode::Hold,
                format!("no input for {} ms; holding last setpoints", self.cfg.hold_after_ms),
            ));
        }
        Ok(())
    }

    /// Runs until virtual time reaches `t_ms`; returns the messages for all
    /// connected clients, in order.
    pub fn advance_to(&mut self, t_ms: f64) -> Result<Vec<ServerMessage>, TeleopError> {
        let mut out = Vec::new();
        while self.now() + 1e-9 < t_ms {
            self.substep(&mut out)?;
        }
        Ok(out)
    }

    /// Runs one full bus period.
    pub fn advance_period(&mut self) -> Result<Vec<ServerMessage>, TeleopError> {
        let mut out = Vec::new();
        for _ in 0..SUBSTEPS {
            self.substep(&mut out)?;
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> StateUpdate {
        let s = self.sim.state();
        StateUpdate {
            t_ms: self.now(),
            pose: Pose {
                x: s.x,
                y: s.y,
                psi: s.psi,
            },
            joints: self.bus.nodes()[1..]
                .iter()
                .map(|n| JointAngles::new(n.plants[0].angle, n.plants[1].angle))
                .collect(),
            clamped: self.clamped.clone(),
            speeds: self.speeds.clone(),
            misses: self.bus.deadline_misses() as u64,
        }
    }
}

/// Radius selected by the normalized second-joint input `u ∈ [-1, 1]`:
/// straight at 0, turning in place at ±1, with the M's span as the scale.
pub fn m_radius(geom: &ChainGeometry, bend: f64, u: f64) -> TurnRadius {
    if u == 0.0 {
        return TurnRadius::Straight;
    }
    let scale = 3.0 * geom.half_link * (bend / 2.0).cos();
    let u = u.clamp(-1.0, 1.0);
    TurnRadius::Finite(u.signum() * (1.0 / u.abs() - 1.0) * scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(seq: u64, yaws: [f64; 3], screw: f64, mode: Option<FrameMode>) -> TeleopFrame {
        TeleopFrame {
            seq,
            t_ms: 0.0,
            joints: yaws.iter().map(|y| JointAngles::new(0.0, *y)).collect(),
            screw,
            mode,
        }
    }

    #[test]
    fn second_pilot_is_refused() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let a = g.connect_pilot().unwrap();
        assert!(matches!(g.connect_pilot(), Err(TeleopError::Occupied)));
        g.disconnect(a);
        assert!(g.connect_pilot().is_ok());
    }

    #[test]
    fn stale_frames_dropped_and_counted() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        assert!(matches!(g.submit(p, &frame(12, [0.0; 3], 0.0, None)), Ok(Submit::Accepted { .. })));
        assert_eq!(g.submit(p, &frame(10, [0.0; 3], 0.0, None)).unwrap(), Submit::Dropped);
        assert_eq!(g.submit(p, &frame(12, [0.0; 3], 0.0, None)).unwrap(), Submit::Dropped);
        assert_eq!(g.stats().dropped, 2);
    }

    #[test]
    fn newest_frame_wins_within_a_period() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        g.submit(p, &frame(1, [0.3; 3], 0.0, None)).unwrap();
        assert_eq!(
            g.submit(p, &frame(2, [0.1; 3], 0.0, None)).unwrap(),
            Submit::Accepted { replaced: true }
        );
        g.advance_to(200.0).unwrap();
        assert_eq!(g.stats().forwarded, 1);
        assert!(g.bus().nodes()[1..].iter().all(|n| (n.target[1] - 0.1).abs() < 1e-12));
    }

    #[test]
    fn observers_cannot_pilot() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        assert!(matches!(g.submit(7, &frame(1, [0.0; 3], 0.0, None)), Err(TeleopError::NotPilot)));
    }

    #[test]
    fn wrong_joint_count_rejected() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        let mut f = frame(1, [0.0; 3], 0.0, None);
        f.joints.pop();
        assert!(matches!(g.submit(p, &f), Err(TeleopError::BadFrame(_))));
        assert_eq!(g.stats().rejected, 1);
        // the rejected seq is not consumed
        assert!(matches!(g.submit(p, &frame(1, [0.0; 3], 0.0, None)), Ok(Submit::Accepted { .. })));
    }

    #[test]
    fn hold_after_silence() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        g.submit(p, &frame(1, [0.2; 3], 0.5, None)).unwrap();
        let before = g.advance_to(480.0).unwrap();
        assert!(!before.iter().any(|m| matches!(m, ServerMessage::Error { .. })));
        g.disconnect(p);
        let after = g.advance_to(520.0).unwrap();
        let holds = after
            .iter()
            .filter(|m| matches!(m, ServerMessage::Error { code: ErrorCode::Hold, .. }))
            .count();
        assert_eq!(holds, 1);
        assert!(g.stats().hold);
        // setpoints are held, not zeroed
        assert!(g.bus().nodes()[1..].iter().all(|n| (n.target[1] - 0.2).abs() < 1e-12));
        assert!(g.bus().screw_omegas().iter().all(|w| *w != 0.0));
    }

    #[test]
    fn tunneling_mode_uses_common_deflection() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        g.submit(p, &frame(1, [0.4, -1.0, 1.0], 1.0, Some(FrameMode::Tunneling))).unwrap();
        g.advance_to(100.0).unwrap();
        for n in &g.bus().nodes()[1..] {
            assert!((n.target[1] - 0.4).abs() < 1e-12, "{:?}", n.target);
        }
        assert_eq!(g.mode(), FrameMode::Tunneling);
    }

    #[test]
    fn mconfig_mode_builds_the_m() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let p = g.connect_pilot().unwrap();
        let bend = 40f64.to_radians();
        g.submit(p, &frame(1, [bend, 0.0, 0.0], 1.0, Some(FrameMode::MConfig))).unwrap();
        // subsequent frames without a mode keep the M interpretation
        g.submit(p, &frame(2, [bend, 0.0, 0.0], 1.0, None)).unwrap();
        g.advance_to(100.0).unwrap();
        let targets: Vec<f64> = g.bus().nodes()[1..].iter().map(|n| n.target[1]).collect();
        assert!((targets[0] + bend).abs() < 1e-12);
        assert!((targets[1] - bend).abs() < 1e-12);
        assert!((targets[2] + bend).abs() < 1e-12);
    }

    #[test]
    fn m_radius_mapping() {
        let g = ChainGeometry::arcsnake();
        assert_eq!(m_radius(&g, 0.7, 0.0), TurnRadius::Straight);
        assert_eq!(m_radius(&g, 0.7, 1.0), TurnRadius::Finite(0.0));
        let TurnRadius::Finite(r) = m_radius(&g, 0.0, -0.5) else { panic!() };
        assert!((r + 3.0 * g.half_link).abs() < 1e-12);
    }

    #[test]
    fn states_at_bus_rate() {
        let mut g = Gateway::new(GatewayConfig::default()).unwrap();
        let msgs = g.advance_to(1000.0).unwrap();
        let states = msgs.iter().filter(|m| matches!(m, ServerMessage::State(_))).count();
        assert_eq!(states, 75);
    }
}
