//! Time-stepped planar locomotion simulator.
//!
//! Each step turns screw commands into per-segment ground velocities through
//! the terrain model, removes the part caused by joint motion, and recovers
//! the body twist as the rigid planar motion that best fits what remains.
//! The head pose is then advanced by that twist.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::Setpoints;
use crate::error::{Error, Result};
use crate::kinematics::{
    induced_unchecked, joint_unchecked, position_unchecked, rotate, BodyTwist, ChainGeometry, JointState,
    SegmentVelocity, Vec2,
};
use crate::mconfig::mconfig_setpoints;
use crate::terrain::{realized_velocity, TerrainProfile};
use crate::tunneling::{conforming_setpoints, tunneling_setpoints, TunnelingCommand};
use crate::control::TurnRadius;

pub mod corridor;
pub mod fit;
pub mod log;
pub mod scenario;

pub use corridor::{CorridorSpec, CorridorTrack};
pub use fit::{fit_rigid_twist, fit_turn_radius, TurnFit};
pub use log::{wrap_angle, LogEntry, TrajectoryLog};

use corridor::{conform, wall_violations};

/// Largest accepted integration step (s).
pub const MAX_DT: f64 = 0.1;
pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_JOINT_RATE_LIMIT: f64 = 1.0;

/// Deflections below this count as a straight joint.
const STRAIGHT_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Tunneling,
    MConfig,
    Conforming,
    Teleop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseState {
    /// World position of the head segment center (m).
    pub x: f64,
    pub y: f64,
    /// World heading of the head axis, wrapped to (-π, π].
    pub psi: f64,
    pub joints: JointState,
    pub mode: Mode,
}

impl PoseState {
    pub fn at_origin(joints: JointState, mode: Mode) -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            psi: 0.0,
            joints,
            mode,
        }
    }

    pub fn head_position(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }

    /// Maps a head-frame point to world coordinates.
    pub fn to_world(&self, p: Vec2) -> Vec2 {
        self.head_position() + rotate(p, self.psi)
    }

    /// Point whose path is used to measure turning radius: in
    /// M-configuration the midpoint of the two outer vertices of the M
    /// (the first and last joints), otherwise the head.
    ///
    /// The rigid fit of an M-configuration turn rotates the body about that
    /// point rather than about the centroid of the segment centers: the
    /// alternating tilt of the segments gives their rolling velocities a net
    /// component along the chain that shifts the center of rotation half a
    /// vertex width toward the outer joints.
    pub fn reference_point(&self, geom: &ChainGeometry) -> Vec2 {
        match self.mode {
            Mode::MConfig => {
                let cum = self.joints.cumulative_deflections();
                let l = geom.half_link;
                let first = joint_unchecked(l, &cum, 1);
                let last = joint_unchecked(l, &cum, geom.n_joints());
                self.to_world((first + last) / 2.0)
            }
            _ => self.head_position(),
        }
    }
}

/// Joint targets (π-is-straight) and raw screw speeds for one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCommand {
    pub joint_targets: Vec<f64>,
    pub screw_omega: Vec<f64>,
}

impl StepCommand {
    pub fn idle(state: &PoseState, n_segments: usize) -> Self {
        Self {
            joint_targets: state.joints.angles.clone(),
            screw_omega: vec![0.0; n_segments],
        }
    }
}

impl From<Setpoints> for StepCommand {
    fn from(sp: Setpoints) -> Self {
        Self {
            joint_targets: sp.joint_angles,
            screw_omega: sp.screw_omega,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub joint_rate_limit: f64,
    /// Uniform ground slope; realized speeds scale by its cosine.
    pub incline_deg: f64,
    /// Standard deviation of additive segment-velocity noise (m/s).
    pub noise_sd: f64,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            joint_rate_limit: DEFAULT_JOINT_RATE_LIMIT,
            incline_deg: 0.0,
            noise_sd: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: PoseState,
    /// Realized ground velocity of each segment in its own axes.
    pub velocities: Vec<SegmentVelocity>,
    pub screw_omega: Vec<f64>,
    /// Fitted head-frame twist applied over the step.
    pub twist: BodyTwist,
    pub saturated: usize,
}

/// Exact pose update for a body twist held constant over `dt`.
pub fn integrate_pose(x: f64, y: f64, psi: f64, twist: &BodyTwist, dt: f64) -> (f64, f64, f64) {
    let dpsi = twist.yaw_rate * dt;
    let local = if dpsi.abs() < 1e-12 {
        Vec2::new(twist.vx * dt, twist.vy * dt)
    } else {
        let (s, c) = dpsi.sin_cos();
        let w = twist.yaw_rate;
        Vec2::new(
            (s * twist.vx - (1.0 - c) * twist.vy) / w,
            ((1.0 - c) * twist.vx + s * twist.vy) / w,
        )
    };
    let d = rotate(local, psi);
    (x + d.x, y + d.y, wrap_angle(psi + dpsi))
}

/// Advances the simulation by one step.
pub fn step<R: Rng>(
    geom: &ChainGeometry,
    state: &PoseState,
    cmd: &StepCommand,
    terrain: &TerrainProfile,
    cfg: &StepConfig,
    dt: f64,
    rng: Option<&mut R>,
) -> Result<StepOutput> {
    if !(dt > 0.0 && dt <= MAX_DT) {
        return Err(Error::InvalidTimestep(dt));
    }
    let n = geom.n_segments;
    if cmd.joint_targets.len() != geom.n_joints() || cmd.screw_omega.len() != n {
        return Err(Error::InvalidGeometry(format!(
            "command has {} joint targets / {} screws for a {n}-segment chain",
            cmd.joint_targets.len(),
            cmd.screw_omega.len()
        )));
    }
    state.joints.validate(geom)?;

    let max_move = cfg.joint_rate_limit * dt;
    let mut new_angles = Vec::with_capacity(geom.n_joints());
    let mut rates = Vec::with_capacity(geom.n_joints());
    for (theta, target) in state.joints.angles.iter().zip(&cmd.joint_targets) {
        let lo = std::f64::consts::PI - geom.joint_limit;
        let hi = std::f64::consts::PI + geom.joint_limit;
        let goal = target.clamp(lo, hi);
        let next = theta + (goal - theta).clamp(-max_move, max_move);
        new_angles.push(next);
        rates.push((next - theta) / dt);
    }
    let moving = JointState {
        angles: state.joints.angles.clone(),
        rates: rates.clone(),
        pitch: state.joints.pitch.clone(),
    };
    let cum = moving.cumulative_deflections();
    let cum_rates = moving.cumulative_rates();
    let has_leverage = cum.windows(2).any(|w| (w[1] - w[0]).abs() > STRAIGHT_EPS);
    let incline = cfg.incline_deg.to_radians().cos();
    let noise = match rng {
        Some(r) if cfg.noise_sd > 0.0 => {
            let dist = Normal::new(0.0, cfg.noise_sd)
                .map_err(|e| Error::config("noise_sd", e.to_string()))?;
            Some((0..2 * n).map(|_| dist.sample(r)).collect::<Vec<_>>())
        }
        _ => None,
    };

    let mut velocities = Vec::with_capacity(n);
    let mut screws = Vec::with_capacity(n);
    let mut points = Vec::with_capacity(n);
    let mut body_velocities = Vec::with_capacity(n);
    let mut saturated = 0;
    for i in 1..=n {
        let r = realized_velocity(terrain, geom, cmd.screw_omega[i - 1], i)?;
        saturated += r.saturated as usize;
        let mut v = r.velocity;
        // A straight chain has no lever to react screw torque; the cores
        // spin instead of the screws rolling on the ground.
        if !has_leverage {
            v.radial = 0.0;
        }
        v.axial *= incline;
        v.radial *= incline;
        if let Some(noise) = &noise {
            v.axial += noise[2 * (i - 1)];
            v.radial += noise[2 * (i - 1) + 1];
        }
        let ground = rotate(v.as_vec(), -cum[i - 1]);
        let body = ground - induced_unchecked(geom.half_link, &cum, &cum_rates, i);
        if !(body.x.is_finite() && body.y.is_finite()) {
            return Err(Error::SimulationFault { segment: i });
        }
        velocities.push(v);
        screws.push(r.omega);
        points.push(position_unchecked(geom.half_link, &cum, i));
        body_velocities.push(body);
    }
    let (vx, vy, yaw_rate) = fit_rigid_twist(&points, &body_velocities);
    let twist = BodyTwist::head(vx, vy, yaw_rate);
    let (x, y, psi) = integrate_pose(state.x, state.y, state.psi, &twist, dt);
    Ok(StepOutput {
        state: PoseState {
            x,
            y,
            psi,
            joints: JointState {
                angles: new_angles,
                rates,
                pitch: state.joints.pitch.clone(),
            },
            mode: state.mode,
        },
        velocities,
        screw_omega: screws,
        twist,
        saturated,
    })
}

/// High-level command for one of the locomotion modes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeCommand {
    Tunneling(TunnelingCommand),
    MConfig {
        theta_m: f64,
        radius: TurnRadius,
        base_speed: f64,
    },
    /// Raw joint deflections (head joint first) and a tunneling-style screw
    /// throttle.
    Teleop {
        deflections: Vec<f64>,
        speed_fraction: f64,
    },
    Conforming {
        speed_fraction: f64,
    },
}

impl ModeCommand {
    pub fn mode(&self) -> Mode {
        match self {
            ModeCommand::Tunneling(_) => Mode::Tunneling,
            ModeCommand::MConfig { .. } => Mode::MConfig,
            ModeCommand::Teleop { .. } => Mode::Teleop,
            ModeCommand::Conforming { .. } => Mode::Conforming,
        }
    }

    /// Joint and screw setpoints; conforming mode holds only the head joint
    /// so its joint targets are meaningless and left straight.
    pub fn setpoints(&self, geom: &ChainGeometry) -> Result<Setpoints> {
        match self {
            ModeCommand::Tunneling(cmd) => tunneling_setpoints(geom, cmd),
            ModeCommand::MConfig {
                theta_m,
                radius,
                base_speed,
            } => mconfig_setpoints(geom, *theta_m, *radius, *base_speed),
            ModeCommand::Teleop {
                deflections,
                speed_fraction,
            } => {
                let joints = JointState::from_deflections(deflections);
                joints.validate(geom)?;
                Ok(Setpoints {
                    joint_angles: joints.angles,
                    screw_omega: equal_thrust(geom, *speed_fraction),
                    saturated: false,
                })
            }
            ModeCommand::Conforming { speed_fraction } => Ok(Setpoints {
                joint_angles: vec![std::f64::consts::PI; geom.n_joints()],
                screw_omega: equal_thrust(geom, *speed_fraction),
                saturated: false,
            }),
        }
    }
}

fn equal_thrust(geom: &ChainGeometry, fraction: f64) -> Vec<f64> {
    let f = fraction.clamp(-1.0, 1.0);
    (1..=geom.n_segments)
        .map(|i| geom.handedness(i).sign() * f * geom.omega_max)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub step: StepConfig,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: DEFAULT_DT,
            step: StepConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
struct ConformingRun {
    track: CorridorTrack,
    s_tip: f64,
    violations: usize,
}

/// A single simulation instance with its trajectory log.
#[derive(Debug, Clone)]
pub struct Simulation {
    geom: ChainGeometry,
    terrain: TerrainProfile,
    cfg: SimConfig,
    state: PoseState,
    rng: ChaCha8Rng,
    t: f64,
    steps: usize,
    log: TrajectoryLog,
    saturation_count: usize,
    conforming: Option<ConformingRun>,
}

impl Simulation {
    pub fn new(
        geom: ChainGeometry,
        terrain: TerrainProfile,
        cfg: SimConfig,
        initial: PoseState,
    ) -> Result<Self> {
        geom.validate()?;
        terrain.validate()?;
        initial.joints.validate(&geom)?;
        if !(cfg.dt > 0.0 && cfg.dt <= MAX_DT) {
            return Err(Error::InvalidTimestep(cfg.dt));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            log: TrajectoryLog::new(cfg.dt),
            geom,
            terrain,
            cfg,
            state: initial,
            t: 0.0,
            steps: 0,
            saturation_count: 0,
            conforming: None,
        })
    }

    /// Starts a corridor run with the chain lying on the entry of the
    /// centerline, tail at its first point.
    pub fn in_corridor(
        geom: ChainGeometry,
        terrain: TerrainProfile,
        cfg: SimConfig,
        corridor: CorridorSpec,
    ) -> Result<Self> {
        let track = CorridorTrack::new(corridor)?;
        let s_tip = 2.0 * geom.half_link * geom.n_segments as f64;
        let pose = conform(&track, s_tip, geom.n_segments, geom.half_link);
        let state = conformed_state(&geom, &pose)?;
        let mut sim = Self::new(geom, terrain, cfg, state)?;
        sim.conforming = Some(ConformingRun {
            track,
            s_tip,
            violations: 0,
        });
        Ok(sim)
    }

    pub fn geometry(&self) -> &ChainGeometry {
        &self.geom
    }

    pub fn terrain(&self) -> &TerrainProfile {
        &self.terrain
    }

    pub fn state(&self) -> &PoseState {
        &self.state
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn log(&self) -> &TrajectoryLog {
        &self.log
    }

    /// Drops recorded entries; long-running sessions call this to bound
    /// memory.
    pub fn clear_log(&mut self) {
        self.log.entries.clear();
    }

    pub fn into_log(self) -> TrajectoryLog {
        self.log
    }

    pub fn saturation_count(&self) -> usize {
        self.saturation_count
    }

    pub fn wall_violations(&self) -> Option<usize> {
        self.conforming.as_ref().map(|c| c.violations)
    }

    /// True once the head tip has reached the end of the corridor.
    pub fn reached_exit(&self) -> Option<bool> {
        self.conforming
            .as_ref()
            .map(|c| c.s_tip >= c.track.length() - 1e-9)
    }

    /// Overwrites joint angles and rates, e.g. from regulated hardware.
    pub fn set_joints(&mut self, joints: JointState) -> Result<()> {
        joints.validate(&self.geom)?;
        self.state.joints = joints;
        Ok(())
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.state.mode = mode;
    }

    /// Places the joints at a command's targets without simulating the move.
    pub fn pose_for(&mut self, cmd: &ModeCommand) -> Result<()> {
        let sp = cmd.setpoints(&self.geom)?;
        self.set_joints(JointState::from_angles(sp.joint_angles))?;
        self.state.mode = cmd.mode();
        Ok(())
    }

    pub fn apply(&mut self, cmd: &ModeCommand) -> Result<&LogEntry> {
        match cmd {
            ModeCommand::Conforming { speed_fraction } => self.advance_conforming(*speed_fraction),
            _ => {
                let sp = cmd.setpoints(&self.geom)?;
                self.state.mode = cmd.mode();
                self.saturation_count += sp.saturated as usize;
                self.advance(&sp.into())
            }
        }
    }

    pub fn advance(&mut self, cmd: &StepCommand) -> Result<&LogEntry> {
        let out = step(
            &self.geom,
            &self.state,
            cmd,
            &self.terrain,
            &self.cfg.step,
            self.cfg.dt,
            Some(&mut self.rng),
        )?;
        self.saturation_count += out.saturated;
        self.state = out.state;
        Ok(self.record(out.velocities, out.screw_omega))
    }

    fn record(&mut self, velocities: Vec<SegmentVelocity>, screw_omega: Vec<f64>) -> &LogEntry {
        self.steps += 1;
        self.t = self.steps as f64 * self.cfg.dt;
        self.log.entries.push(LogEntry {
            t: self.t,
            reference: self.state.reference_point(&self.geom),
            state: self.state.clone(),
            velocities,
            screw_omega,
        });
        self.log.entries.last().unwrap()
    }

    fn advance_conforming(&mut self, speed_fraction: f64) -> Result<&LogEntry> {
        let run = self
            .conforming
            .as_mut()
            .ok_or_else(|| Error::config("corridor", "conforming mode needs a corridor"))?;
        let geom = &self.geom;
        let pose = conform(&run.track, run.s_tip, geom.n_segments, geom.half_link);
        let omegas = equal_thrust(geom, speed_fraction);
        let slope = self.cfg.step.incline_deg.to_radians().cos();
        let mut velocities = Vec::with_capacity(geom.n_segments);
        let mut screws = Vec::with_capacity(geom.n_segments);
        let mut progress = 0.0;
        for i in 1..=geom.n_segments {
            let r = realized_velocity(&self.terrain, geom, omegas[i - 1], i)?;
            self.saturation_count += r.saturated as usize;
            let s_i = pose.center_arcs[i - 1];
            let factor = slope * run.track.incline_factor(s_i);
            let v = SegmentVelocity::new(r.velocity.axial * factor, r.velocity.radial * factor);
            // walls absorb most of the sideways rolling
            let local = Vec2::new(v.axial, self.terrain.lateral_damping * v.radial);
            let world = rotate(local, pose.headings[i - 1]);
            progress += world.dot(&run.track.tangent_at(s_i));
            if !progress.is_finite() {
                return Err(Error::SimulationFault { segment: i });
            }
            velocities.push(v);
            screws.push(r.omega);
        }
        progress /= geom.n_segments as f64;
        run.s_tip = (run.s_tip + progress * self.cfg.dt).min(run.track.length());
        let pose = conform(&run.track, run.s_tip, geom.n_segments, geom.half_link);
        run.violations += wall_violations(&run.track, &pose, geom.half_link);
        let mut state = conformed_state(geom, &pose)?;
        let dt = self.cfg.dt;
        state.joints.rates = state
            .joints
            .angles
            .iter()
            .zip(&self.state.joints.angles)
            .map(|(a, b)| (a - b) / dt)
            .collect();
        self.state = state;
        Ok(self.record(velocities, screws))
    }
}

/// Direction of `+x_m` (forward driving) in the head frame for a chain in
/// M-configuration: perpendicular to the line of segment centers, with the
/// head on the `+y_m` side.
pub fn mconfig_forward_axis(geom: &ChainGeometry, joints: &JointState) -> Vec2 {
    let cum = joints.cumulative_deflections();
    let head = position_unchecked(geom.half_link, &cum, 1);
    let tail = position_unchecked(geom.half_link, &cum, geom.n_segments);
    let y_m = (head - tail).normalize();
    Vec2::new(y_m.y, -y_m.x)
}

/// Steady-state speed of a posed chain under constant setpoints, signed
/// along the direction the mode drives: `+x_m` in M-configuration, the head
/// axis otherwise. Joints are placed at their targets before measuring.
pub fn steady_speed(
    geom: &ChainGeometry,
    terrain: &TerrainProfile,
    cmd: &ModeCommand,
) -> Result<f64> {
    let sp = cmd.setpoints(geom)?;
    let joints = JointState::from_angles(sp.joint_angles.clone());
    let state = PoseState::at_origin(joints.clone(), cmd.mode());
    let out = step::<ChaCha8Rng>(
        geom,
        &state,
        &sp.into(),
        terrain,
        &StepConfig::default(),
        DEFAULT_DT,
        None,
    )?;
    let reference = state.reference_point(geom);
    let v = out.twist.velocity_at(reference);
    let axis = match cmd.mode() {
        Mode::MConfig => mconfig_forward_axis(geom, &joints),
        _ => Vec2::new(1.0, 0.0),
    };
    Ok(v.dot(&axis))
}

fn conformed_state(geom: &ChainGeometry, pose: &corridor::ConformedPose) -> Result<PoseState> {
    // The head joint is steered to the corridor bend; the rest comply.
    let sp = conforming_setpoints(geom, pose.deflections[0])?;
    let mut angles = vec![sp.head_angle];
    angles.extend(pose.deflections[1..].iter().map(|d| std::f64::consts::PI - d));
    Ok(PoseState {
        x: pose.centers[0].x,
        y: pose.centers[0].y,
        psi: pose.headings[0],
        joints: JointState::from_angles(angles),
        mode: Mode::Conforming,
    })
}
