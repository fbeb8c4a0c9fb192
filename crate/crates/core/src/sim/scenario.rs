//! Scenario files: a mode, a terrain, and a time-stamped command schedule.
//!
//! ```toml
//! mode = "m_config"
//! terrain = "concrete"
//! duration = 20.0
//!
//! [[commands]]
//! t = 0.0
//! radius = 0.5
//! speed = 1.0
//! theta_m_deg = 140.0
//! ```

use serde::{Deserialize, Serialize};

use crate::control::TurnRadius;
use crate::error::{Error, Result};
use crate::kinematics::{ChainGeometry, Handedness, JointState};
use crate::mconfig::DEFAULT_THETA_M;
use crate::terrain::{TerrainLibrary, TerrainProfile};
use crate::tunneling::TunnelingCommand;

use super::corridor::CorridorSpec;
use super::fit::fit_turn_radius;
use super::{
    Mode, ModeCommand, PoseState, SimConfig, Simulation, StepConfig, TrajectoryLog, DEFAULT_DT,
    DEFAULT_JOINT_RATE_LIMIT, MAX_DT,
};

fn default_dt() -> f64 {
    DEFAULT_DT
}

fn default_rate() -> f64 {
    DEFAULT_JOINT_RATE_LIMIT
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub mode: Mode,
    pub terrain: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    #[serde(default = "default_rate")]
    pub joint_rate_limit: f64,
    #[serde(default)]
    pub incline_deg: f64,
    #[serde(default)]
    pub noise_sd: f64,
    /// Start with the joints already at the first command's pose.
    #[serde(default = "yes")]
    pub start_posed: bool,
    /// End a corridor run as soon as the head tip leaves the corridor.
    #[serde(default = "yes")]
    pub stop_at_exit: bool,
    #[serde(default)]
    pub geometry: GeometryOverrides,
    #[serde(default)]
    pub commands: Vec<ScheduledCommand>,
    #[serde(default)]
    pub corridor: Option<CorridorConfig>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryOverrides {
    pub n_segments: Option<usize>,
    pub half_link: Option<f64>,
    pub screw_radius: Option<f64>,
    pub lead_speed_max: Option<f64>,
    pub omega_max: Option<f64>,
    pub joint_limit_deg: Option<f64>,
    pub head_handedness: Option<Handedness>,
}

impl GeometryOverrides {
    pub fn apply(&self, base: ChainGeometry) -> Result<ChainGeometry> {
        let g = ChainGeometry {
            n_segments: self.n_segments.unwrap_or(base.n_segments),
            half_link: self.half_link.unwrap_or(base.half_link),
            screw_radius: self.screw_radius.unwrap_or(base.screw_radius),
            lead_speed_max: self.lead_speed_max.unwrap_or(base.lead_speed_max),
            omega_max: self.omega_max.unwrap_or(base.omega_max),
            joint_limit: self
                .joint_limit_deg
                .map_or(base.joint_limit, f64::to_radians),
            head_handedness: self.head_handedness.unwrap_or(base.head_handedness),
        };
        g.validate()
            .map_err(|e| Error::config("geometry", e.to_string()))?;
        Ok(g)
    }
}

/// A command that takes effect at time `t` and holds until the next one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledCommand {
    pub t: f64,
    /// Turning radius in meters; omitted or `inf` means straight.
    #[serde(default)]
    pub radius: Option<f64>,
    /// Screw speed as a fraction of full speed.
    pub speed: f64,
    #[serde(default)]
    pub theta_m_deg: Option<f64>,
}

impl ScheduledCommand {
    fn turn_radius(&self) -> TurnRadius {
        self.radius.map_or(TurnRadius::Straight, TurnRadius::from_meters)
    }

    pub fn to_mode_command(&self, mode: Mode) -> ModeCommand {
        match mode {
            Mode::Tunneling | Mode::Teleop => ModeCommand::Tunneling(TunnelingCommand {
                radius: self.turn_radius(),
                speed_fraction: self.speed,
            }),
            Mode::MConfig => ModeCommand::MConfig {
                theta_m: self
                    .theta_m_deg
                    .map_or(DEFAULT_THETA_M, f64::to_radians),
                radius: self.turn_radius(),
                base_speed: self.speed,
            },
            Mode::Conforming => ModeCommand::Conforming {
                speed_fraction: self.speed,
            },
        }
    }
}

/// Either a named preset or an explicit corridor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorConfig {
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub centerline: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub width: Option<f64>,
    #[serde(default)]
    pub incline_deg: Option<f64>,
    #[serde(default)]
    pub incline_start: Option<f64>,
}

pub const ZIGZAG_PRESET: &str = "zigzag_with_incline";

impl CorridorConfig {
    pub fn resolve(&self) -> Result<CorridorSpec> {
        let mut spec = match (&self.preset, &self.centerline) {
            (Some(p), None) if p == ZIGZAG_PRESET => CorridorSpec::zigzag_with_incline(),
            (Some(p), None) => {
                return Err(Error::config(
                    "corridor.preset",
                    format!("unknown preset `{p}` (known: {ZIGZAG_PRESET})"),
                ))
            }
            (None, Some(c)) => CorridorSpec {
                centerline: c.clone(),
                width: self
                    .width
                    .ok_or_else(|| Error::config("corridor.width", "required with a centerline"))?,
                incline_deg: 0.0,
                incline_start: 0.0,
            },
            (Some(_), Some(_)) => {
                return Err(Error::config(
                    "corridor",
                    "give either `preset` or `centerline`, not both",
                ))
            }
            (None, None) => {
                return Err(Error::config("corridor", "needs `preset` or `centerline`"))
            }
        };
        if let Some(w) = self.width {
            spec.width = w;
        }
        if let Some(a) = self.incline_deg {
            spec.incline_deg = a;
        }
        if let Some(s) = self.incline_start {
            spec.incline_start = s;
        }
        spec.validate()?;
        Ok(spec)
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn geometry(&self) -> Result<ChainGeometry> {
        self.geometry.apply(ChainGeometry::arcsnake())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::config("dt", format!("{} s outside (0, {MAX_DT}]", self.dt)));
        }
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(Error::config("duration", "must be a finite, non-negative time"));
        }
        if !(self.joint_rate_limit > 0.0) {
            return Err(Error::config("joint_rate_limit", "must be > 0"));
        }
        if !(self.noise_sd >= 0.0) {
            return Err(Error::config("noise_sd", "must be >= 0"));
        }
        if !(self.incline_deg.abs() < 90.0) {
            return Err(Error::config("incline_deg", "must be in (-90, 90)"));
        }
        let geom = self.geometry()?;
        let mut prev = f64::NEG_INFINITY;
        for (k, c) in self.commands.iter().enumerate() {
            let at = |field: &str| format!("commands[{k}].{field}");
            if !(c.t >= 0.0) || c.t < prev {
                return Err(Error::config(at("t"), "times must be >= 0 and non-decreasing"));
            }
            prev = c.t;
            if !c.speed.is_finite() {
                return Err(Error::config(at("speed"), "must be finite"));
            }
            if let Some(r) = c.radius {
                if r.is_nan() {
                    return Err(Error::config(at("radius"), "must be a number or inf"));
                }
            }
            if c.theta_m_deg.is_some() && self.mode != Mode::MConfig {
                return Err(Error::config(at("theta_m_deg"), "only used in m_config mode"));
            }
            c.to_mode_command(self.mode)
                .setpoints(&geom)
                .map_err(|e| Error::config(at(blame(&e)), e.to_string()))?;
        }
        match (self.mode, &self.corridor) {
            (Mode::Conforming, None) => Err(Error::config("corridor", "required in conforming mode")),
            (Mode::Conforming, Some(c)) => c.resolve().map(|_| ()),
            (_, Some(_)) => Err(Error::config("corridor", "only used in conforming mode")),
            _ => Ok(()),
        }
    }

    fn command_at(&self, t: f64) -> Option<&ScheduledCommand> {
        self.commands.iter().take_while(|c| c.t <= t + 1e-12).last()
    }
}

fn blame(e: &Error) -> &'static str {
    match e {
        Error::InfeasibleRadius { .. } => "radius",
        Error::AngleRange { .. } => "theta_m_deg",
        _ => "speed",
    }
}

/// Headline numbers of a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mode: Mode,
    pub terrain: String,
    pub duration: f64,
    pub steps: usize,
    /// Path length of the reference point (m).
    pub distance: f64,
    pub mean_speed: f64,
    pub swept_deg: f64,
    /// Circle fit over the part of the run after the last scheduled
    /// command; absent if that part sweeps too little heading.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fitted_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_rms_residual: Option<f64>,
    pub saturation_count: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_violations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reached_exit: Option<bool>,
}

impl Summary {
    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioRun {
    pub log: TrajectoryLog,
    pub summary: Summary,
    pub geometry: ChainGeometry,
}

pub fn run_scenario_with_library(cfg: &ScenarioConfig, lib: &TerrainLibrary) -> Result<ScenarioRun> {
    let terrain = lib.resolve(&cfg.terrain)?;
    run_scenario(cfg, &terrain)
}

pub fn run_scenario(cfg: &ScenarioConfig, terrain: &TerrainProfile) -> Result<ScenarioRun> {
    cfg.validate()?;
    let geom = cfg.geometry()?;
    let sim_cfg = SimConfig {
        dt: cfg.dt,
        seed: cfg.seed,
        step: StepConfig {
            joint_rate_limit: cfg.joint_rate_limit,
            incline_deg: cfg.incline_deg,
            noise_sd: cfg.noise_sd,
        },
    };
    let mut sim = match &cfg.corridor {
        Some(c) if cfg.mode == Mode::Conforming => {
            Simulation::in_corridor(geom.clone(), terrain.clone(), sim_cfg, c.resolve()?)?
        }
        _ => Simulation::new(
            geom.clone(),
            terrain.clone(),
            sim_cfg,
            PoseState::at_origin(JointState::straight(geom.n_joints()), cfg.mode),
        )?,
    };
    if cfg.start_posed && cfg.mode != Mode::Conforming {
        if let Some(first) = cfg.commands.first() {
            sim.pose_for(&first.to_mode_command(cfg.mode))?;
        }
    }
    let steps = (cfg.duration / cfg.dt).round() as usize;
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        let cmd = match cfg.command_at(t) {
            Some(c) => c.to_mode_command(cfg.mode),
            None => {
                // nothing scheduled yet: hold the pose with the screws off
                let mut c = ScheduledCommand {
                    t,
                    radius: None,
                    speed: 0.0,
                    theta_m_deg: None,
                }
                .to_mode_command(cfg.mode);
                if let ModeCommand::Tunneling(_) = c {
                    c = ModeCommand::Teleop {
                        deflections: sim.state().joints.deflections(),
                        speed_fraction: 0.0,
                    };
                }
                c
            }
        };
        sim.apply(&cmd)?;
        if cfg.stop_at_exit && sim.reached_exit() == Some(true) {
            break;
        }
    }
    let log = sim.log().clone();
    let elapsed = sim.time();
    let distance = log.path_length();
    // the radius describes the final command, not the run-up to it
    let last_change = cfg.commands.last().map_or(0.0, |c| c.t);
    let tail = TrajectoryLog {
        dt: log.dt,
        entries: log.entries.iter().filter(|e| e.t > last_change).cloned().collect(),
    };
    let fit = fit_turn_radius(&tail).ok();
    let summary = Summary {
        mode: cfg.mode,
        terrain: terrain.name.clone(),
        duration: elapsed,
        steps: log.len(),
        distance,
        mean_speed: if elapsed > 0.0 { distance / elapsed } else { 0.0 },
        swept_deg: log.swept_heading().to_degrees(),
        fitted_radius: fit.map(|f| f.radius),
        fit_rms_residual: fit.map(|f| f.rms_residual),
        saturation_count: sim.saturation_count(),
        wall_violations: sim.wall_violations(),
        reached_exit: sim.reached_exit(),
    };
    Ok(ScenarioRun {
        log,
        summary,
        geometry: geom,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MCONFIG: &str = r#"
mode = "m_config"
terrain = "rigid"
duration = 2.0

[[commands]]
t = 0.0
radius = 0.5
speed = 1.0
theta_m_deg = 140.0
"#;

    #[test]
    fn parses_and_runs() {
        let cfg = ScenarioConfig::from_toml_str(MCONFIG).unwrap();
        let run = run_scenario(&cfg, &TerrainProfile::rigid(0.3)).unwrap();
        assert_eq!(run.summary.steps, 200);
        assert!(run.summary.distance > 0.0);
        assert!(run.summary.to_toml_string().unwrap().contains("mean_speed"));
    }

    #[test]
    fn infinite_radius_is_straight() {
        let text = MCONFIG.replace("radius = 0.5", "radius = inf");
        let cfg = ScenarioConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.commands[0].turn_radius(), TurnRadius::Straight);
    }

    #[test]
    fn errors_name_the_field() {
        let text = MCONFIG.replace("theta_m_deg = 140.0", "theta_m_deg = 80.0");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("commands[0].theta_m_deg"), "{err}");

        let text = MCONFIG
            .replace("m_config", "tunneling")
            .replace("theta_m_deg = 140.0", "")
            .replace("radius = 0.5", "radius = 0.1");
        let err = ScenarioConfig::from_toml_str(&text).unwrap_err();
        assert!(err.to_string().contains("commands[0].radius"), "{err}");

        let err = ScenarioConfig::from_toml_str(&MCONFIG.replace("2.0", "2.0\ndt = 0.5")).unwrap_err();
        assert!(err.to_string().contains("`dt`"), "{err}");

        let err = ScenarioConfig::from_toml_str("mode = \"conforming\"\nterrain = \"x\"\nduration = 1.0")
            .unwrap_err();
        assert!(err.to_string().contains("`corridor`"), "{err}");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str(&format!("{MCONFIG}\nbogus = 1")).is_err());
    }

    #[test]
    fn no_commands_keeps_pose() {
        let cfg = ScenarioConfig::from_toml_str("mode = \"tunneling\"\nterrain = \"x\"\nduration = 1.0")
            .unwrap();
        let run = run_scenario(&cfg, &TerrainProfile::rigid(0.3)).unwrap();
        assert_eq!(run.summary.distance, 0.0);
    }
}
