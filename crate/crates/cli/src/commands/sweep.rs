use serde::Serialize;

use screwsim_core::sim::scenario::{run_scenario, ScenarioConfig, ScheduledCommand};
use screwsim_core::sim::{fit_turn_radius, wrap_angle, SimConfig};
use screwsim_core::terrain::TerrainLibrary;
use screwsim_core::tunneling::{heading_angle, TunnelingCommand};
use screwsim_core::{ChainGeometry, JointState, Mode, ModeCommand, PoseState, Simulation, TerrainProfile, TurnRadius};

use super::par_map;
use crate::config::Context;
use crate::{output, CliError, Outcome, SweepMConfigArgs, SweepTunnelingArgs};

/// Longest simulated time spent on one radius before giving up (s).
const MAX_SWEEP_SECONDS: f64 = 600.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TunnelingRow {
    #[serde(rename = "R_cmd")]
    pub r_cmd: f64,
    /// Commanded joint angle (deg; 180 is straight).
    pub theta_deg: Option<f64>,
    #[serde(rename = "R_fit")]
    pub r_fit: Option<f64>,
    /// |R_fit − |R_cmd|| / |R_cmd|.
    pub err: Option<f64>,
    pub status: String,
}

impl TunnelingRow {
    fn failed(r_cmd: f64, theta_deg: Option<f64>, status: String) -> Self {
        Self {
            r_cmd,
            theta_deg,
            r_fit: None,
            err: None,
            status,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TunnelingSweep {
    pub speed: f64,
    pub sweep_deg: f64,
    pub dt: f64,
    pub seed: u64,
    pub tol: f64,
}

pub fn tunneling_row(geom: &ChainGeometry, terrain: &TerrainProfile, r: f64, opts: &TunnelingSweep) -> TunnelingRow {
    let theta = match heading_angle(geom, TurnRadius::Finite(r)) {
        Ok(t) => t,
        Err(e) => return TunnelingRow::failed(r, None, format!("infeasible: {e}")),
    };
    let theta_deg = Some(theta.to_degrees());
    let cmd = ModeCommand::Tunneling(TunnelingCommand {
        radius: TurnRadius::Finite(r),
        speed_fraction: opts.speed,
    });
    let fit = (|| {
        let mut sim = Simulation::new(
            geom.clone(),
            terrain.clone(),
            SimConfig {
                dt: opts.dt,
                seed: opts.seed,
                ..SimConfig::default()
            },
            PoseState::at_origin(JointState::straight(geom.n_joints()), Mode::Tunneling),
        )?;
        sim.pose_for(&cmd)?;
        let target = opts.sweep_deg.to_radians();
        let mut psi = sim.state().psi;
        let mut swept = 0.0f64;
        for _ in 0..(MAX_SWEEP_SECONDS / opts.dt) as usize {
            sim.apply(&cmd)?;
            let p = sim.state().psi;
            swept += wrap_angle(p - psi);
            psi = p;
            if swept.abs() >= target {
                break;
            }
        }
        fit_turn_radius(sim.log())
    })();
    match fit {
        Ok(f) => {
            let err = (f.radius - r.abs()).abs() / r.abs();
            TunnelingRow {
                r_cmd: r,
                theta_deg,
                r_fit: Some(f.radius),
                err: Some(err),
                status: if err <= opts.tol { "ok" } else { "out_of_tolerance" }.into(),
            }
        }
        Err(e) => TunnelingRow::failed(r, theta_deg, format!("error: {e}")),
    }
}

fn check_speed(speed: f64) -> Result<(), CliError> {
    if !(speed.abs() <= 1.0 && speed != 0.0) {
        return Err(CliError::Usage(format!("--speed {speed} must be in [-1, 1] and non-zero")));
    }
    Ok(())
}

pub fn tunneling(ctx: &Context, a: SweepTunnelingArgs) -> Result<Outcome, CliError> {
    let d = &ctx.defaults;
    let radii = a.radii.unwrap_or_else(|| d.tunneling.radii.clone());
    if radii.is_empty() {
        return Err(CliError::Usage("--radii needs at least one radius".into()));
    }
    if let Some(bad) = radii.iter().find(|r| !r.is_finite() || **r == 0.0) {
        return Err(CliError::Usage(format!("radius {bad} must be finite and non-zero")));
    }
    let opts = TunnelingSweep {
        speed: a.speed.unwrap_or(d.tunneling.speed),
        sweep_deg: a.sweep_deg.unwrap_or(d.tunneling.sweep_deg),
        dt: a.dt.unwrap_or(d.dt),
        seed: a.seed.unwrap_or(d.seed),
        tol: a.tol.unwrap_or(d.tunneling.tol),
    };
    check_speed(opts.speed)?;
    if !(opts.sweep_deg >= 90.0 && opts.sweep_deg.is_finite()) {
        return Err(CliError::Usage("--sweep-deg must be at least 90 for a circle fit".into()));
    }
    if !(opts.tol >= 0.0) {
        return Err(CliError::Usage("--tol must be >= 0".into()));
    }
    let terrain = TerrainLibrary::new(ctx.terrain_dir()).resolve(a.terrain.as_deref().unwrap_or(&d.tunneling.terrain))?;
    let geom = ChainGeometry::arcsnake();

    let rows = par_map(&radii, |r| tunneling_row(&geom, &terrain, *r, &opts));
    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(a.out.as_deref().unwrap_or("<stdout>".as_ref()), e))?;

    let bad: Vec<String> = rows
        .iter()
        .filter(|r| r.status != "ok")
        .map(|r| format!("R={}: {}", r.r_cmd, r.status))
        .collect();
    Ok(if bad.is_empty() {
        Outcome::Pass
    } else {
        Outcome::OutOfTolerance(bad.join("; "))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MConfigRow {
    pub theta_m_deg: f64,
    pub mean_speed: f64,
    pub fitted_radius: Option<f64>,
}

pub fn mconfig_scenario(
    terrain: &str,
    theta_m_deg: f64,
    radius: Option<f64>,
    speed: f64,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<ScenarioConfig, CliError> {
    let text = format!(
        "mode = \"m_config\"\nterrain = {}\nduration = {duration:?}\ndt = {dt:?}\nseed = {seed}\n",
        toml::Value::from(terrain)
    );
    let cfg = ScenarioConfig {
        commands: vec![ScheduledCommand {
            t: 0.0,
            radius,
            speed,
            theta_m_deg: Some(theta_m_deg),
        }],
        ..ScenarioConfig::from_toml_str(&text)?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn mconfig(ctx: &Context, a: SweepMConfigArgs) -> Result<Outcome, CliError> {
    let d = &ctx.defaults;
    let angles = a.angles.unwrap_or_else(|| d.mconfig.angles.clone());
    if angles.is_empty() {
        return Err(CliError::Usage("--angles needs at least one angle".into()));
    }
    if let Some(bad) = angles.iter().find(|t| !(**t > 90.0 && **t <= 180.0)) {
        return Err(CliError::Usage(format!("theta_m {bad} deg outside (90, 180]")));
    }
    let speed = a.speed.unwrap_or(d.mconfig.speed);
    check_speed(speed)?;
    let duration = a.duration.unwrap_or(d.mconfig.duration);
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(CliError::Usage("--duration must be positive".into()));
    }
    if a.radius.is_some_and(|r| r.is_nan()) {
        return Err(CliError::Usage("--radius must be a number".into()));
    }
    let terrain = TerrainLibrary::new(ctx.terrain_dir()).resolve(a.terrain.as_deref().unwrap_or(&d.mconfig.terrain))?;
    let dt = a.dt.unwrap_or(d.dt);
    let seed = a.seed.unwrap_or(d.seed);
    let configs = angles
        .iter()
        .map(|t| mconfig_scenario(&terrain.name, *t, a.radius, speed, duration, dt, seed))
        .collect::<Result<Vec<_>, _>>()?;

    let rows = par_map(&configs, |cfg| {
        run_scenario(cfg, &terrain).map(|run| MConfigRow {
            theta_m_deg: cfg.commands[0].theta_m_deg.unwrap_or_default(),
            mean_speed: run.summary.mean_speed,
            fitted_radius: run.summary.fitted_radius,
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let mut w = csv::Writer::from_writer(output(a.out.as_deref())?);
    for row in &rows {
        w.serialize(row)?;
    }
    w.flush().map_err(|e| CliError::io(a.out.as_deref().unwrap_or("<stdout>".as_ref()), e))?;
    Ok(Outcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts() -> TunnelingSweep {
        TunnelingSweep {
            speed: 1.0,
            sweep_deg: 360.0,
            dt: 0.01,
            seed: 0,
            tol: 0.02,
        }
    }

    #[test]
    fn below_minimum_radius_is_an_infeasible_row() {
        let row = tunneling_row(&ChainGeometry::arcsnake(), &TerrainProfile::ideal_screw_medium(), 0.10, &opts());
        assert!(row.status.starts_with("infeasible"), "{}", row.status);
        assert_eq!(row.r_fit, None);
    }

    #[test]
    fn feasible_radius_is_realized() {
        let row = tunneling_row(&ChainGeometry::arcsnake(), &TerrainProfile::ideal_screw_medium(), 0.43, &opts());
        assert_eq!(row.status, "ok");
        assert!(row.err.unwrap() < 1e-6);
    }

    #[test]
    fn terrain_names_are_quoted() {
        let cfg = mconfig_scenario("we\"ird", 140.0, None, 1.0, 1.0, 0.01, 0).unwrap();
        assert_eq!(cfg.terrain, "we\"ird");
    }
}
