//! Fitting terrain coefficients to measured straight-line speeds.
//!
//! At a fixed pose and throttle the simulated steady speed is linear in the
//! two traction coefficients:
//!
//! ```text
//! v = κ_a · S_a + (1 - s_t) · S_r
//! ```
//!
//! where `S_a` is the speed the pose would reach on pure thread engagement
//! and `S_r` the speed on pure rolling. Both basis speeds come from the
//! simulator, so the fit always agrees with what a scenario run produces.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::control::TurnRadius;
use crate::error::{Error, Result};
use crate::kinematics::ChainGeometry;
use crate::sim::{steady_speed, ModeCommand};
use crate::tunneling::TunnelingCommand;

use super::TerrainProfile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    MConfig,
    Tunneling,
}

/// One measured straight-line speed at full throttle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub surface: String,
    pub mode: ObservationMode,
    /// M angle in degrees; ignored for tunneling rows.
    #[serde(default)]
    pub theta_m_deg: Option<f64>,
    pub speed_mps: f64,
    /// Rows kept for reporting but left out of the fit.
    #[serde(default)]
    pub exclude: bool,
}

impl Observation {
    fn command(&self) -> Result<ModeCommand> {
        Ok(match self.mode {
            ObservationMode::MConfig => ModeCommand::MConfig {
                theta_m: self
                    .theta_m_deg
                    .ok_or_else(|| {
                        Error::config(
                            format!("{}.theta_m_deg", self.surface),
                            "required for m_config rows",
                        )
                    })?
                    .to_radians(),
                radius: TurnRadius::Straight,
                base_speed: 1.0,
            },
            ObservationMode::Tunneling => ModeCommand::Tunneling(TunnelingCommand {
                radius: TurnRadius::Straight,
                speed_fraction: 1.0,
            }),
        })
    }

    fn label(&self) -> String {
        match (self.mode, self.theta_m_deg) {
            (ObservationMode::MConfig, Some(t)) => format!("m_config@{t}deg"),
            (ObservationMode::MConfig, None) => "m_config".into(),
            (ObservationMode::Tunneling, _) => "tunneling".into(),
        }
    }
}

pub fn read_observations<R: Read>(input: R) -> Result<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        out.push(row?);
    }
    Ok(out)
}

pub fn load_observations(path: &Path) -> Result<Vec<Observation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_observations(file)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOptions {
    /// Hold κ_a at this value and fit only the slip.
    pub fix_kappa: Option<f64>,
    /// Copied into fitted profiles; not identifiable from speed data.
    pub lateral_damping: f64,
}

impl Default for CalibrationOptions {
    fn default() -> Self {
        Self {
            fix_kappa: None,
            lateral_damping: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub label: String,
    pub observed: f64,
    pub predicted: f64,
    pub residual: f64,
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub profile: TerrainProfile,
    pub residuals: Vec<Residual>,
    /// Largest |residual| over the rows used in the fit.
    pub max_abs_residual: f64,
    pub rms_residual: f64,
}

/// Basis speeds `(S_a, S_r)` for one observation's pose.
pub fn basis_speeds(geom: &ChainGeometry, obs: &Observation) -> Result<(f64, f64)> {
    let cmd = obs.command()?;
    let thread = TerrainProfile {
        name: "basis_thread".into(),
        kappa_axial: 1.0,
        slip: 1.0,
        lateral_damping: 0.0,
        provenance: String::new(),
    };
    let rolling = TerrainProfile {
        name: "basis_rolling".into(),
        kappa_axial: 0.0,
        slip: 0.0,
        lateral_damping: 0.0,
        provenance: String::new(),
    };
    Ok((
        steady_speed(geom, &thread, &cmd)?,
        steady_speed(geom, &rolling, &cmd)?,
    ))
}

/// Least squares over `rows = (a, b, v)` for `min Σ (k a + u b - v)²` with
/// `k, u ∈ [0, 1]`.
fn box_lsq(rows: &[(f64, f64, f64)]) -> (f64, f64) {
    let sse = |k: f64, u: f64| rows.iter().map(|(a, b, v)| (k * a + u * b - v).powi(2)).sum::<f64>();
    // best value of one variable with the other fixed
    let solve_u = |k: f64| {
        let num: f64 = rows.iter().map(|(a, b, v)| b * (v - k * a)).sum();
        let den: f64 = rows.iter().map(|(_, b, _)| b * b).sum();
        if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 }
    };
    let solve_k = |u: f64| {
        let num: f64 = rows.iter().map(|(a, b, v)| a * (v - u * b)).sum();
        let den: f64 = rows.iter().map(|(a, _, _)| a * a).sum();
        if den > 0.0 { (num / den).clamp(0.0, 1.0) } else { 0.0 }
    };
    let (saa, sab, sbb) = rows.iter().fold((0.0, 0.0, 0.0), |(p, q, r), (a, b, _)| {
        (p + a * a, q + a * b, r + b * b)
    });
    let (sav, sbv) = rows
        .iter()
        .fold((0.0, 0.0), |(p, q), (a, b, v)| (p + a * v, q + b * v));
    let det = saa * sbb - sab * sab;
    let mut candidates = Vec::new();
    if det.abs() > 1e-15 {
        let k = (sav * sbb - sbv * sab) / det;
        let u = (saa * sbv - sab * sav) / det;
        if (0.0..=1.0).contains(&k) && (0.0..=1.0).contains(&u) {
            return (k, u);
        }
    }
    for edge in [0.0, 1.0] {
        candidates.push((edge, solve_u(edge)));
        candidates.push((solve_k(edge), edge));
    }
    candidates
        .into_iter()
        .min_by(|x, y| sse(x.0, x.1).total_cmp(&sse(y.0, y.1)))
        .unwrap()
}

/// Fits one surface's profile from its observations (other surfaces'
/// rows are ignored).
pub fn calibrate_surface(
    geom: &ChainGeometry,
    surface: &str,
    observations: &[Observation],
    opts: &CalibrationOptions,
) -> Result<Calibration> {
    let rows: Vec<&Observation> = observations.iter().filter(|o| o.surface == surface).collect();
    let mut basis = Vec::with_capacity(rows.len());
    for o in &rows {
        basis.push(basis_speeds(geom, o)?);
    }
    let used: Vec<(f64, f64, f64)> = rows
        .iter()
        .zip(&basis)
        .filter(|(o, _)| !o.exclude)
        .map(|(o, (a, b))| (*a, *b, o.speed_mps))
        .collect();

    let (kappa, rolling) = match opts.fix_kappa {
        Some(k) => {
            if !(0.0..=1.0).contains(&k) {
                return Err(Error::config("fix_kappa", "must lie in [0, 1]"));
            }
            let den: f64 = used.iter().map(|(_, b, _)| b * b).sum();
            if used.is_empty() || den == 0.0 {
                return Err(Error::Underdetermined {
                    missing: format!("{surface}: need at least 1 m_config observation with the slip free"),
                });
            }
            let num: f64 = used.iter().map(|(a, b, v)| b * (v - k * a)).sum();
            (k, (num / den).clamp(0.0, 1.0))
        }
        None => {
            check_rank(surface, &used)?;
            box_lsq(&used)
        }
    };

    let profile = TerrainProfile {
        name: surface.to_owned(),
        kappa_axial: kappa,
        slip: 1.0 - rolling,
        lateral_damping: opts.lateral_damping,
        provenance: format!(
            "fitted to {} straight-speed observations ({} excluded)",
            used.len(),
            rows.len() - used.len()
        ),
    };
    profile.validate()?;

    let residuals: Vec<Residual> = rows
        .iter()
        .zip(&basis)
        .map(|(o, (a, b))| {
            let predicted = kappa * a + rolling * b;
            Residual {
                label: o.label(),
                observed: o.speed_mps,
                predicted,
                residual: predicted - o.speed_mps,
                excluded: o.exclude,
            }
        })
        .collect();
    let fitted: Vec<f64> = residuals.iter().filter(|r| !r.excluded).map(|r| r.residual).collect();
    let max_abs_residual = fitted.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    let rms_residual = (fitted.iter().map(|r| r * r).sum::<f64>() / fitted.len() as f64).sqrt();
    Ok(Calibration {
        profile,
        residuals,
        max_abs_residual,
        rms_residual,
    })
}

fn check_rank(surface: &str, used: &[(f64, f64, f64)]) -> Result<()> {
    let (saa, sab, sbb) = used.iter().fold((0.0, 0.0, 0.0), |(p, q, r), (a, b, _)| {
        (p + a * a, q + a * b, r + b * b)
    });
    let scale = (saa * sbb).max(f64::MIN_POSITIVE);
    if used.len() < 2 || (saa * sbb - sab * sab) / scale < 1e-10 {
        return Err(Error::Underdetermined {
            missing: format!(
                "{surface}: {} usable observation(s); fitting kappa_axial and slip needs at least \
                 2 at distinct poses (another m_config angle or a tunneling speed)",
                used.len()
            ),
        });
    }
    Ok(())
}

/// Calibrates every surface present in the observations, in name order.
pub fn calibrate_all(
    geom: &ChainGeometry,
    observations: &[Observation],
    opts: &CalibrationOptions,
) -> Result<BTreeMap<String, Calibration>> {
    let mut surfaces: Vec<&str> = observations.iter().map(|o| o.surface.as_str()).collect();
    surfaces.sort_unstable();
    surfaces.dedup();
    surfaces
        .into_iter()
        .map(|s| Ok((s.to_owned(), calibrate_surface(geom, s, observations, opts)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const CONCRETE: &str = "surface,mode,theta_m_deg,speed_mps,exclude
concrete,m_config,100,0.20,false
concrete,m_config,120,0.22,false
concrete,m_config,140,0.24,false
concrete,m_config,160,0.25,false
";

    fn obs(surface: &str, theta: f64, v: f64) -> Observation {
        Observation {
            surface: surface.into(),
            mode: ObservationMode::MConfig,
            theta_m_deg: Some(theta),
            speed_mps: v,
            exclude: false,
        }
    }

    #[test]
    fn parses_csv() {
        let rows = read_observations(CONCRETE.as_bytes()).unwrap();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2], obs("concrete", 140.0, 0.24));
    }

    #[test]
    fn concrete_row_fits() {
        let g = ChainGeometry::arcsnake();
        let rows = read_observations(CONCRETE.as_bytes()).unwrap();
        let c = calibrate_surface(&g, "concrete", &rows, &CalibrationOptions::default()).unwrap();
        assert!(c.max_abs_residual < 0.02, "{c:?}");
        assert_eq!(c.residuals.len(), 4);
    }

    #[test]
    fn recovers_synthetic_profile() {
        let g = ChainGeometry::arcsnake();
        let (kappa, slip) = (0.3, 0.42);
        let rows: Vec<Observation> = [100.0, 120.0, 140.0, 160.0]
            .iter()
            .map(|&t| {
                let o = obs("synthetic", t, 0.0);
                let (a, b) = basis_speeds(&g, &o).unwrap();
                obs("synthetic", t, kappa * a + (1.0 - slip) * b)
            })
            .collect();
        let c = calibrate_surface(&g, "synthetic", &rows, &CalibrationOptions::default()).unwrap();
        assert_abs_diff_eq!(c.profile.slip, slip, epsilon = 1e-6);
        assert_abs_diff_eq!(c.profile.kappa_axial, kappa, epsilon = 1e-6);
    }

    #[test]
    fn single_observation_is_underdetermined() {
        let g = ChainGeometry::arcsnake();
        let rows = vec![obs("x", 140.0, 0.2)];
        let err = calibrate_surface(&g, "x", &rows, &CalibrationOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Underdetermined { .. }));
        let fixed = CalibrationOptions {
            fix_kappa: Some(0.0),
            ..Default::default()
        };
        assert!(calibrate_surface(&g, "x", &rows, &fixed).is_ok());
    }

    #[test]
    fn excluded_rows_reported_not_fitted() {
        let g = ChainGeometry::arcsnake();
        let mut rows = read_observations(CONCRETE.as_bytes()).unwrap();
        rows.push(Observation {
            exclude: true,
            ..obs("concrete", 170.0, 5.0)
        });
        let c = calibrate_surface(&g, "concrete", &rows, &CalibrationOptions::default()).unwrap();
        assert!(c.max_abs_residual < 0.02);
        assert!(c.residuals.last().unwrap().excluded);
    }
}
