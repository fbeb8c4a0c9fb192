use std::io::Write;

use serde::Serialize;

use screwsim_core::terrain::calibrate::{calibrate_all, load_observations, CalibrationOptions};
use screwsim_core::{ChainGeometry, TerrainProfile};

use crate::config::Context;
use crate::{output, CalibrateArgs, CliError, Outcome};

pub const RESIDUALS_FILE: &str = "residuals.csv";

#[derive(Debug, Serialize)]
struct ResidualRow<'a> {
    surface: &'a str,
    label: &'a str,
    observed: f64,
    predicted: f64,
    residual: f64,
    excluded: bool,
}

/// Fits every surface in the observation file, writes one profile per
/// surface plus the two built-in limits, and a residual table.
pub fn calibrate(ctx: &Context, a: CalibrateArgs) -> Result<Outcome, CliError> {
    let d = &ctx.defaults.calibrate;
    let obs_path = a.observations.unwrap_or_else(|| ctx.path(&d.observations));
    let observations = load_observations(&obs_path)?;
    if observations.is_empty() {
        return Err(CliError::Config(format!("{}: no observations", obs_path.display())));
    }
    let opts = CalibrationOptions {
        fix_kappa: a.fix_kappa,
        lateral_damping: a.lateral_damping.unwrap_or(d.lateral_damping),
    };
    let cals = calibrate_all(&ChainGeometry::arcsnake(), &observations, &opts)?;

    let out_dir = a.out_dir.unwrap_or_else(|| ctx.terrain_dir());
    std::fs::create_dir_all(&out_dir).map_err(|e| CliError::io(&out_dir, e))?;
    let source = obs_path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned());
    for (surface, cal) in &cals {
        let profile = cal
            .profile
            .clone()
            .with_provenance(format!("{} [{source}]", cal.profile.provenance));
        profile.save(&out_dir.join(format!("{surface}.toml")))?;
    }
    TerrainProfile::ideal_screw_medium().save(&out_dir.join("ideal_screw_medium.toml"))?;
    TerrainProfile {
        name: "ideal_rigid".into(),
        ..TerrainProfile::rigid(0.0)
    }
    .save(&out_dir.join("ideal_rigid.toml"))?;

    let mut w = csv::Writer::from_writer(output(Some(&out_dir.join(RESIDUALS_FILE)))?);
    for (surface, cal) in &cals {
        for r in &cal.residuals {
            w.serialize(ResidualRow {
                surface,
                label: &r.label,
                observed: r.observed,
                predicted: r.predicted,
                residual: r.residual,
                excluded: r.excluded,
            })?;
        }
    }
    w.flush().map_err(|e| CliError::io(&out_dir, e))?;

    let mut report = String::from("surface        kappa_axial  slip    max|res|  rms\n");
    let mut worst = 0.0f64;
    for (surface, cal) in &cals {
        report.push_str(&format!(
            "{surface:<14} {:<12.4} {:<7.4} {:<9.4} {:.4}\n",
            cal.profile.kappa_axial, cal.profile.slip, cal.max_abs_residual, cal.rms_residual
        ));
        worst = worst.max(cal.max_abs_residual);
        for r in cal.residuals.iter().filter(|r| r.excluded) {
            report.push_str(&format!("  excluded {}: residual {:+.4} m/s\n", r.label, r.residual));
        }
    }
    let mut out = output(None)?;
    out.write_all(report.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| CliError::io("<stdout>".as_ref(), e))?;

    Ok(match a.tol {
        Some(tol) if worst > tol => Outcome::OutOfTolerance(format!("worst fitted residual {worst:.4} m/s > {tol}")),
        _ => Outcome::Pass,
    })
}
