//! Linear screw-terrain traction model.
//!
//! A terrain is described by two traction coefficients:
//!
//! * `kappa_axial`: fraction of the thread lead speed realized as axial
//!   propulsion (1 in media the thread can push against, 0 on hard ground).
//! * `slip`: radial slippage ratio; the screw rolls like a wheel at
//!   `(1 - slip) ω r_s`.
//!
//! `lateral_damping` is the fraction of sideways (radial) motion that survives
//! wall and ground resistance while the chain conforms to a corridor.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ChainGeometry, SegmentVelocity};

pub mod calibrate;

pub const IDEAL_SCREW_MEDIUM: &str = "ideal_screw_medium";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainProfile {
    pub name: String,
    pub kappa_axial: f64,
    pub slip: f64,
    pub lateral_damping: f64,
    #[serde(default)]
    pub provenance: String,
}

impl TerrainProfile {
    pub fn new(name: impl Into<String>, kappa_axial: f64, slip: f64, lateral_damping: f64) -> Result<Self> {
        let p = Self {
            name: name.into(),
            kappa_axial,
            slip,
            lateral_damping,
            provenance: String::new(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Full thread engagement, no wheel-like rolling.
    pub fn ideal_screw_medium() -> Self {
        Self {
            name: IDEAL_SCREW_MEDIUM.into(),
            kappa_axial: 1.0,
            slip: 1.0,
            lateral_damping: 0.0,
            provenance: "built-in: zero-slip axial bound of the screw thread".into(),
        }
    }

    /// Hard ground: no thread engagement, rolling with the given slip.
    pub fn rigid(slip: f64) -> Self {
        Self {
            name: "rigid".into(),
            kappa_axial: 0.0,
            slip,
            lateral_damping: 0.0,
            provenance: "built-in: wheel-like limit".into(),
        }
    }

    pub fn with_provenance(mut self, note: impl Into<String>) -> Self {
        self.provenance = note.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("kappa_axial", self.kappa_axial),
            ("slip", self.slip),
            ("lateral_damping", self.lateral_damping),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidTerrain(format!(
                    "{}: {field} = {v} outside [0, 1]",
                    self.name
                )));
            }
        }
        if self.kappa_axial == 0.0 && self.slip == 1.0 {
            return Err(Error::InvalidTerrain(format!(
                "{}: affords neither axial nor rolling propulsion",
                self.name
            )));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let p: Self = toml::from_str(text)?;
        p.validate()?;
        Ok(p)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()?).map_err(|e| Error::io(path, e))
    }
}

/// Resolves terrain names to profile files in a directory, with the ideal
/// screw medium always available.
#[derive(Debug, Clone)]
pub struct TerrainLibrary {
    dir: PathBuf,
}

impl TerrainLibrary {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Accepts a bare profile name or a path to a profile file.
    pub fn resolve(&self, name_or_path: &str) -> Result<TerrainProfile> {
        let as_path = Path::new(name_or_path);
        if as_path.extension().is_some() {
            return TerrainProfile::load(as_path);
        }
        let file = self.dir.join(format!("{name_or_path}.toml"));
        if file.exists() {
            return TerrainProfile::load(&file);
        }
        if name_or_path == IDEAL_SCREW_MEDIUM {
            return Ok(TerrainProfile::ideal_screw_medium());
        }
        Err(Error::io(
            file,
            std::io::Error::new(std::io::ErrorKind::NotFound, "terrain profile not found"),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Realized {
    pub velocity: SegmentVelocity,
    /// Screw speed actually applied after clamping to `±ω_max`.
    pub omega: f64,
    pub saturated: bool,
}

/// Velocity a screw spinning at `omega` gives segment `i` on this terrain.
pub fn realized_velocity(
    profile: &TerrainProfile,
    geom: &ChainGeometry,
    omega: f64,
    i: usize,
) -> Result<Realized> {
    if i == 0 || i > geom.n_segments {
        return Err(Error::SegmentIndex {
            index: i,
            n_segments: geom.n_segments,
        });
    }
    if !omega.is_finite() {
        return Err(Error::SimulationFault { segment: i });
    }
    let applied = omega.clamp(-geom.omega_max, geom.omega_max);
    let axial = geom.handedness(i).sign() * profile.kappa_axial * applied * geom.lead_per_radian();
    let radial = (1.0 - profile.slip) * applied * geom.screw_radius;
    Ok(Realized {
        velocity: SegmentVelocity::new(axial, radial),
        omega: applied,
        saturated: applied != omega,
    })
}
