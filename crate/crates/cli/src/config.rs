//! Experiment defaults and where to find them.
//!
//! The config directory holds `defaults.toml`, the observations file and a
//! `terrain/` folder of profiles. It is `--config-dir`, else
//! `$SCREWSIM_CONFIG_DIR`, else `./data`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use screwsim_core::bus::BusModel;

use crate::CliError;

pub const CONFIG_DIR_ENV: &str = "SCREWSIM_CONFIG_DIR";
pub const DEFAULTS_FILE: &str = "defaults.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Defaults {
    pub seed: u64,
    pub dt: f64,
    pub tunneling: TunnelingDefaults,
    pub mconfig: MConfigDefaults,
    pub calibrate: CalibrateDefaults,
    pub bus: BusDefaults,
    pub serve: ServeDefaults,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TunnelingDefaults {
    pub radii: Vec<f64>,
    pub terrain: String,
    pub speed: f64,
    pub tol: f64,
    pub sweep_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MConfigDefaults {
    pub angles: Vec<f64>,
    pub terrain: String,
    pub duration: f64,
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateDefaults {
    pub observations: String,
    pub lateral_damping: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BusDefaults {
    pub base_rtt: f64,
    pub per_hop: f64,
    pub loop_rate: f64,
    pub jitter_sd: f64,
    pub max_n: usize,
}

impl BusDefaults {
    pub fn model(&self) -> BusModel {
        BusModel {
            base_rtt: self.base_rtt,
            per_hop: self.per_hop,
            loop_rate: self.loop_rate,
            jitter_sd: self.jitter_sd,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeDefaults {
    pub port: u16,
    pub device_limit_deg: f64,
    pub terrain: String,
}

impl Default for Defaults {
    fn default() -> Self {
        let bus = BusModel::default();
        Self {
            seed: 0,
            dt: 0.01,
            tunneling: TunnelingDefaults {
                radii: vec![0.18, 0.25, 0.43, 0.70, 1.00],
                terrain: "ideal_screw_medium".into(),
                speed: 1.0,
                tol: 0.02,
                sweep_deg: 360.0,
            },
            mconfig: MConfigDefaults {
                angles: vec![100.0, 120.0, 140.0, 160.0],
                terrain: "concrete".into(),
                duration: 10.0,
                speed: 1.0,
            },
            calibrate: CalibrateDefaults {
                observations: "observed_speeds.csv".into(),
                lateral_damping: 0.5,
            },
            bus: BusDefaults {
                base_rtt: bus.base_rtt,
                per_hop: bus.per_hop,
                loop_rate: bus.loop_rate,
                jitter_sd: bus.jitter_sd,
                max_n: 16,
            },
            serve: ServeDefaults {
                port: 8765,
                device_limit_deg: 80.0,
                terrain: "concrete".into(),
            },
        }
    }
}

/// Resolved config directory plus the defaults read from it.
#[derive(Debug, Clone)]
pub struct Context {
    pub dir: PathBuf,
    pub defaults: Defaults,
}

impl Context {
    pub fn resolve_dir(flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| std::env::var_os(CONFIG_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("data"))
    }

    /// Reads `defaults.toml` if the directory has one; built-in values
    /// otherwise (they mirror the shipped file).
    pub fn load(dir: PathBuf) -> Result<Self, CliError> {
        let file = dir.join(DEFAULTS_FILE);
        let defaults = if file.exists() {
            let text = std::fs::read_to_string(&file).map_err(|e| CliError::io(&file, e))?;
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", file.display())))?
        } else {
            Defaults::default()
        };
        Ok(Self { dir, defaults })
    }

    pub fn terrain_dir(&self) -> PathBuf {
        self.dir.join("terrain")
    }

    /// Relative paths in the defaults are relative to the config directory.
    pub fn path(&self, p: &str) -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.dir.join(p)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_defaults_match_built_in() {
        let shipped = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data");
        let ctx = Context::load(shipped).unwrap();
        assert_eq!(ctx.defaults, Defaults::default());
    }

    #[test]
    fn missing_defaults_file_falls_back() {
        let dir = tempfile::tempdir().unwrap();
        let ctx = Context::load(dir.path().to_path_buf()).unwrap();
        assert_eq!(ctx.defaults, Defaults::default());
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(DEFAULTS_FILE), "seed = 0\nbogus = 1\n").unwrap();
        assert!(matches!(Context::load(dir.path().to_path_buf()), Err(CliError::Config(_))));
    }
}
