use std::fs;
use std::path::{Path, PathBuf};

use gaitgen_core::data::io::SpeedUnit;
use gaitgen_core::data::{DEFAULT_GRID_SIZE, DEFAULT_TREADMILL_LIMIT_KMH};
use gaitgen_core::GaitError;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Run configuration as written in a TOML file. Relative paths are resolved
/// against the directory of the file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfigFile {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub geometry_left: Option<PathBuf>,
    pub geometry_right: Option<PathBuf>,
    pub speed_unit: Option<SpeedUnit>,
    pub grid_size: Option<usize>,
    pub treadmill_limit_kmh: Option<f64>,
    pub seed: Option<u64>,
    pub output: Option<PathBuf>,
}

/// Fully resolved configuration. `None` paths fall back to built-in
/// defaults: canonical layout, default templates, default geometry (its
/// mirror image on the left) and `<output>/bank.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub dataset: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    pub bank: Option<PathBuf>,
    pub geometry_left: Option<PathBuf>,
    pub geometry_right: Option<PathBuf>,
    pub speed_unit: SpeedUnit,
    pub grid_size: usize,
    pub treadmill_limit_kmh: f64,
    pub seed: u64,
    pub output: PathBuf,
}

impl RunConfigFile {
    pub fn load(path: &Path) -> Result<RunConfigFile, CliError> {
        let text = fs::read_to_string(path).map_err(|_| GaitError::MissingFile(path.to_path_buf()))?;
        let mut cfg: RunConfigFile =
            toml::from_str(&text).map_err(|e| GaitError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.dataset,
            &mut cfg.schema,
            &mut cfg.templates,
            &mut cfg.bank,
            &mut cfg.geometry_left,
            &mut cfg.geometry_right,
            &mut cfg.output,
        ] {
            if let Some(rel) = p.take() {
                *p = Some(base.join(rel));
            }
        }
        Ok(cfg)
    }

    /// Flags win over the file.
    pub fn merge(self, flags: RunConfigFile) -> RunConfig {
        RunConfig {
            dataset: flags.dataset.or(self.dataset),
            schema: flags.schema.or(self.schema),
            templates: flags.templates.or(self.templates),
            bank: flags.bank.or(self.bank),
            geometry_left: flags.geometry_left.or(self.geometry_left),
            geometry_right: flags.geometry_right.or(self.geometry_right),
            speed_unit: flags.speed_unit.or(self.speed_unit).unwrap_or(SpeedUnit::KmPerHour),
            grid_size: flags.grid_size.or(self.grid_size).unwrap_or(DEFAULT_GRID_SIZE),
            treadmill_limit_kmh: flags
                .treadmill_limit_kmh
                .or(self.treadmill_limit_kmh)
                .unwrap_or(DEFAULT_TREADMILL_LIMIT_KMH),
            seed: flags.seed.or(self.seed).unwrap_or(1),
            output: flags.output.or(self.output).unwrap_or_else(|| PathBuf::from("out")),
        }
    }
}

impl RunConfig {
    pub fn bank_path(&self) -> PathBuf {
        self.bank.clone().unwrap_or_else(|| self.output.join("bank.json"))
    }

    pub fn dataset_root(&self) -> Result<&Path, CliError> {
        self.dataset
            .as_deref()
            .ok_or_else(|| CliError::Usage("no dataset: set `dataset` in the config or pass --dataset".into()))
    }

    /// Every configured input file must exist.
    pub fn check_inputs(&self) -> Result<(), CliError> {
        let files = [&self.schema, &self.templates, &self.geometry_left, &self.geometry_right];
        for p in files.into_iter().flatten() {
            if !p.is_file() {
                return Err(GaitError::MissingFile(p.clone()).into());
            }
        }
        if let Some(d) = &self.dataset {
            if !d.is_dir() {
                return Err(GaitError::MissingFile(d.clone()).into());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

pub fn parse_speed_unit(s: &str) -> Result<SpeedUnit, String> {
    match s {
        "km/h" | "kmh" => Ok(SpeedUnit::KmPerHour),
        "m/s" | "ms" => Ok(SpeedUnit::MeterPerSecond),
        other => Err(format!("unknown speed unit {other:?}, expected km/h or m/s")),
    }
}
