//! Run configuration: one TOML file drives training, sweeps, and reports.
//!
//! Sections: `[io]` paths, `[env]` world construction, `[train]` training
//! (including its own training-time fault model under `[train.berr]`),
//! `[faults]` the fault model used by evaluation campaigns and map
//! sampling, `[platform]` the airframe, `[campaign]` sweep shape, plus a
//! top-level `seed`. Unknown keys anywhere are rejected, and a config
//! round-trips parse → serialize → parse losslessly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvConfig;
use crate::error::{Error, Result};
use crate::eval::{CampaignConfig, FaultPattern};
use crate::faults::{BerrConfig, VoltageCurve};
use crate::rl::TrainConfig;
use crate::sysmodel::UavPlatform;

/// Where inputs come from and outputs go.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct IoConfig {
    /// All command outputs land under this directory.
    pub output_dir: Option<PathBuf>,
    /// Fixed navigation map file; the world is generated from `[env]`
    /// when absent.
    pub map_file: Option<PathBuf>,
    /// Checkpoint written by training and read by sweeps; defaults under
    /// the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Voltage curve CSV; the bundled curve when absent.
    pub curve_file: Option<PathBuf>,
    /// Profiled fault-map file (required by on-device training).
    pub fault_map: Option<PathBuf>,
}

impl IoConfig {
    pub fn output_dir(&self) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// Platform source: a bundled preset name or a platform file, not both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlatformConfig {
    pub preset: Option<String>,
    pub file: Option<PathBuf>,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            preset: Some("crazyflie".into()),
            file: None,
        }
    }
}

impl PlatformConfig {
    pub fn resolve(&self) -> Result<UavPlatform> {
        match (&self.preset, &self.file) {
            (Some(_), Some(_)) => Err(Error::Config(
                "platform preset and platform file are mutually exclusive".into(),
            )),
            (Some(name), None) => UavPlatform::preset(name),
            (None, Some(path)) => UavPlatform::read_file(path),
            (None, None) => UavPlatform::preset("crazyflie"),
        }
    }

    /// A human-readable name for report metadata.
    pub fn label(&self) -> String {
        match (&self.preset, &self.file) {
            (Some(name), _) => name.clone(),
            (None, Some(path)) => path.display().to_string(),
            (None, None) => "crazyflie".into(),
        }
    }
}

/// Sweep shape; the fault model itself comes from `[faults]` and the
/// seed from the top level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CampaignSection {
    /// Voltage grid; the bundled curve's knots when absent.
    pub voltages: Option<Vec<f64>>,
    pub maps_per_voltage: u32,
    pub episodes_per_map: u32,
    pub pattern: FaultPattern,
    pub activation_faults: bool,
    /// Worker threads; 0 uses the rayon default.
    pub jobs: usize,
}

impl Default for CampaignSection {
    fn default() -> Self {
        CampaignSection {
            voltages: None,
            maps_per_voltage: 50,
            episodes_per_map: 20,
            pattern: FaultPattern::Random,
            activation_faults: false,
            jobs: 0,
        }
    }
}

/// The whole run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Global seed; every command derives its streams from it.
    pub seed: u64,
    pub io: IoConfig,
    pub env: EnvConfig,
    pub train: TrainConfig,
    pub faults: BerrConfig,
    pub platform: PlatformConfig,
    pub campaign: CampaignSection,
}

impl RunConfig {
    /// Parses TOML; `origin` anchors error messages (toml errors already
    /// carry line/column).
    pub fn parse(text: &str, origin: &str) -> Result<RunConfig> {
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("{origin}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn read_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml_string()).map_err(|e| Error::io(path, e))
    }

    /// Structural checks that need no file IO; commands validate paths
    /// before starting work.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if let Some(vs) = &self.campaign.voltages {
            if vs.is_empty() {
                return Err(Error::Config("campaign voltage grid is empty".into()));
            }
        }
        if self.campaign.maps_per_voltage == 0 || self.campaign.episodes_per_map == 0 {
            return Err(Error::Config(
                "maps per voltage and episodes per map must be positive".into(),
            ));
        }
        if let FaultPattern::ColumnAligned { concentration } = self.campaign.pattern {
            if !(concentration.is_finite() && concentration >= 1.0) {
                return Err(Error::Config(format!(
                    "column concentration {concentration} must be ≥ 1"
                )));
            }
        }
        if self.platform.preset.is_some() && self.platform.file.is_some() {
            return Err(Error::Config(
                "platform preset and platform file are mutually exclusive".into(),
            ));
        }
        Ok(())
    }

    /// Assembles the evaluation campaign: sweep shape from `[campaign]`,
    /// fault model from `[faults]`, seed from the top level, and the
    /// voltage grid defaulting to the curve's knots.
    pub fn campaign_config(&self, curve: &VoltageCurve) -> CampaignConfig {
        CampaignConfig {
            voltages: self
                .campaign
                .voltages
                .clone()
                .unwrap_or_else(|| curve.voltages()),
            maps_per_voltage: self.campaign.maps_per_voltage,
            episodes_per_map: self.campaign.episodes_per_map,
            pattern: self.campaign.pattern.clone(),
            activation_faults: self.campaign.activation_faults,
            seed: self.seed,
            berr: self.faults,
            jobs: self.campaign.jobs,
        }
    }
}
