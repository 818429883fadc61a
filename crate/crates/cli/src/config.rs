//! The TOML run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use har_core::features::DEFAULT_EPSILON;
use har_core::{ModelSpec, TrainConfig, WelchConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Everything a run depends on besides the dataset bytes.
///
/// Every field has a default, so a config file only needs the values it
/// changes. `har config` prints the complete effective document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Directory containing `train/` and `test/` in the UCI HAR layout.
    pub dataset_root: PathBuf,
    /// Where caches, checkpoints and reports are written.
    pub output_dir: PathBuf,
    /// Added to the standard deviation when z-scoring features.
    pub norm_epsilon: f64,
    pub welch: WelchConfig,
    pub train: TrainConfig,
    pub model: ModelSpec,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset_root: PathBuf::from("UCI HAR Dataset"),
            output_dir: PathBuf::from("out"),
            norm_epsilon: DEFAULT_EPSILON,
            welch: WelchConfig::default(),
            train: TrainConfig::default(),
            model: ModelSpec::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.check()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Cross-field checks that serde cannot express.
    pub fn check(&self) -> Result<(), CliError> {
        self.welch.check().map_err(|e| CliError::Config(format!("welch: {e}")))?;
        self.welch
            .check_for(har_core::WINDOW_LEN)
            .map_err(|e| CliError::Config(format!("welch: {e}")))?;
        self.train.check().map_err(|e| CliError::Config(format!("train: {e}")))?;
        self.model.validate().map_err(|e| CliError::Config(format!("model: {e}")))?;
        let expect = [
            ("streams", self.model.streams, har_core::NUM_STREAMS),
            ("freq_bins", self.model.freq_bins, har_core::WINDOW_LEN / 2 + 1),
            ("power_bins", self.model.power_bins, self.welch.bins()),
            ("classes", self.model.classes, har_core::NUM_CLASSES),
        ];
        for (name, got, want) in expect {
            if got != want {
                return Err(CliError::Config(format!("model.{name} is {got}, the features give {want}")));
            }
        }
        if !(self.norm_epsilon >= 0.0 && self.norm_epsilon.is_finite()) {
            return Err(CliError::Config("norm_epsilon must be finite and >= 0".into()));
        }
        Ok(())
    }
}
