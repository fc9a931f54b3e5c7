use std::path::{Path, PathBuf};

use adcsr::data::Split;
use adcsr::model::ModelConfig;
use adcsr::train::TrainConfig;
use adcsr::{Error, Result};
use serde::{Deserialize, Serialize};

pub const OUT_DIR_ENV: &str = "ADCSR_OUT_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Holds `<split>/HR/*.png`.
    pub root: PathBuf,
    pub split: Split,
    /// Whole-image validation split, if any.
    pub val_split: Option<Split>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig { root: PathBuf::from("data"), split: Split::Train, val_split: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub y_only: bool,
    /// Defaults to the scale.
    pub border_crop: Option<usize>,
    pub ensemble: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { y_only: true, border_crop: None, ensemble: false }
    }
}

/// One experiment: everything `train` and `eval` need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub output_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            output_dir: PathBuf::from("runs/default"),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            data: DataConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()
    }

    /// `flag`, else the environment override, else the file value.
    pub fn resolve_output_dir(&mut self, flag: Option<&Path>) {
        if let Some(dir) = flag {
            self.output_dir = dir.to_path_buf();
        } else if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.output_dir = PathBuf::from(dir);
        }
    }
}
