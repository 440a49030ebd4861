//! The run configuration file: one TOML table per module. Unknown keys
//! are rejected.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{IltConfig, LayoutSpec};
use crate::error::{Error, Result};
use crate::litho::LithoConfig;
use crate::metrics::EpeConfig;
use crate::network::{DiscriminatorConfig, GeneratorConfig};
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub count: usize,
    pub layout: LayoutSpec,
    pub ilt: IltConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            count: 64,
            layout: LayoutSpec::default(),
            ilt: IltConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub pretrain: TrainConfig,
    pub finetune: TrainConfig,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            pretrain: TrainConfig {
                lambda_print: 0.0,
                lambda_adv: 0.0,
                adversarial: false,
                ..TrainConfig::default()
            },
            finetune: TrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub generator: GeneratorConfig,
    pub discriminator: DiscriminatorConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Explicit EPE settings; derived from the litho pitch when absent.
    pub epe: Option<EpeConfig>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub data: DataConfig,
    pub litho: LithoConfig,
    pub network: NetworkConfig,
    pub training: TrainingConfig,
    pub metrics: MetricsConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Writes the resolved configuration (all defaults filled in).
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_toml()).map_err(|e| Error::io(path, e))
    }

    /// Hex SHA-256 of the resolved configuration, first 16 digits.
    pub fn hash(&self) -> String {
        let d = Sha256::digest(self.to_toml().as_bytes());
        d[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn epe(&self) -> EpeConfig {
        self.metrics
            .epe
            .unwrap_or_else(|| EpeConfig::for_pitch(self.litho.pitch_nm))
    }

    pub fn validate(&self) -> Result<()> {
        self.data.layout.validate()?;
        self.litho.build()?;
        self.network.generator.validate()?;
        if self.network.generator.size != self.data.layout.size {
            return Err(Error::Config(format!(
                "generator size {} differs from layout tile size {}",
                self.network.generator.size, self.data.layout.size
            )));
        }
        self.training.pretrain.validate()?;
        self.training.finetune.validate()?;
        self.epe().validate()
    }
}
