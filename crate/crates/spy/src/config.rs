//! Pipeline configuration: one TOML file aggregating the preprocessing,
//! shape-provider, color-range, texture-table, classification, and fusion
//! settings. Unknown keys are rejected; relative paths resolve against the
//! config file's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::FusionConfig;
use crate::preprocess::PreprocessConfig;
use crate::scorers::{ColorRangeConfig, TextureLut};
use crate::shapedetect::{
    GeometricConfig, GeometricProvider, ReplayProvider, ShapeDetectionProvider,
};
use crate::syc::SycMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    /// Contour-based detector; runs standalone on any image.
    #[default]
    Geometric,
    /// Replays per-image detection files from `provider.path`.
    Replay,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    /// Detection directory for the replay provider.
    pub path: Option<PathBuf>,
    pub geometric: GeometricConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TextureConfig {
    /// Calibrated texture lookup table (JSON), required to classify.
    pub lut: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub preprocess: PreprocessConfig,
    pub provider: ProviderConfig,
    pub colors: ColorRangeConfig,
    pub texture: TextureConfig,
    pub syc: SycMode,
    pub fusion: FusionConfig,
}

impl PipelineConfig {
    /// Reads and validates a config file. Relative `provider.path` and
    /// `texture.lut` entries are rebased onto the file's directory.
    pub fn load(path: &Path) -> Result<PipelineConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|e| {
            Error::InvalidConfig(format!("{}: {}", path.display(), e.message()))
        })?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        if let Some(p) = &cfg.provider.path {
            if p.is_relative() {
                cfg.provider.path = Some(base.join(p));
            }
        }
        if let Some(p) = &cfg.texture.lut {
            if p.is_relative() {
                cfg.texture.lut = Some(base.join(p));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks every section and that referenced paths exist.
    pub fn validate(&self) -> Result<()> {
        self.preprocess.validate()?;
        self.provider.geometric.validate()?;
        self.colors.validate()?;
        self.syc.validate()?;
        self.fusion.validate()?;
        match self.provider.kind {
            ProviderKind::Replay => match &self.provider.path {
                None => {
                    return Err(Error::InvalidConfig(
                        "provider.kind = \"replay\" requires provider.path".to_string(),
                    ))
                }
                Some(p) if !p.is_dir() => {
                    return Err(Error::InvalidConfig(format!(
                        "provider.path {} is not a directory",
                        p.display()
                    )))
                }
                Some(_) => {}
            },
            ProviderKind::Geometric => {}
        }
        if let Some(p) = &self.texture.lut {
            if !p.is_file() {
                return Err(Error::InvalidConfig(format!(
                    "texture.lut {} is not a file",
                    p.display()
                )));
            }
        }
        Ok(())
    }

    pub fn build_provider(&self) -> Result<Box<dyn ShapeDetectionProvider + Send + Sync>> {
        match self.provider.kind {
            ProviderKind::Geometric => Ok(Box::new(GeometricProvider::new(
                self.provider.geometric.clone(),
            )?)),
            ProviderKind::Replay => {
                let path = self.provider.path.as_deref().ok_or_else(|| {
                    Error::InvalidConfig(
                        "provider.kind = \"replay\" requires provider.path".to_string(),
                    )
                })?;
                Ok(Box::new(ReplayProvider::open(path)?))
            }
        }
    }

    /// Loads the texture table; classification cannot run without one.
    pub fn load_lut(&self) -> Result<TextureLut> {
        let path = self.texture.lut.as_deref().ok_or_else(|| {
            Error::InvalidConfig("texture.lut is required to classify components".to_string())
        })?;
        TextureLut::load_json(path)
    }
}
