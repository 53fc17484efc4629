//! The JSON configuration read by `occface fit`.

use std::path::{Path, PathBuf};

use occface::fitter::FitConfig;
use occface::morphable::{make_synthetic_model, MorphableModel, SyntheticModelSpec};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult, InModule};

pub const SCHEMA_VERSION: u32 = 1;

/// Relative paths are resolved against the directory holding the config
/// file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    pub image: PathBuf,
    pub m_alpha: PathBuf,
    pub landmarks: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub model: ModelSource,
    /// Optimizer settings, loss weights and label-table overrides.
    #[serde(default)]
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    Synthetic(SyntheticModelSpec),
    File(PathBuf),
}

impl Default for ModelSource {
    fn default() -> Self {
        ModelSource::Synthetic(SyntheticModelSpec::default())
    }
}

impl ModelSource {
    pub fn load(&self) -> CliResult<MorphableModel> {
        match self {
            ModelSource::Synthetic(spec) => make_synthetic_model(spec).in_module("morphable"),
            ModelSource::File(path) => MorphableModel::load(path).in_module("morphable"),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("{}: {e}", path.display())))?;
        let mut cfg: PipelineConfig = serde_json::from_str(&text).map_err(|source| CliError::Config {
            path: path.to_path_buf(),
            source,
        })?;
        if cfg.schema_version != SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "{}: unsupported schema_version {} (expected {SCHEMA_VERSION})",
                path.display(),
                cfg.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve(base);
        cfg.fit.validate().in_module("fitter")?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        for p in [&mut self.image, &mut self.m_alpha, &mut self.landmarks, &mut self.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let ModelSource::File(p) = &mut self.model {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    /// Inputs must exist before any work starts.
    pub fn check_inputs(&self) -> CliResult<()> {
        let mut inputs = vec![("image", &self.image), ("m_alpha", &self.m_alpha), ("landmarks", &self.landmarks)];
        if let ModelSource::File(p) = &self.model {
            inputs.push(("model", p));
        }
        for (name, p) in inputs {
            if !p.is_file() {
                return Err(CliError::usage(format!("{name} file {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
