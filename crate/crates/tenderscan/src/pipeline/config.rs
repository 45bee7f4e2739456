//! TOML run configuration mirroring the CLI.

use crate::fetcher::SourceConfig;
use crate::imagecore::Threshold;
use crate::neuralnet::{Arch, TrainConfig, WidthPreset};
use crate::segmenter::{Connectivity, SegmentationParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Unreadable {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown architecture '{0}' (expected resnet, googlenet or xception)")]
    BadArch(String),
    #[error("unsupported input size {0} (expected 224, 112 or 64)")]
    BadInputSize(usize),
    #[error("referenced path does not exist: {0}")]
    MissingPath(PathBuf),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: String,
    pub input_size: usize,
    #[serde(default)]
    pub width_preset: String,
    /// Weight file; optional before the first training run.
    pub weights: PathBuf,
}

impl ModelConfig {
    pub fn arch(&self) -> Result<Arch, ConfigError> {
        self.arch.parse().map_err(|_| ConfigError::BadArch(self.arch.clone()))
    }

    pub fn preset(&self) -> Result<WidthPreset, ConfigError> {
        match self.width_preset.as_str() {
            "" | "paper" => Ok(WidthPreset::Paper),
            "tiny" => Ok(WidthPreset::Tiny),
            other => Err(ConfigError::BadArch(format!("width preset {other}"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OcrConfig {
    /// Command template; `{input}` is replaced with the crop path.
    pub command: String,
    #[serde(default = "default_min_conf")]
    pub min_conf: f64,
}

fn default_min_conf() -> f64 {
    40.0
}

/// Serde view of `SegmentationParams`; all fields optional so that a page
/// width can supply relative defaults at run time.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub min_w: Option<usize>,
    pub min_h: Option<usize>,
    pub max_frac: Option<f64>,
    /// Fixed threshold 0-255; omitted means Otsu.
    pub threshold: Option<u8>,
    pub invert: Option<bool>,
    pub rect_tol: Option<f64>,
    /// 4 or 8.
    pub connectivity: Option<u8>,
}

impl SegmentationConfig {
    pub fn for_page(&self, page_w: usize) -> SegmentationParams {
        let mut p = SegmentationParams::for_page(page_w);
        if let Some(v) = self.min_w {
            p.min_w = v;
        }
        if let Some(v) = self.min_h {
            p.min_h = v;
        }
        if let Some(v) = self.max_frac {
            p.max_frac = v;
        }
        if let Some(v) = self.threshold {
            p.threshold = Threshold::Fixed(v);
        }
        if let Some(v) = self.invert {
            p.invert = v;
        }
        if let Some(v) = self.rect_tol {
            p.rect_tol = v;
        }
        if let Some(v) = self.connectivity {
            p.connectivity = if v == 8 { Connectivity::Eight } else { Connectivity::Four };
        }
        p
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    #[serde(default)]
    pub sources: Vec<SourceConfig>,
    #[serde(default = "default_dpi")]
    pub dpi: u32,
    /// Rasterizer command template with `{input}` `{outdir}` `{dpi}` holes.
    #[serde(default)]
    pub rasterizer_command: String,
    #[serde(default)]
    pub segmentation: SegmentationConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    pub ocr: OcrConfig,
    pub keywords: PathBuf,
    #[serde(default = "default_min_common")]
    pub min_common: usize,
    pub manifest: PathBuf,
    #[serde(default = "default_port")]
    pub serve_port: u16,
    /// Scratch directory for downloads, page images and crops.
    pub workdir: PathBuf,
    /// Keep classifier-rejected crops under `<workdir>/rejects`.
    #[serde(default)]
    pub debug_rejects: bool,
}

fn default_dpi() -> u32 {
    150
}
fn default_min_common() -> usize {
    3
}
fn default_port() -> u16 {
    8080
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Unreadable {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: PipelineConfig = toml::from_str(&text)?;
        cfg.model.arch()?;
        cfg.model.preset()?;
        if ![224, 112, 64].contains(&cfg.model.input_size) {
            return Err(ConfigError::BadInputSize(cfg.model.input_size));
        }
        Ok(cfg)
    }

    /// Paths that must exist before a classify/filter/run invocation.
    pub fn validate_paths(&self, require_weights: bool) -> Result<(), ConfigError> {
        if !self.keywords.exists() {
            return Err(ConfigError::MissingPath(self.keywords.clone()));
        }
        if require_weights && !self.model.weights.exists() {
            return Err(ConfigError::MissingPath(self.model.weights.clone()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical TOML serialization, recorded in manifests so
    /// a run can be traced back to its exact configuration.
    pub fn config_hash(&self) -> String {
        let canonical = toml::to_string(self).expect("config is always serializable");
        format!("{:x}", Sha256::digest(canonical.as_bytes()))
    }
}
