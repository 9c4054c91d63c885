use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::augmentation::AugmentationConfig;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng::digest_hex;

/// Which compressed modalities feed the network.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModalityMode {
    Fused,
    /// TSR input zeroed and TSR encoder frozen.
    PcaOnly,
    /// PCA input zeroed and PCA encoder frozen.
    TsrOnly,
}

impl ModalityMode {
    pub fn name(self) -> &'static str {
        match self {
            ModalityMode::Fused => "fused",
            ModalityMode::PcaOnly => "pca_only",
            ModalityMode::TsrOnly => "tsr_only",
        }
    }
}

pub const DEFAULT_LAMBDA_GRID: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Augmented dataset directory (output of `augment`).
    pub dataset_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub augmentation: AugmentationConfig,
    pub modality: ModalityMode,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    /// Fresh random affine transforms per training batch.
    pub spatial_augmentation: bool,
    pub lambda_grid: Vec<f64>,
    /// Free-form label copied into reports.
    pub tag: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset_dir: None,
            output_dir: None,
            model: ModelConfig::default(),
            augmentation: AugmentationConfig::default(),
            modality: ModalityMode::Fused,
            batch_size: 8,
            epochs: 100,
            lr: 1e-4,
            seed: 0,
            spatial_augmentation: true,
            lambda_grid: DEFAULT_LAMBDA_GRID.to_vec(),
            tag: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be >= 1".into()));
        }
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("lr {} must be >= 0", self.lr)));
        }
        if self.lambda_grid.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidArgument("lambda grid values must be >= 0".into()));
        }
        self.model.validate()?;
        self.augmentation.validate()
    }

    /// The configuration without filesystem paths, as echoed in reports.
    pub fn settings(&self) -> RunConfig {
        RunConfig {
            dataset_dir: None,
            output_dir: None,
            ..self.clone()
        }
    }

    /// SHA-256 of the path-free configuration JSON.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&self.settings()).expect("config serializes");
        digest_hex(&json)
    }

    /// Short label combining inputs, fusion and head.
    pub fn variant(&self) -> String {
        if let Some(tag) = &self.tag {
            return tag.clone();
        }
        let fusion = match self.model.fusion {
            crate::model::FusionMode::EafgAedb => "eafg_aedb",
            crate::model::FusionMode::ConcatBaseline => "concat",
        };
        let head = match self.model.head {
            crate::model::Head::Multiclass { .. } => "multiclass",
            crate::model::Head::BinaryDepth { .. } => "binary_depth",
        };
        format!("{}-{fusion}-{head}", self.modality.name())
    }
}
