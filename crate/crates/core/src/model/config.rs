use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::DEFAULT_MAX_DEPTH_MM;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Multiclass { classes: usize },
    BinaryDepth { d_max_mm: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    EafgAedb,
    ConcatBaseline,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Filters per level; its length is the number of levels.
    pub filters: Vec<usize>,
    pub kernel: usize,
    pub pca_channels: usize,
    pub tsr_channels: usize,
    pub head: Head,
    /// Weight of the depth term in the binary/depth loss.
    pub lambda: f64,
    pub fusion: FusionMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            filters: vec![64, 128, 256, 512, 1024],
            kernel: 3,
            pca_channels: 10,
            tsr_channels: 6,
            head: Head::BinaryDepth {
                d_max_mm: DEFAULT_MAX_DEPTH_MM,
            },
            lambda: 0.5,
            fusion: FusionMode::EafgAedb,
        }
    }
}

impl ModelConfig {
    pub fn levels(&self) -> usize {
        self.filters.len()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.filters.is_empty() || self.filters.contains(&0) {
            return bad(format!("filters must be non-empty and positive: {:?}", self.filters));
        }
        if self.kernel.is_multiple_of(2) {
            return bad(format!("kernel size {} must be odd", self.kernel));
        }
        if self.pca_channels == 0 || self.tsr_channels == 0 {
            return bad("input channel counts must be positive".into());
        }
        match self.head {
            Head::Multiclass { classes } if !(2..=256).contains(&classes) => {
                return bad(format!("{classes} classes; need 2..=256"))
            }
            Head::BinaryDepth { d_max_mm } if !(d_max_mm.is_finite() && d_max_mm > 0.0) => {
                return bad(format!("d_max {d_max_mm} must be positive"))
            }
            _ => {}
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda {} must be >= 0", self.lambda));
        }
        Ok(())
    }

    /// Spatial sizes must survive `levels - 1` halvings.
    pub fn check_input(&self, h: usize, w: usize) -> Result<()> {
        let d = 1usize << (self.levels() - 1);
        if h == 0 || w == 0 || !h.is_multiple_of(d) || !w.is_multiple_of(d) {
            return Err(Error::Shape(format!(
                "input {h}x{w} not divisible by {d} for {} levels",
                self.levels()
            )));
        }
        Ok(())
    }
}
