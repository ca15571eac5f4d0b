use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::preprocess::DEFAULT_SCALE_PARAM;
use crate::raster::ScaleFactor;

/// Where the object map comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum Segmentation {
    /// Graph-based segmentation of the base fine image.
    Builtin {
        #[serde(default = "default_scale_param")]
        scale_param: f64,
        /// Smallest object in pixels; defaults to one coarse pixel.
        #[serde(default)]
        min_size: Option<usize>,
    },
    /// Label raster produced elsewhere, for example by a foundation model.
    External { path: PathBuf },
}

impl Default for Segmentation {
    fn default() -> Self {
        Segmentation::Builtin {
            scale_param: DEFAULT_SCALE_PARAM,
            min_size: None,
        }
    }
}

fn default_scale_param() -> f64 {
    DEFAULT_SCALE_PARAM
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    pub scale: ScaleFactor,
    #[serde(default = "defaults::n_classes")]
    pub n_classes: usize,
    /// Unmixing window, in coarse pixels.
    #[serde(default = "defaults::window")]
    pub window: usize,
    /// Similar-pixel window, in fine pixels.
    #[serde(default = "defaults::sim_window")]
    pub sim_window: usize,
    #[serde(default = "defaults::n_similar")]
    pub n_similar: usize,
    #[serde(default = "defaults::or_percent")]
    pub or_percent: f64,
    #[serde(default = "defaults::kmeans_seed")]
    pub kmeans_seed: u64,
    #[serde(default = "defaults::kmeans_max_iter")]
    pub kmeans_max_iter: usize,
    #[serde(default)]
    pub segmentation: Segmentation,
    #[serde(default)]
    pub emit_intermediates: bool,
}

mod defaults {
    pub fn n_classes() -> usize {
        5
    }
    pub fn window() -> usize {
        11
    }
    pub fn sim_window() -> usize {
        31
    }
    pub fn n_similar() -> usize {
        30
    }
    pub fn or_percent() -> f64 {
        15.0
    }
    pub fn kmeans_seed() -> u64 {
        42
    }
    pub fn kmeans_max_iter() -> usize {
        100
    }
}

impl FusionConfig {
    pub fn new(scale: ScaleFactor) -> Self {
        FusionConfig {
            scale,
            n_classes: defaults::n_classes(),
            window: defaults::window(),
            sim_window: defaults::sim_window(),
            n_similar: defaults::n_similar(),
            or_percent: defaults::or_percent(),
            kmeans_seed: defaults::kmeans_seed(),
            kmeans_max_iter: defaults::kmeans_max_iter(),
            segmentation: Segmentation::default(),
            emit_intermediates: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_classes < 2 {
            return bad(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.window.is_multiple_of(2) {
            return bad(format!("window must be odd, got {}", self.window));
        }
        if self.sim_window.is_multiple_of(2) {
            return bad(format!("sim_window must be odd, got {}", self.sim_window));
        }
        if self.n_similar == 0 {
            return bad("n_similar must be >= 1".into());
        }
        if !(self.or_percent > 0.0 && self.or_percent <= 100.0) {
            return bad(format!(
                "or_percent must lie in (0, 100], got {}",
                self.or_percent
            ));
        }
        if self.kmeans_max_iter == 0 {
            return bad("kmeans_max_iter must be >= 1".into());
        }
        if let Segmentation::Builtin {
            scale_param,
            min_size,
        } = &self.segmentation
        {
            if !(scale_param.is_finite() && *scale_param >= 0.0) {
                return bad(format!(
                    "segmentation scale_param must be >= 0, got {scale_param}"
                ));
            }
            if *min_size == Some(0) {
                return bad("segmentation min_size must be >= 1".into());
            }
        }
        Ok(())
    }

    /// Minimum object size used by the builtin segmentation.
    pub fn min_object_size(&self) -> usize {
        match self.segmentation {
            Segmentation::Builtin {
                min_size: Some(m), ..
            } => m,
            _ => self.scale.fine_per_coarse(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: FusionConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        FusionConfig::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
