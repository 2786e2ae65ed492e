//! Pipeline configuration and its fingerprint.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{KccError, Result};

/// Distance used for keypoint nearest neighbours and prototype pruning.
pub const DISTANCE_MEASURE: &str = "cosine";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionStrategy {
    #[default]
    KmeansMedoid,
    Random,
}

impl fmt::Display for SelectionStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SelectionStrategy::KmeansMedoid => "kmeans-medoid",
            SelectionStrategy::Random => "random",
        })
    }
}

impl FromStr for SelectionStrategy {
    type Err = KccError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "kmeans-medoid" => Ok(SelectionStrategy::KmeansMedoid),
            "random" => Ok(SelectionStrategy::Random),
            other => Err(KccError::Config(format!("unknown selection strategy `{other}`"))),
        }
    }
}

/// Every knob of the pipeline. All fields default, so a config file only
/// needs to name what it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Requested segments per image.
    pub n_segments: usize,
    /// Working resolution = token resolution times this, clamped to the image.
    pub scale_factor: usize,
    pub compactness: f64,
    pub max_iters: usize,
    /// Prototypes per class.
    pub per_class: usize,
    /// Number of closest prototypes kept before keypoint matching.
    pub j: usize,
    pub selection: SelectionStrategy,
    pub seed: u64,
    pub encoder_id: String,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            n_segments: 8,
            scale_factor: 4,
            compactness: 1.0,
            max_iters: 10,
            per_class: 10,
            j: 40,
            selection: SelectionStrategy::KmeansMedoid,
            seed: 0,
            encoder_id: String::new(),
        }
    }
}

/// TOML integers are signed 64-bit.
const TOML_INT_MAX: u64 = i64::MAX as u64;

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("n_segments", self.n_segments),
            ("scale_factor", self.scale_factor),
            ("max_iters", self.max_iters),
            ("per_class", self.per_class),
            ("j", self.j),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(KccError::Config(format!("`{name}` must be at least 1")));
            }
            if v as u64 > TOML_INT_MAX {
                return Err(KccError::Config(format!("`{name}` is too large")));
            }
        }
        if self.seed > TOML_INT_MAX {
            return Err(KccError::Config(format!("`seed` must be at most {TOML_INT_MAX}")));
        }
        if !self.compactness.is_finite() || self.compactness < 0.0 {
            return Err(KccError::Config("`compactness` must be finite and nonnegative".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| KccError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KccError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        self.validate()?;
        toml::to_string(self).map_err(|e| KccError::Config(e.to_string()))
    }

    /// Hex SHA-256 over the fields that shape gallery contents. `j` is a
    /// query-time knob and is left out.
    pub fn fingerprint(&self) -> String {
        let canonical = format!(
            "kcc-pipeline/v1\nn_segments={}\nscale_factor={}\ncompactness={:016x}\nmax_iters={}\n\
             distance={}\nselection={}\nper_class={}\nseed={}\nencoder_id={}\n",
            self.n_segments,
            self.scale_factor,
            self.compactness.to_bits(),
            self.max_iters,
            DISTANCE_MEASURE,
            self.selection,
            self.per_class,
            self.seed,
            self.encoder_id,
        );
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
