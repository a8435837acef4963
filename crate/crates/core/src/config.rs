//! Pipeline configuration: one TOML file with a section per stage.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::discriminator::TrainConfig;
use crate::error::{Error, Result};
use crate::metrics::MetricsConfig;
use crate::optimizer::Schedule;
use crate::scene::{sha256_hex, CameraSelection, RigConfig};
use crate::synthesis::AugmentationConfig;

pub const OUT_ENV: &str = "HANDSYNTH_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    pub out_dir: PathBuf,
    /// Seed pose pairs (JSON list). Built-in seeds when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seeds: Option<PathBuf>,
    /// Precomputed anchor sets; selected from the initial poses when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchors: Option<PathBuf>,
    /// Pretrained discriminator; trained from scratch when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub discriminator: Option<PathBuf>,
    /// Hand proportions (JSON); built-in proportions when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub proportions: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            out_dir: PathBuf::from("out"),
            seeds: None,
            anchors: None,
            discriminator: None,
            proportions: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LibraryConfig {
    /// Seed pairs drawn from the built-in library when no seed file is given.
    pub seed_count: usize,
}

impl Default for LibraryConfig {
    fn default() -> Self {
        Self { seed_count: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SdfConfig {
    pub resolution: usize,
    pub padding: usize,
}

impl Default for SdfConfig {
    fn default() -> Self {
        Self {
            resolution: 32,
            padding: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub tolerance_mm: f64,
    /// Distance under which an anchor pair counts as a contact in the report.
    pub contact_mm: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            tolerance_mm: 2.0,
            contact_mm: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExportConfig {
    pub cameras: CameraSelection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core.
    pub workers: usize,
    pub paths: Paths,
    pub library: LibraryConfig,
    pub augmentation: AugmentationConfig,
    pub sdf: SdfConfig,
    pub discriminator: TrainConfig,
    pub schedule: Schedule,
    pub filter: FilterConfig,
    pub rig: RigConfig,
    pub export: ExportConfig,
    pub metrics: MetricsConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            workers: 0,
            paths: Paths::default(),
            library: LibraryConfig::default(),
            augmentation: AugmentationConfig::default(),
            sdf: SdfConfig::default(),
            discriminator: TrainConfig::default(),
            schedule: Schedule::default(),
            filter: FilterConfig::default(),
            rig: RigConfig::default(),
            export: ExportConfig::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads and validates a config file. A missing file is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        let cfg = Self::from_toml(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        self.augmentation.validate()?;
        self.discriminator.validate()?;
        self.schedule.validate()?;
        self.rig.validate()?;
        if self.library.seed_count == 0 && self.paths.seeds.is_none() {
            return Err(Error::Config("library.seed_count must be positive".into()));
        }
        if self.sdf.resolution < 8 || 2 * self.sdf.padding + 2 > self.sdf.resolution {
            return Err(Error::Config(format!(
                "sdf resolution {} with padding {} is unusable",
                self.sdf.resolution, self.sdf.padding
            )));
        }
        if !(self.filter.tolerance_mm.is_finite() && self.filter.tolerance_mm >= 0.0) {
            return Err(Error::Config("filter.tolerance_mm must be non-negative".into()));
        }
        if !(self.filter.contact_mm > 0.0 && self.metrics.contact_threshold_mm > 0.0) {
            return Err(Error::Config("contact thresholds must be positive".into()));
        }
        for (name, p) in [
            ("seeds", &self.paths.seeds),
            ("anchors", &self.paths.anchors),
            ("discriminator", &self.paths.discriminator),
            ("proportions", &self.paths.proportions),
        ] {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(Error::Config(format!("paths.{name} = {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the serialized config, ignoring where outputs go and how many
    /// threads run, neither of which changes any output.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths.out_dir = PathBuf::new();
        c.workers = 0;
        sha256_hex(c.to_toml().as_bytes())
    }

    pub fn out_dir(&self) -> &Path {
        &self.paths.out_dir
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = PipelineConfig::default();
        let back = PipelineConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = PipelineConfig::from_toml("seed = 3\n[schedule]\ntotal_iters = 50\nramp_end = 40\n").unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.schedule.total_iters, 50);
        assert_eq!(c.schedule.rebuild_every, 40);
        assert_eq!(c.augmentation.count, 30);
    }

    #[test]
    fn hash_ignores_output_location_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.out_dir = "elsewhere".into();
        b.workers = 3;
        assert_eq!(a.hash(), b.hash());
        b.seed += 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn missing_input_and_bad_keys_are_config_errors() {
        let mut c = PipelineConfig::default();
        c.paths.anchors = Some("/nonexistent/anchors.json".into());
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::from_toml("seed = \"x\""), Err(Error::Config(_))));
        assert!(matches!(PipelineConfig::load(Path::new("/nonexistent.toml")), Err(Error::Config(_))));
    }
}
