use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bridge::BackendSpec;
use crate::dataset::DatasetConfig;
use crate::error::{Error, Result};
use crate::marker::{MarkerKind, MarkerSpec};
use crate::preprocess::PreprocessConfig;
use crate::zero_shot::ZeroShotConfig;

/// One grid cell: which visual prompt is drawn and whether the text prompt
/// names it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub visual_prompt: MarkerKind,
    #[serde(default)]
    pub marker_in_prompt: bool,
}

impl GridEntry {
    pub fn new(visual_prompt: MarkerKind, marker_in_prompt: bool) -> Self {
        Self {
            visual_prompt,
            marker_in_prompt,
        }
    }

    /// The eight rows of the reference comparison, in table order.
    pub fn default_grid() -> Vec<GridEntry> {
        use MarkerKind::*;
        vec![
            GridEntry::new(None, false),
            GridEntry::new(Crop, false),
            GridEntry::new(Arrow, false),
            GridEntry::new(Arrow, true),
            GridEntry::new(Circle, false),
            GridEntry::new(Circle, true),
            GridEntry::new(Contour, false),
            GridEntry::new(Contour, true),
        ]
    }

    /// File-name friendly identifier, e.g. `circle_mention`.
    pub fn slug(&self) -> String {
        if self.marker_in_prompt {
            format!("{}_mention", self.visual_prompt)
        } else {
            self.visual_prompt.to_string()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.marker_in_prompt && self.visual_prompt.annotation_word().is_none() {
            return Err(Error::config(format!(
                "visual prompt '{}' has nothing to mention in the text prompt",
                self.visual_prompt
            )));
        }
        Ok(())
    }
}

impl fmt::Display for GridEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.marker_in_prompt {
            write!(f, "{} ✓", self.visual_prompt)
        } else {
            write!(f, "{}", self.visual_prompt)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub preprocess: PreprocessConfig,
    pub zero_shot: ZeroShotConfig,
    /// Drawing style shared by every grid row; its `kind` is set per row.
    pub marker_style: MarkerSpec,
    pub grid: Vec<GridEntry>,
    /// Overridden by `--backend` on the command line.
    pub backend: Option<BackendSpec>,
    pub output_dir: PathBuf,
    /// Only drives synthetic dataset generation.
    pub seed: u64,
    /// Malignancy scores at or above this value count as positive predictions.
    pub threshold: f64,
    pub workers: usize,
    pub overlay_alpha: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            preprocess: PreprocessConfig::default(),
            zero_shot: ZeroShotConfig::default(),
            marker_style: MarkerSpec::default(),
            grid: GridEntry::default_grid(),
            backend: None,
            output_dir: PathBuf::from("results"),
            seed: 0,
            threshold: 0.5,
            workers: 4,
            overlay_alpha: 0.5,
        }
    }
}

impl ExperimentConfig {
    /// Parses TOML text; relative paths are resolved against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("invalid config: {e}")))?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut self.dataset.manifest_path);
        resolve(&mut self.dataset.image_root);
        if let Some(m) = self.dataset.mask_root.as_mut() {
            resolve(m);
        }
        resolve(&mut self.output_dir);
        if let Some(BackendSpec::File { dir }) = self.backend.as_mut() {
            resolve(dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset.manifest_path.as_os_str().is_empty() {
            return Err(Error::config("dataset.manifest_path is required"));
        }
        if self.dataset.image_root.as_os_str().is_empty() {
            return Err(Error::config("dataset.image_root is required"));
        }
        self.dataset.validate()?;
        self.preprocess.validate()?;
        self.zero_shot.validate()?;
        self.marker_style.validate()?;
        if self.grid.is_empty() {
            return Err(Error::config("grid must list at least one configuration"));
        }
        for entry in &self.grid {
            entry.validate()?;
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::config(format!("threshold must lie in [0, 1], got {}", self.threshold)));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.overlay_alpha) {
            return Err(Error::config(format!(
                "overlay_alpha must lie in [0, 1], got {}",
                self.overlay_alpha
            )));
        }
        Ok(())
    }

    pub fn marker_for(&self, entry: &GridEntry) -> MarkerSpec {
        MarkerSpec {
            kind: entry.visual_prompt,
            ..self.marker_style
        }
    }
}
