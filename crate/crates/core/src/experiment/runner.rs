use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::bridge::{Backend, ModelClient, ModelInfo};
use crate::dataset::{load_image, read_manifest, Label, NoduleRecord};
use crate::error::{Error, Result};
use crate::experiment::config::{ExperimentConfig, GridEntry};
use crate::marker::{apply_marker, nodule_bbox, MarkerKind};
use crate::metrics::{full_report, MetricsReport};
use crate::preprocess::{preprocess, ImageTensor};
use crate::raster::{read_png, RasterImage};
use crate::zero_shot::{build_prompts, classify, malignancy_score, EmbeddingVector, PromptSet, ZeroShotConfig};

/// Zero-shot outcome for one dataset record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageScore {
    pub image_id: String,
    pub label: Label,
    pub probs: Vec<f64>,
    pub decision: usize,
    /// Probability of the positive (malignant) class.
    pub score: f64,
}

#[derive(Clone, Debug)]
pub struct ConfigResult {
    pub entry: GridEntry,
    pub prompts: PromptSet,
    pub scores: Vec<ImageScore>,
    pub report: MetricsReport,
}

#[derive(Debug)]
pub struct GridRow {
    pub entry: GridEntry,
    pub outcome: Result<ConfigResult>,
}

#[derive(Debug)]
pub struct GridResult {
    pub model: ModelInfo,
    pub rows: Vec<GridRow>,
}

impl GridResult {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.outcome.is_ok())
    }
}

/// A loaded dataset bound to a model backend.
pub struct Experiment {
    cfg: ExperimentConfig,
    client: ModelClient,
    records: Vec<NoduleRecord>,
    model: ModelInfo,
    zero_shot: ZeroShotConfig,
    pool: rayon::ThreadPool,
}

impl Experiment {
    /// Validates the configuration, reads the manifest and queries the
    /// backend's model facts once.
    pub fn new(cfg: ExperimentConfig, backend: Arc<dyn Backend>) -> Result<Self> {
        cfg.validate()?;
        let records = read_manifest(&cfg.dataset)?;
        if records.is_empty() {
            return Err(Error::validation("manifest lists no records"));
        }
        let client = ModelClient::with_input_side(backend, cfg.preprocess.target_side);
        let model = client.model_info()?;
        let mut zero_shot = cfg.zero_shot.clone();
        if zero_shot.logit_scale.is_none() {
            zero_shot.logit_scale = Some(model.logit_scale);
        }
        zero_shot.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))?;
        Ok(Self {
            cfg,
            client,
            records,
            model,
            zero_shot,
            pool,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn records(&self) -> &[NoduleRecord] {
        &self.records
    }

    pub fn model(&self) -> &ModelInfo {
        &self.model
    }

    pub fn client(&self) -> &ModelClient {
        &self.client
    }

    /// Zero-shot settings with the logit scale resolved.
    pub fn zero_shot(&self) -> &ZeroShotConfig {
        &self.zero_shot
    }

    pub fn record(&self, image_id: &str) -> Result<&NoduleRecord> {
        self.records
            .iter()
            .find(|r| r.image_id == image_id)
            .ok_or_else(|| Error::validation(format!("no record '{image_id}' in the manifest")))
    }

    pub fn prompts(&self, entry: &GridEntry) -> Result<PromptSet> {
        let z = &self.zero_shot;
        let mention = entry
            .marker_in_prompt
            .then_some((z.mention_template.as_str(), entry.visual_prompt));
        build_prompts(&z.classes, &z.template, mention)
    }

    fn lesion_mask(&self, rec: &NoduleRecord, img: &RasterImage) -> Result<RasterImage> {
        if let Some(path) = self.cfg.dataset.mask_path(&rec.image_id) {
            let mask = read_png(&path)?;
            if mask.channels() != 1 {
                return Err(Error::format("mask", format!("{} is not grayscale", path.display())));
            }
            let (w, h) = (mask.width(), mask.height());
            let bin = mask.into_pixels().into_iter().map(|v| if v > 0.5 { 1.0 } else { 0.0 }).collect();
            return RasterImage::new(w, h, 1, bin);
        }
        let bbox = nodule_bbox(rec.center(), rec.diameter_px, self.cfg.marker_style.scale_factor)
            .clip(img.width(), img.height())?;
        self.client.segment_box(img, &bbox)
    }

    /// Loads a record's image and draws the row's visual prompt on it.
    pub fn annotate(&self, rec: &NoduleRecord, entry: &GridEntry) -> Result<RasterImage> {
        let img = load_image(&self.cfg.dataset.image_path(&rec.image_id), &self.cfg.dataset)?;
        rec.check_bounds(&img)?;
        let mask = match entry.visual_prompt {
            MarkerKind::Contour => Some(self.lesion_mask(rec, &img)?),
            _ => None,
        };
        apply_marker(&img, rec, &self.cfg.marker_for(entry), mask.as_ref())
    }

    /// Annotated and preprocessed model input for one record.
    pub fn model_input(&self, rec: &NoduleRecord, entry: &GridEntry) -> Result<ImageTensor> {
        preprocess(&self.annotate(rec, entry)?, &self.cfg.preprocess)
    }

    fn score_record(&self, rec: &NoduleRecord, entry: &GridEntry, text: &[EmbeddingVector]) -> Result<ImageScore> {
        let tensor = self.model_input(rec, entry)?;
        let img = self.client.embed_image(&tensor)?;
        let probs = classify(&img, text, &self.zero_shot)?;
        let score = malignancy_score(&probs, &self.zero_shot)?;
        Ok(ImageScore {
            image_id: rec.image_id.clone(),
            label: rec.label,
            decision: probs.decision,
            probs: probs.probs,
            score,
        })
    }

    /// Scores every record under one grid row. Any record failure aborts
    /// the row, naming the record.
    pub fn run_config(&self, entry: &GridEntry) -> Result<ConfigResult> {
        entry.validate()?;
        let prompts = self.prompts(entry)?;
        let text = prompts
            .rendered
            .iter()
            .map(|p| self.client.embed_text(p))
            .collect::<Result<Vec<_>>>()?;

        let outcomes: Vec<Result<ImageScore>> = self.pool.install(|| {
            self.records
                .par_iter()
                .map(|rec| self.score_record(rec, entry, &text).map_err(|e| e.for_record(&rec.image_id)))
                .collect()
        });
        let scores = outcomes.into_iter().collect::<Result<Vec<_>>>()?;

        let labels: Vec<u8> = scores.iter().map(|s| s.label.as_binary()).collect();
        let values: Vec<f64> = scores.iter().map(|s| s.score).collect();
        let report = full_report(&labels, &values, self.cfg.threshold)?;
        Ok(ConfigResult {
            entry: *entry,
            prompts,
            scores,
            report,
        })
    }

    /// Runs every configured row; failed rows are kept and marked.
    pub fn run_grid(&self) -> GridResult {
        let rows = self
            .cfg
            .grid
            .iter()
            .map(|entry| {
                let outcome = self.run_config(entry);
                if let Err(e) = &outcome {
                    log::warn!("configuration {entry} failed: {e}");
                }
                GridRow { entry: *entry, outcome }
            })
            .collect();
        GridResult {
            model: self.model,
            rows,
        }
    }
}

/// Outcome of checking a dataset without touching any backend.
#[derive(Debug)]
pub struct DatasetCheck {
    pub records: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    /// Per-record problems, in manifest order.
    pub problems: Vec<Error>,
}

/// Reads the manifest and every image, checking nodule bounds and, when
/// contour rows are configured with a mask directory, the masks.
pub fn validate_dataset(cfg: &ExperimentConfig) -> Result<DatasetCheck> {
    cfg.validate()?;
    let records = read_manifest(&cfg.dataset)?;
    let needs_masks = cfg.grid.iter().any(|e| e.visual_prompt == MarkerKind::Contour);
    let check = |rec: &NoduleRecord| -> Result<()> {
        let img = load_image(&cfg.dataset.image_path(&rec.image_id), &cfg.dataset)?;
        rec.check_bounds(&img)?;
        if let (true, Some(path)) = (needs_masks, cfg.dataset.mask_path(&rec.image_id)) {
            let mask = read_png(&path)?;
            if (mask.width(), mask.height()) != (img.width(), img.height()) {
                return Err(Error::validation(format!(
                    "mask is {}x{} but image is {}x{}",
                    mask.width(),
                    mask.height(),
                    img.width(),
                    img.height()
                )));
            }
        }
        Ok(())
    };
    let problems = records
        .iter()
        .filter_map(|rec| check(rec).err().map(|e| e.for_record(&rec.image_id)))
        .collect();
    let n_pos = records.iter().filter(|r| r.label == Label::Malignant).count();
    Ok(DatasetCheck {
        records: records.len(),
        n_pos,
        n_neg: records.len() - n_pos,
        problems,
    })
}
