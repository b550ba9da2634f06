//! End-to-end runs: single configurations, the prompt grid, explanation
//! overlays and report emission.

mod config;
mod explain;
mod report;
mod runner;
mod synth;

pub use config::{ExperimentConfig, GridEntry};
pub use explain::{explain_stem, overlay_model_view, ExplainOutput};
pub use report::{
    grid_columns, grid_csv, grid_markdown, run_json, scores_csv, write_grid, GRID_CSV, GRID_MARKDOWN, RUN_JSON,
    SCORES_DIR,
};
pub use runner::{validate_dataset, ConfigResult, DatasetCheck, Experiment, GridResult, GridRow, ImageScore};
pub use synth::{generate_synthetic, SynthOptions, SYNTH_CONFIG, SYNTH_MANIFEST};
