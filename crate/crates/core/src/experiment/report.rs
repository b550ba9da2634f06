//! CSV, Markdown and JSON emission for grid results. Every writer here is
//! deterministic: same results, same bytes.

use std::path::{Path, PathBuf};

use serde_json::json;

use crate::error::{Error, Result};
use crate::experiment::runner::{ConfigResult, GridResult};
use crate::metrics::MetricsReport;

pub const GRID_CSV: &str = "grid.csv";
pub const GRID_MARKDOWN: &str = "grid.md";
pub const RUN_JSON: &str = "run.json";
pub const SCORES_DIR: &str = "scores";

/// Column order of the grid CSV.
pub fn grid_columns() -> Vec<&'static str> {
    let mut cols = vec!["visual_prompt", "marker_in_prompt"];
    cols.extend(MetricsReport::METRIC_NAMES);
    cols.extend(["n_pos", "n_neg", "status"]);
    cols
}

fn csv_err(e: csv::Error) -> Error {
    Error::format("csv", e.to_string())
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::format("csv", e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::format("csv", e.to_string()))
}

pub fn grid_csv(grid: &GridResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(grid_columns()).map_err(csv_err)?;
    for row in &grid.rows {
        let mut rec = vec![
            row.entry.visual_prompt.to_string(),
            row.entry.marker_in_prompt.to_string(),
        ];
        match &row.outcome {
            Ok(res) => {
                rec.extend(res.report.values().iter().map(|v| format!("{v:.6}")));
                rec.push(res.report.n_pos.to_string());
                rec.push(res.report.n_neg.to_string());
                rec.push("ok".into());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 10));
                rec.push(format!("failed: {e}"));
            }
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

pub fn grid_markdown(grid: &GridResult) -> String {
    let mut out = String::from(
        "| Visual prompt | Marker in prompt | AUROC | AUPRC | F1 | Precision | Recall | Accuracy | Balanced accuracy | MCC |\n",
    );
    out.push_str("|---|---|---|---|---|---|---|---|---|---|\n");
    for row in &grid.rows {
        let mention = if row.entry.marker_in_prompt { "✓" } else { "" };
        out.push_str(&format!("| {} | {mention} |", row.entry.visual_prompt));
        match &row.outcome {
            Ok(res) => {
                for v in res.report.values() {
                    out.push_str(&format!(" {v:.4} |"));
                }
            }
            Err(_) => out.push_str(" failed | | | | | | | |"),
        }
        out.push('\n');
    }
    out
}

/// Per-image scores of one row. Floats use shortest round-trip formatting
/// so stored scores reproduce exactly.
pub fn scores_csv(res: &ConfigResult) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["image_id".to_string(), "label".to_string(), "score".to_string()];
    header.extend(res.prompts.class_names.iter().map(|c| format!("prob_{c}")));
    header.push("decision".into());
    w.write_record(&header).map_err(csv_err)?;
    for s in &res.scores {
        let mut rec = vec![s.image_id.clone(), s.label.to_string(), s.score.to_string()];
        rec.extend(s.probs.iter().map(f64::to_string));
        rec.push(res.prompts.class_names[s.decision].clone());
        w.write_record(&rec).map_err(csv_err)?;
    }
    finish(w)
}

/// Run metadata: model facts, prompts and per-row status.
pub fn run_json(grid: &GridResult) -> String {
    let rows: Vec<_> = grid
        .rows
        .iter()
        .map(|row| match &row.outcome {
            Ok(res) => json!({
                "visual_prompt": row.entry.visual_prompt,
                "marker_in_prompt": row.entry.marker_in_prompt,
                "status": "ok",
                "prompts": res.prompts.rendered,
                "confusion": {
                    "tp": res.report.confusion.tp,
                    "fp": res.report.confusion.fp,
                    "tn": res.report.confusion.tn,
                    "fn": res.report.confusion.fn_,
                },
                "zero_denominators": res.report.zero_denominators,
            }),
            Err(e) => json!({
                "visual_prompt": row.entry.visual_prompt,
                "marker_in_prompt": row.entry.marker_in_prompt,
                "status": "failed",
                "error": e.to_string(),
            }),
        })
        .collect();
    let doc = json!({ "model": grid.model, "rows": rows });
    serde_json::to_string_pretty(&doc).expect("json values serialize") + "\n"
}

/// Writes the grid CSV, Markdown table, run metadata and per-row score
/// files under `dir`, returning the paths written.
pub fn write_grid(dir: &Path, grid: &GridResult) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir.join(SCORES_DIR))?;
    let mut written = Vec::new();
    let mut put = |path: PathBuf, text: String| -> Result<()> {
        std::fs::write(&path, text)?;
        written.push(path);
        Ok(())
    };
    put(dir.join(GRID_CSV), grid_csv(grid)?)?;
    put(dir.join(GRID_MARKDOWN), grid_markdown(grid))?;
    put(dir.join(RUN_JSON), run_json(grid))?;
    for row in &grid.rows {
        if let Ok(res) = &row.outcome {
            put(
                dir.join(SCORES_DIR).join(format!("{}.csv", row.entry.slug())),
                scores_csv(res)?,
            )?;
        }
    }
    Ok(written)
}
