use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use log::info;

use vprompt::bridge::{Backend, BackendSpec, FileStore, RecordingBackend, SIDECAR_CMD_ENV};
use vprompt::experiment::{
    generate_synthetic, grid_markdown, validate_dataset, write_grid, Experiment, ExperimentConfig, GridEntry,
    SynthOptions, SYNTH_CONFIG,
};
use vprompt::marker::MarkerKind;
use vprompt::raster::{write_png, PngDepth};
use vprompt::{Error, Result};

/// Zero-shot radiograph classification with visual prompts.
#[derive(Parser, Debug)]
#[command(name = "vprompt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Model backend: file:<dir>, sidecar:<cmd>, tcp:<addr> or synthetic.
    #[arg(long)]
    backend: Option<BackendSpec>,
    /// Decision threshold on the malignancy probability.
    #[arg(long)]
    threshold: Option<f64>,
    /// Output directory (overrides output_dir in the config).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RowArgs {
    /// Visual prompt: none, crop, circle, arrow or contour.
    #[arg(long)]
    prompt: MarkerKind,
    /// Name the drawn marker in the text prompt.
    #[arg(long)]
    mention: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check the manifest, images and masks without contacting a backend.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Write annotated images for every configured grid row.
    Render {
        #[command(flatten)]
        common: Common,
        /// Only render this record.
        #[arg(long)]
        image: Option<String>,
    },
    /// Evaluate a single visual-prompt configuration.
    Run {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        row: RowArgs,
    },
    /// Evaluate every configured grid row.
    Grid {
        #[command(flatten)]
        common: Common,
    },
    /// Render attention-gradient overlays for one record.
    Explain {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        row: RowArgs,
        /// Record to explain (image_id from the manifest).
        #[arg(long)]
        image: String,
        /// Class names to explain; all classes when omitted.
        #[arg(long = "class")]
        classes: Vec<String>,
    },
    /// Run the grid against a live backend, recording every response into
    /// a file-backend directory for offline replay.
    Fixtures {
        #[command(flatten)]
        common: Common,
        /// Also record attention gradients for these records.
        #[arg(long = "explain-image")]
        explain_images: Vec<String>,
    },
    /// Generate a seeded synthetic dataset and config.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 8)]
        images: usize,
        #[arg(long, default_value_t = 256)]
        side: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(t) = common.threshold {
        cfg.threshold = t;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    if let Some(b) = &common.backend {
        cfg.backend = Some(b.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn backend_spec(cfg: &ExperimentConfig) -> Result<BackendSpec> {
    match &cfg.backend {
        Some(b) => Ok(b.clone()),
        None if std::env::var_os(SIDECAR_CMD_ENV).is_some() => Ok(BackendSpec::Sidecar {
            command: None,
            connections: cfg.workers,
            model_id: None,
        }),
        None => Err(Error::Config(format!(
            "no backend: pass --backend, add a [backend] section, or set {SIDECAR_CMD_ENV}"
        ))),
    }
}

fn open(cfg: ExperimentConfig) -> Result<Experiment> {
    let spec = backend_spec(&cfg)?;
    info!("backend {spec}");
    Experiment::new(cfg, spec.connect()?)
}

fn report(grid: &vprompt::experiment::GridResult, out: &Path) -> Result<bool> {
    for path in write_grid(out, grid)? {
        info!("wrote {}", path.display());
    }
    print!("{}", grid_markdown(grid));
    for row in &grid.rows {
        if let Err(e) = &row.outcome {
            eprintln!("configuration {} failed: {e}", row.entry);
        }
    }
    Ok(grid.all_ok())
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Validate { config } => {
            let cfg = ExperimentConfig::load(&config)?;
            let check = validate_dataset(&cfg)?;
            println!(
                "{} records ({} malignant, {} benign), {} problems",
                check.records,
                check.n_pos,
                check.n_neg,
                check.problems.len()
            );
            for p in &check.problems {
                eprintln!("{p}");
            }
            Ok(check.problems.is_empty())
        }
        Command::Render { common, image } => {
            let cfg = load_config(&common)?;
            let out = cfg.output_dir.join("rendered");
            let grid = cfg.grid.clone();
            let exp = open(cfg)?;
            std::fs::create_dir_all(&out)?;
            let mut ok = true;
            for rec in exp.records() {
                if image.as_ref().is_some_and(|id| *id != rec.image_id) {
                    continue;
                }
                for entry in grid.iter().filter(|e| !e.marker_in_prompt) {
                    match exp.annotate(rec, entry) {
                        Ok(img) => {
                            let path = out.join(format!("{}_{}.png", rec.image_id, entry.slug()));
                            write_png(&img, PngDepth::Eight, &path)?;
                        }
                        Err(e) => {
                            eprintln!("{}", e.for_record(&rec.image_id));
                            ok = false;
                        }
                    }
                }
            }
            println!("annotated images in {}", out.display());
            Ok(ok)
        }
        Command::Run { common, row } => {
            let mut cfg = load_config(&common)?;
            cfg.grid = vec![GridEntry::new(row.prompt, row.mention)];
            let out = cfg.output_dir.clone();
            let exp = open(cfg)?;
            report(&exp.run_grid(), &out)
        }
        Command::Grid { common } => {
            let cfg = load_config(&common)?;
            let out = cfg.output_dir.clone();
            let exp = open(cfg)?;
            report(&exp.run_grid(), &out)
        }
        Command::Explain {
            common,
            row,
            image,
            classes,
        } => {
            let cfg = load_config(&common)?;
            let out = cfg.output_dir.join("explain");
            let exp = open(cfg)?;
            let names = &exp.zero_shot().classes;
            let indices = if classes.is_empty() {
                (0..names.len()).collect()
            } else {
                classes
                    .iter()
                    .map(|c| {
                        names
                            .iter()
                            .position(|n| n == c)
                            .ok_or_else(|| Error::Config(format!("unknown class '{c}'")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            let entry = GridEntry::new(row.prompt, row.mention);
            for f in exp.explain(&image, &entry, &indices, &out)? {
                println!("{}", f.overlay_png.display());
            }
            Ok(true)
        }
        Command::Fixtures {
            common,
            explain_images,
        } => {
            let cfg = load_config(&common)?;
            let dir = common
                .out
                .clone()
                .ok_or_else(|| Error::Config("fixtures needs --out <dir> for the recordings".into()))?;
            let live = backend_spec(&cfg)?.connect()?;
            let store = FileStore::create(&dir)?;
            let recorder: Arc<dyn Backend> = Arc::new(RecordingBackend::new(live, store));
            let grid_rows = cfg.grid.clone();
            let exp = Experiment::new(cfg, recorder)?;
            let grid = exp.run_grid();
            let mut ok = grid.all_ok();
            for row in &grid.rows {
                if let Err(e) = &row.outcome {
                    eprintln!("configuration {} failed: {e}", row.entry);
                }
            }
            let scratch = dir.join("explain");
            for id in &explain_images {
                for entry in &grid_rows {
                    let all: Vec<usize> = (0..exp.zero_shot().classes.len()).collect();
                    if let Err(e) = exp.explain(id, entry, &all, &scratch) {
                        eprintln!("explain {id} {entry}: {e}");
                        ok = false;
                    }
                }
            }
            println!("recorded fixtures in {}", dir.display());
            Ok(ok)
        }
        Command::Synth {
            out,
            images,
            side,
            seed,
        } => {
            generate_synthetic(&out, &SynthOptions { images, side, seed })?;
            println!("{}", out.join(SYNTH_CONFIG).display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
