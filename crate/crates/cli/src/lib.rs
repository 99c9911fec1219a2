//! `suitability` command line: data generation, training, scoring and serving.

pub mod service;

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use serde::Serialize;

use suitability_core::dataset::{
    default_profiles, eda_summary, generate_synthetic, load_csv, parse_profiles, write_csv,
    Dataset, FEATURE_NAMES, N_FEATURES,
};
use suitability_core::pipeline::{
    load_bundle, run_pipeline, save_bundle, ModelBundle, PipelineConfig,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_FAILURE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "suitability",
    version,
    about = "Explainable site-suitability pipeline"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic city-day dataset as CSV.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value = "2020-01-01")]
        start: NaiveDate,
        #[arg(long, default_value = "2024-12-31")]
        end: NaiveDate,
        /// JSON list of city profiles; the built-in ten cities otherwise.
        #[arg(long)]
        profiles: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write summary statistics of the generated data here.
        #[arg(long)]
        eda: Option<PathBuf>,
    },
    /// Run all four stages and save a model bundle.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to `<out stem>.reports.json` next to the bundle.
        #[arg(long)]
        reports: Option<PathBuf>,
    },
    /// Score the ensemble against the bundle's proxy classes.
    Evaluate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Shapley values of one raw row for every class.
    Explain {
        #[arg(long)]
        bundle: PathBuf,
        /// Eight comma-separated raw values in schema order.
        #[arg(long, allow_hyphen_values = true)]
        row: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-record suitability index as CSV.
    Index {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cities ordered by mean suitability index.
    Rank {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the scenario API over HTTP.
    Serve {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}

fn emit(out: Option<&Path>, text: &str) -> anyhow::Result<()> {
    match out {
        Some(path) => {
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
        }
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    emit(out, &text)
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn read_dataset(path: &Path) -> anyhow::Result<Dataset> {
    let file = std::fs::File::open(path).with_context(|| format!("reading {}", path.display()))?;
    load_csv(file).with_context(|| format!("loading {}", path.display()))
}

fn read_bundle(path: &Path) -> anyhow::Result<ModelBundle> {
    load_bundle(path).with_context(|| format!("loading bundle {}", path.display()))
}

fn reports_path(out: &Path) -> PathBuf {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "bundle".into());
    out.with_file_name(format!("{stem}.reports.json"))
}

fn parse_row(text: &str) -> anyhow::Result<[f64; N_FEATURES]> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| anyhow!("`{}` is not a number", v.trim()))
        })
        .collect::<anyhow::Result<_>>()?;
    values.try_into().map_err(|v: Vec<f64>| {
        anyhow!(
            "expected {N_FEATURES} values ({}), got {}",
            FEATURE_NAMES.join(", "),
            v.len()
        )
    })
}

#[derive(Serialize)]
struct ClassExplanation {
    class: usize,
    label: String,
    baseline: f64,
    margin: f64,
    shap: Vec<(String, f64)>,
    shap_sum: f64,
}

#[derive(Serialize)]
struct Explanation {
    raw: [f64; N_FEATURES],
    scaled: [f64; N_FEATURES],
    predicted_class: usize,
    predicted_label: String,
    classes: Vec<ClassExplanation>,
}

fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::Generate {
            seed,
            start,
            end,
            profiles,
            out,
            eda,
        } => {
            let profiles = match profiles {
                Some(path) => parse_profiles(&read_text(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => default_profiles(),
            };
            let dataset = generate_synthetic(&profiles, start, end, seed)?;
            if let Some(path) = eda {
                emit_json(Some(&path), &eda_summary(&dataset)?)?;
            }
            emit(out.as_deref(), &write_csv(&dataset))
        }
        Command::Train {
            data,
            config,
            seed,
            out,
            reports,
        } => {
            let mut config = match config {
                Some(path) => PipelineConfig::from_json(&read_text(&path)?)
                    .with_context(|| format!("parsing {}", path.display()))?,
                None => PipelineConfig::default(),
            };
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let dataset = read_dataset(&data)?;
            let (bundle, report) = run_pipeline(&dataset, &config)?;
            save_bundle(&bundle, &out).with_context(|| format!("writing {}", out.display()))?;
            let reports = reports.unwrap_or_else(|| reports_path(&out));
            emit_json(Some(&reports), &report)?;

            eprintln!(
                "k = {} (elbow {}), holdout accuracy {:.4}, {} rounds",
                report.k_selection.chosen_k,
                report.k_selection.elbow_k,
                report.evaluation.accuracy,
                report.history.best_round
            );
            for j in report.importance.ranking() {
                eprintln!(
                    "  {:<18} {:.6}",
                    FEATURE_NAMES[j], report.importance.mean_abs_shap[j]
                );
            }
            Ok(())
        }
        Command::Evaluate { bundle, data, out } => {
            let bundle = read_bundle(&bundle)?;
            let report = bundle.evaluate_dataset(&read_dataset(&data)?)?;
            emit_json(out.as_deref(), &report)
        }
        Command::Explain { bundle, row, out } => {
            let bundle = read_bundle(&bundle)?;
            let raw = parse_row(&row)?;
            if raw.iter().any(|v| !v.is_finite()) {
                bail!("row values must be finite");
            }
            let (scaled, _) = bundle.prepare(&raw);
            let predicted_class = bundle.ensemble.predict_class(&scaled)?;
            let classes = bundle
                .explain_scaled(&scaled)?
                .into_iter()
                .map(|a| ClassExplanation {
                    class: a.class,
                    label: bundle.proxy.label(a.class).to_string(),
                    baseline: a.baseline,
                    margin: a.margin,
                    shap_sum: a.values.iter().sum(),
                    shap: FEATURE_NAMES
                        .iter()
                        .map(|n| n.to_string())
                        .zip(a.values)
                        .collect(),
                })
                .collect();
            emit_json(
                out.as_deref(),
                &Explanation {
                    raw,
                    scaled,
                    predicted_class,
                    predicted_label: bundle.proxy.label(predicted_class).to_string(),
                    classes,
                },
            )
        }
        Command::Index { bundle, data, out } => {
            let bundle = read_bundle(&bundle)?;
            let scores = bundle.score_dataset(&read_dataset(&data)?)?;
            let mut writer = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            for s in &scores {
                writer.serialize(s)?;
            }
            let bytes = writer.into_inner().map_err(|e| anyhow!("{e}"))?;
            emit(out.as_deref(), &String::from_utf8(bytes)?)
        }
        Command::Rank { bundle, data, out } => {
            let bundle = read_bundle(&bundle)?;
            let ranking = bundle.rank_dataset(&read_dataset(&data)?)?;
            emit_json(out.as_deref(), &ranking)
        }
        Command::Serve { bundle, port, host } => {
            let bundle = read_bundle(&bundle)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(service::serve(bundle, &format!("{host}:{port}")))
        }
    }
}
