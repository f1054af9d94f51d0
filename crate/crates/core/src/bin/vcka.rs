//! Command-line front end for the keyword attention pipeline.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use vcka::clustering::build_hierarchy;
use vcka::dataset::{load_dataset, load_predictions, save_dataset, save_predictions};
use vcka::gradcheck::{grad_check, LossKind, DEFAULT_STEP, DEFAULT_TOLERANCE};
use vcka::keywords::{KeywordReport, KeywordWeights};
use vcka::losses::random_batch;
use vcka::pipeline::{
    choose_partition, default_sweep_values, evaluate, run_inference, save_signals, sweep,
    train_toy, write_loss_curve, write_sweep, RunConfig,
};
use vcka::synth::{synth_generate, SynthConfig};
use vcka::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vcka",
    version,
    about = "Video context-aware keyword attention toolkit"
)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// TOML run config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Keyword softmax temperature [default: 0.1]
    #[arg(long, global = true)]
    tau: Option<f64>,
    /// Weight of the keyword-aware loss [default: 0.3]
    #[arg(long = "lambda-kw", global = true)]
    lambda_kw: Option<f64>,
    /// Exact number of clusters per video (default: level nearest ceil(sqrt(L)))
    #[arg(long = "target-clusters", global = true)]
    target_clusters: Option<usize>,
    /// Saliency projection width p (default: d)
    #[arg(long = "proj-dim", global = true)]
    proj_dim: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Learning rate [default: 1e-3]
    #[arg(long, global = true)]
    lr: Option<f64>,
    /// Training steps [default: 300]
    #[arg(long, global = true)]
    steps: Option<usize>,
    #[arg(long = "in", global = true)]
    input: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

impl Shared {
    fn run_config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = self.tau {
            cfg.tau = v;
        }
        if let Some(v) = self.lambda_kw {
            cfg.lambda_kw = v;
        }
        if self.target_clusters.is_some() {
            cfg.target_clusters = self.target_clusters;
        }
        if self.proj_dim.is_some() {
            cfg.proj_dim = self.proj_dim;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.lr {
            cfg.learning_rate = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn input(&self) -> Result<&Path> {
        self.input
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--in is required".into()))
    }

    fn output(&self) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--out is required".into()))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Several videos with one word per planted segment.
    Default,
    /// A dog in one of five garden scenes.
    DogInGarden,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic planted-segment dataset (JSONL).
    Synth {
        #[arg(long, value_enum, default_value = "default")]
        preset: Preset,
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        clips: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        segments: Option<usize>,
        #[arg(long)]
        noise: Option<f64>,
        /// Number of query words (default preset only).
        #[arg(long)]
        words: Option<usize>,
    },
    /// Cluster every video; one JSON object per sample.
    Cluster,
    /// Keyword weights per sample as `{"video_id", "words", "weights"}`.
    Keywords,
    /// Full inference. Windows are contiguous runs with saliency above
    /// mean + std/2, scored by their mean saliency.
    Infer {
        /// Also write per-sample signals (JSONL).
        #[arg(long)]
        signals: Option<PathBuf>,
    },
    /// Toy training of the keyword-aware loss; writes the loss curve CSV.
    Train,
    /// Check analytic loss gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        configs: usize,
        #[arg(long, default_value_t = DEFAULT_STEP)]
        h: f64,
        #[arg(long, default_value_t = DEFAULT_TOLERANCE)]
        tol: f64,
        /// Coordinates per block (at least 50); all when omitted.
        #[arg(long)]
        coords: Option<usize>,
    },
    /// Score a prediction file against a dataset; writes a metrics CSV.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Train once per lambda value; writes one CSV row per value.
    Sweep {
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
}

#[derive(Serialize)]
struct ClusterLine<'a> {
    video_id: &'a str,
    assignment: Vec<usize>,
    level_counts: Vec<usize>,
    selected_level: usize,
    num_clusters: usize,
    refined: bool,
}

fn write_jsonl<T: Serialize>(rows: &[T], out: Option<&Path>) -> Result<()> {
    let mut text = String::new();
    for row in rows {
        text.push_str(&serde_json::to_string(row)?);
        text.push('\n');
    }
    write_text(&text, out)
}

fn write_text(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Error::Io {
                path: "<stdout>".into(),
                source: e,
            }),
    }
}

fn csv_to(out: Option<&Path>, write: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    write_text(&String::from_utf8_lossy(&buf), out)
}

fn run(cli: Cli) -> Result<()> {
    let shared = &cli.shared;
    let cfg = shared.run_config()?;
    match cli.command {
        Command::Synth {
            preset,
            samples,
            clips,
            dim,
            segments,
            noise,
            words,
        } => {
            let mut synth = match preset {
                Preset::Default => {
                    let base = SynthConfig::default();
                    SynthConfig::with_default_words(
                        samples.unwrap_or(base.num_samples),
                        clips.unwrap_or(base.num_clips),
                        dim.unwrap_or(base.dim),
                        segments.unwrap_or(base.num_segments),
                        noise.unwrap_or(base.noise),
                        words.unwrap_or(base.words.len()),
                    )
                }
                Preset::DogInGarden => SynthConfig::dog_in_garden(),
            };
            if let Preset::DogInGarden = preset {
                synth.num_samples = samples.unwrap_or(synth.num_samples);
                synth.num_clips = clips.unwrap_or(synth.num_clips);
                synth.dim = dim.unwrap_or(synth.dim);
                synth.noise = noise.unwrap_or(synth.noise);
            }
            let dataset = synth_generate(&synth, cfg.seed)?;
            save_dataset(&dataset, shared.output()?)?;
            eprintln!("wrote {} samples", dataset.len());
        }
        Command::Cluster => {
            let dataset = load_dataset(shared.input()?)?;
            let mut lines = Vec::new();
            for s in &dataset.samples {
                let h = build_hierarchy(&s.clip_features);
                let ctx = choose_partition(&h, &s.clip_features, cfg.target_clusters);
                lines.push(ClusterLine {
                    video_id: &s.video_id,
                    assignment: ctx.assignment,
                    level_counts: h.cluster_counts(),
                    selected_level: ctx.level,
                    num_clusters: ctx.num_clusters,
                    refined: ctx.refined,
                });
            }
            write_jsonl(&lines, shared.out.as_deref())?;
        }
        Command::Keywords => {
            let dataset = load_dataset(shared.input()?)?;
            let mut lines = Vec::new();
            for s in &dataset.samples {
                let h = build_hierarchy(&s.clip_features);
                let ctx = choose_partition(&h, &s.clip_features, cfg.target_clusters);
                let kw = KeywordWeights::compute(&s.word_features, &ctx, cfg.tau)?;
                lines.push(KeywordReport {
                    video_id: s.video_id.clone(),
                    words: s.words.clone(),
                    weights: kw.weights,
                });
            }
            write_jsonl(&lines, shared.out.as_deref())?;
        }
        Command::Infer { signals } => {
            let dataset = load_dataset(shared.input()?)?;
            let out = run_inference(&dataset, &cfg)?;
            save_predictions(&out.predictions, shared.output()?)?;
            if let Some(path) = signals {
                save_signals(&out.signals, path)?;
            }
        }
        Command::Train => {
            let dataset = load_dataset(shared.input()?)?;
            let outcome = train_toy(&dataset, &cfg)?;
            csv_to(shared.out.as_deref(), |buf| {
                write_loss_curve(&outcome.curve, buf)
            })?;
            eprintln!(
                "L_kw {:.6} -> {:.6}; relevant cosine {:.4} -> {:.4}; gap {:.4} -> {:.4}",
                outcome.initial().l_kw,
                outcome.last().l_kw,
                outcome.initial_alignment.relevant,
                outcome.final_alignment.relevant,
                outcome.initial_alignment.gap(),
                outcome.final_alignment.gap(),
            );
        }
        Command::Gradcheck {
            configs,
            h,
            tol,
            coords,
        } => {
            println!(
                "{:<14} {:>14} {:>14}",
                "loss", "max_rel_err", "mean_rel_err"
            );
            let mut worst = 0.0f64;
            for kind in [
                LossKind::ClipKeyword,
                LossKind::VideoKeyword,
                LossKind::Keyword,
            ] {
                let (mut max, mut mean_sum, mut blocks) = (0.0f64, 0.0, 0usize);
                for c in 0..configs {
                    let batch = random_batch(cfg.seed.wrapping_add(c as u64), 4, 8, 5, 16);
                    let report =
                        grad_check(kind, &batch, h, coords, cfg.seed.wrapping_add(c as u64))?;
                    for b in &report.blocks {
                        max = max.max(b.max_rel_error);
                        mean_sum += b.mean_rel_error;
                        blocks += 1;
                    }
                }
                println!(
                    "{:<14} {:>14.3e} {:>14.3e}",
                    kind.name(),
                    max,
                    mean_sum / blocks.max(1) as f64
                );
                worst = worst.max(max);
            }
            if worst > tol {
                return Err(Error::Numerical(format!(
                    "max relative error {worst:.3e} exceeds tolerance {tol:.1e}"
                )));
            }
        }
        Command::Eval { dataset } => {
            let preds = load_predictions(shared.input()?)?;
            let dataset = load_dataset(dataset)?;
            let report = evaluate(&preds, &dataset, &cfg)?;
            for (name, value) in report.rows() {
                println!("{name:<10} {value:.4}");
            }
            if let Some(out) = shared.out.as_deref() {
                csv_to(Some(out), |buf| report.write_csv(buf))?;
            }
        }
        Command::Sweep { values } => {
            let dataset = load_dataset(shared.input()?)?;
            let values = values.unwrap_or_else(default_sweep_values);
            let result = sweep(&dataset, &cfg, &values)?;
            csv_to(shared.out.as_deref(), |buf| write_sweep(&result.rows, buf))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_validation() {
                ExitCode::from(2)
            } else if matches!(err, Error::Numerical(_)) {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
