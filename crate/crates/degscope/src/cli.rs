//! Command-line front end.
//!
//! Settings resolve in order: built-in defaults, the `--config` file,
//! `--set key=value` pairs, then dedicated flags. The effective
//! configuration and a manifest are written to the output directory even
//! when a command fails.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::commands;
use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::exec::RayonExecutor;
use crate::manifest::{Run, Status};
use crate::pipeline::pipeline;

#[derive(Debug, Parser)]
#[command(name = "degscope", version, about = "Degree-distribution diagnostics for knowledge-graph link prediction")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Global seed for every stochastic stage.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads; affects wall-clock time only.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Override any configuration key, e.g. `--set kge.dim=32`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Triple file or dataset directory.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// tsv-triples, owe-directory or synthetic.
    #[arg(long)]
    pub format: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum QualityModeArg {
    ByDegree,
    ByDistribution,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Structural characteristics of a dataset.
    Stats {
        #[command(flatten)]
        data: DatasetArgs,
    },
    /// Write the synthetic scale-free graph as a triple file.
    Synth,
    /// Sample connected subgraphs.
    Sample {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        num_samples: Option<usize>,
    },
    /// Train graph embeddings on the training split.
    TrainKge {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        scorer: Option<String>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Filtered tail-prediction evaluation of trained embeddings.
    Eval {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, value_name = "DIR")]
        embeddings: PathBuf,
        /// Test triples; defaults to the dataset's test split.
        #[arg(long, value_name = "PATH")]
        test: Option<PathBuf>,
    },
    /// Embedding quality by degree stratum or across two subgraphs.
    Quality {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, value_enum, default_value = "by-degree")]
        mode: QualityModeArg,
        /// One embedding directory, or two for by-distribution.
        #[arg(long, value_name = "DIR", num_args = 1..)]
        embeddings: Vec<PathBuf>,
        /// Two triple files for by-distribution.
        #[arg(long, value_name = "PATH", num_args = 1..)]
        subgraphs: Vec<PathBuf>,
        /// Weight of neighbour overlap against relation overlap in link similarity
        #[arg(long)]
        alpha: Option<f64>,
        /// Size of the most- and least-similar entity sets
        #[arg(long)]
        k_neighbors: Option<usize>,
        /// euclidean or cosine
        #[arg(long)]
        distance: Option<String>,
        /// Entities sampled per stratum
        #[arg(long)]
        sample_size: Option<usize>,
        /// Degree threshold: `p25` for a percentile or an absolute degree.
        #[arg(long)]
        epsilon_low: Option<String>,
        /// Upper degree threshold, same forms as --epsilon-low
        #[arg(long)]
        epsilon_high: Option<String>,
    },
    /// Surrogate fit and Sobol indices over a labeled-sample table.
    Sobol {
        /// `labeled_samples.csv` from a pipeline run.
        #[arg(long, value_name = "PATH")]
        samples: PathBuf,
        #[arg(long, value_name = "N")]
        sobol_samples: Option<usize>,
        /// mrr or hits10.
        #[arg(long)]
        target: Option<String>,
    },
    /// Characteristic-performance correlations, or entity degree against per-entity MRR.
    Correlate {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long, value_name = "PATH", conflicts_with = "embeddings")]
        samples: Option<PathBuf>,
        #[arg(long, value_name = "DIR")]
        embeddings: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        test: Option<PathBuf>,
    },
    /// Train the text-to-graph mapper with per-degree-group tracing.
    TrainMapper {
        #[command(flatten)]
        data: DatasetArgs,
        /// Reference embeddings of the full graph.
        #[arg(long, value_name = "DIR")]
        embeddings: PathBuf,
        /// synthetic or file.
        #[arg(long)]
        text_source: Option<String>,
        /// Text embedding file for `--text-source file`.
        #[arg(long, value_name = "PATH")]
        text: Option<PathBuf>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Comma-separated hidden widths; empty for a linear mapper.
        #[arg(long, value_name = "LIST")]
        hidden_dims: Option<String>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Full study: sampling, per-subgraph training, surrogate, Sobol,
    /// correlations, degree analysis and quality.
    Pipeline {
        #[command(flatten)]
        data: DatasetArgs,
        #[arg(long)]
        num_samples: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Stats { .. } => "stats",
            Command::Synth => "synth",
            Command::Sample { .. } => "sample",
            Command::TrainKge { .. } => "train-kge",
            Command::Eval { .. } => "eval",
            Command::Quality { .. } => "quality",
            Command::Sobol { .. } => "sobol",
            Command::Correlate { .. } => "correlate",
            Command::TrainMapper { .. } => "train-mapper",
            Command::Pipeline { .. } => "pipeline",
        }
    }

    /// Configuration overrides carried by dedicated flags.
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o: Vec<(&'static str, String)> = Vec::new();
        fn put<T: ToString>(o: &mut Vec<(&'static str, String)>, k: &'static str, v: &Option<T>) {
            if let Some(v) = v {
                o.push((k, v.to_string()));
            }
        }
        let data = match self {
            Command::Stats { data }
            | Command::Sample { data, .. }
            | Command::TrainKge { data, .. }
            | Command::Eval { data, .. }
            | Command::Quality { data, .. }
            | Command::Correlate { data, .. }
            | Command::TrainMapper { data, .. }
            | Command::Pipeline { data, .. } => Some(data),
            Command::Synth | Command::Sobol { .. } => None,
        };
        if let Some(d) = data {
            put(&mut o, "dataset", &d.dataset.as_ref().map(|p| p.display().to_string()));
            put(&mut o, "format", &d.format);
        }
        match self {
            Command::Sample { num_samples, .. } | Command::Pipeline { num_samples, .. } => {
                put(&mut o, "sampler.num_samples", num_samples)
            }
            Command::TrainKge {
                scorer,
                dim,
                epochs,
                learning_rate,
                ..
            } => {
                put(&mut o, "kge.scorer", scorer);
                put(&mut o, "kge.dim", dim);
                put(&mut o, "kge.epochs", epochs);
                put(&mut o, "kge.learning_rate", learning_rate);
            }
            Command::Quality {
                alpha,
                k_neighbors,
                distance,
                sample_size,
                epsilon_low,
                epsilon_high,
                ..
            } => {
                put(&mut o, "quality.alpha", alpha);
                put(&mut o, "quality.k_neighbors", k_neighbors);
                put(&mut o, "quality.distance", distance);
                put(&mut o, "quality.sample_size", sample_size);
                put(&mut o, "quality.epsilon_low", epsilon_low);
                put(&mut o, "quality.epsilon_high", epsilon_high);
            }
            Command::Sobol {
                sobol_samples,
                target,
                ..
            } => {
                put(&mut o, "sobol.samples", sobol_samples);
                put(&mut o, "sobol.target", target);
            }
            Command::TrainMapper {
                text_source,
                text,
                noise,
                epochs,
                hidden_dims,
                learning_rate,
                ..
            } => {
                put(&mut o, "text.source", text_source);
                put(&mut o, "text.path", &text.as_ref().map(|p| p.display().to_string()));
                put(&mut o, "text.noise", noise);
                put(&mut o, "mapper.epochs", epochs);
                put(&mut o, "mapper.hidden_dims", hidden_dims);
                put(&mut o, "mapper.learning_rate", learning_rate);
            }
            _ => {}
        }
        o
    }
}

fn split_kv(s: &str) -> Result<(&str, &str)> {
    s.split_once('=')
        .map(|(k, v)| (k.trim(), v))
        .ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got `{s}`")))
}

/// Resolves the effective configuration. The output directory is applied
/// first so a manifest can be written even if later settings are invalid.
pub fn resolve_config(cli: &Cli) -> (ExperimentConfig, Result<()>) {
    let mut cfg = ExperimentConfig::default();
    let mut status = Ok(());
    if let Some(p) = &cli.config {
        match ExperimentConfig::load(p) {
            Ok(c) => cfg = c,
            Err(e) => status = Err(e),
        }
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if status.is_err() {
        return (cfg, status);
    }
    let r = (|| {
        for s in &cli.set {
            let (k, v) = split_kv(s)?;
            cfg.set(k, v)?;
        }
        for (k, v) in cli.command.overrides() {
            cfg.set(k, &v)?;
        }
        if let Some(seed) = cli.seed {
            cfg.seed = seed;
        }
        if let Some(w) = cli.workers {
            cfg.workers = w;
        }
        if let Some(out) = &cli.out {
            cfg.out = out.clone();
        }
        cfg.validate()
    })();
    (cfg, r)
}

fn execute(cli: &Cli, cfg: &ExperimentConfig, run: &mut Run) -> Result<String> {
    let exec = RayonExecutor::new(cfg.workers);
    match &cli.command {
        Command::Stats { .. } => {
            let r = commands::stats(cfg, run)?;
            Ok(json(&r))
        }
        Command::Synth => {
            let g = commands::synth(cfg, run)?;
            Ok(format!(
                "{} entities, {} relations, {} triples",
                g.num_entities(),
                g.num_relations(),
                g.num_triples()
            ))
        }
        Command::Sample { .. } => {
            let o = commands::sample(cfg, run, &exec)?;
            Ok(format!("{} samples, {} failed", o.samples.len(), o.failures.len()))
        }
        Command::TrainKge { .. } => {
            let t = commands::train(cfg, run)?;
            Ok(format!("trained {} entities, dim {}", t.num_entities(), t.dim))
        }
        Command::Eval { embeddings, test, .. } => {
            let r = commands::eval(cfg, run, embeddings, test.as_deref(), &exec)?;
            Ok(json(&crate::analysis::EvaluationSummary::of(&r)))
        }
        Command::Quality {
            mode,
            embeddings,
            subgraphs,
            ..
        } => {
            let r = match mode {
                QualityModeArg::ByDegree => {
                    let [e] = embeddings.as_slice() else {
                        return Err(Error::Usage("by-degree takes exactly one --embeddings directory".into()));
                    };
                    commands::quality_by_degree(cfg, run, e, &exec)?
                }
                QualityModeArg::ByDistribution => {
                    let ([s1, s2], [e1, e2]) = (subgraphs.as_slice(), embeddings.as_slice()) else {
                        return Err(Error::Usage(format!(
                            "by-distribution needs two --subgraphs and two --embeddings (got {} and {})",
                            subgraphs.len(),
                            embeddings.len()
                        )));
                    };
                    commands::quality_by_distribution(cfg, run, [s1, s2], [e1, e2], &exec)?
                }
            };
            Ok(json(&r.means))
        }
        Command::Sobol { samples, .. } => {
            let r = commands::sobol(cfg, run, samples, &exec)?;
            Ok(json(&r.indices.first_order))
        }
        Command::Correlate {
            samples,
            embeddings,
            test,
            ..
        } => match (samples, embeddings) {
            (Some(s), None) => {
                let r = commands::correlate_samples(cfg, run, s)?;
                Ok(format!("{} correlations over {} samples", r.correlations.len(), r.samples))
            }
            (None, Some(e)) => {
                let r = commands::correlate_degree(cfg, run, e, test.as_deref(), &exec)?;
                Ok(json(&r.unbinned))
            }
            _ => Err(Error::Usage("correlate needs --samples or --embeddings".into())),
        },
        Command::TrainMapper { embeddings, .. } => {
            let r = commands::train_mapper_cmd(cfg, run, embeddings, &exec)?;
            Ok(json(&r.evaluation))
        }
        Command::Pipeline { .. } => {
            let r = pipeline(cfg, run, &exec)?;
            Ok(json(&r))
        }
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_default()
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status: 0 if every stage succeeded, 1 if a computation
/// failed or only partly succeeded, 2 for invalid input or usage.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (cfg, setup) = resolve_config(&cli);
    let shown: Vec<String> = args
        .iter()
        .skip(1)
        .map(|a| a.to_string_lossy().into_owned())
        .collect();
    let mut run = Run::new(cli.command.name(), shown, &cfg);
    let outcome = setup.and_then(|_| execute(&cli, &cfg, &mut run));
    let (manifest, outcome) = run.finish(outcome);
    match outcome {
        Ok(msg) => {
            println!("{msg}");
            if manifest.status == Status::Partial {
                for s in manifest.stages.iter().filter(|s| !s.errors.is_empty()) {
                    for e in &s.errors {
                        eprintln!("warning: {}: {e}", s.name);
                    }
                }
                return 1;
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
