//! Experiment configuration and its flat `key = value` text form.
//!
//! Every field has a dotted key (`kge.dim`, `quality.epsilon_high`, ...).
//! Files may contain `#` comments and blank lines; unknown keys are errors.
//! The global `seed` feeds every stage, and the mapper shares the quality
//! degree thresholds.

use std::path::{Path, PathBuf};

use degscope_core::kge::KgeConfig;
use degscope_core::mapper::MapperConfig;
use degscope_core::quality::{QualityConfig, Threshold};
use degscope_core::sampler::SamplerConfig;
use degscope_core::stats::Target;
use degscope_core::synth::{ScaleFreeConfig, TextSource};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::DatasetFormat;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    /// Fraction of each graph's triples withheld as closed-world test queries.
    pub holdout_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextSettings {
    pub source: TextSource,
    /// Text embedding file, required when `source` is `file`.
    pub path: Option<PathBuf>,
    pub dim: usize,
    /// Standard deviation of the Gaussian noise added to synthetic vectors.
    pub noise: f64,
    /// Fraction of entities treated as unseen in open-world evaluation.
    pub open_fraction: f64,
    /// Linear map from graph to text space for synthetic vectors.
    pub map: TextMap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextMap {
    /// Gaussian matrix with entries of variance `1 / text.dim`.
    Random,
    /// Identity; requires `text.dim` to equal the embedding dimension.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolSettings {
    /// Base sample count; must be a power of two.
    pub samples: usize,
    pub target: Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSettings {
    /// Also report exact permutation p-values when the sample is small enough.
    pub permutation: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: Option<PathBuf>,
    pub format: DatasetFormat,
    pub out: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub synth: ScaleFreeConfig,
    pub sampler: SamplerConfig,
    pub kge: KgeConfig,
    pub eval: EvalSettings,
    pub quality: QualityConfig,
    pub mapper: MapperConfig,
    pub text: TextSettings,
    pub sobol: SobolSettings,
    pub correlation: CorrelationSettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: None,
            format: DatasetFormat::TsvTriples,
            out: PathBuf::from("out"),
            seed: 0,
            workers: 1,
            synth: ScaleFreeConfig::default(),
            sampler: SamplerConfig::default(),
            kge: KgeConfig::default(),
            eval: EvalSettings {
                holdout_fraction: 0.1,
            },
            quality: QualityConfig::default(),
            mapper: MapperConfig::default(),
            text: TextSettings {
                source: TextSource::Synthetic,
                path: None,
                dim: 64,
                noise: 0.1,
                open_fraction: 0.1,
                map: TextMap::Random,
            },
            sobol: SobolSettings {
                samples: 4096,
                target: Target::Mrr,
            },
            correlation: CorrelationSettings { permutation: true },
        }
    }
}

/// Unit-variant enums use their serde names in the text form.
fn enum_to_string<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        other => panic!("not a unit enum: {other:?}"),
    }
}

fn parse_enum<T: DeserializeOwned>(s: &str) -> std::result::Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

fn parse_num<T: std::str::FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(|e| e.to_string())
}

fn parse_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got `{s}`")),
    }
}

/// `p25` is the 25th percentile of non-zero degrees; a bare integer is an absolute degree.
pub fn parse_threshold(s: &str) -> std::result::Result<Threshold, String> {
    match s.strip_prefix('p') {
        Some(p) => Ok(Threshold::Percentile(parse_num(p)?)),
        None => Ok(Threshold::Degree(parse_num(s)?)),
    }
}

pub fn threshold_to_string(t: Threshold) -> String {
    match t {
        Threshold::Percentile(p) => format!("p{p}"),
        Threshold::Degree(d) => d.to_string(),
    }
}

fn parse_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split(',')
        .map(str::trim)
        .filter(|x| !x.is_empty())
        .map(parse_num)
        .collect()
}

fn opt_path(s: &str) -> Option<PathBuf> {
    (!s.is_empty()).then(|| PathBuf::from(s))
}

fn path_string(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl ExperimentConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let q = &self.quality;
        let m = &self.mapper;
        vec![
            ("dataset", path_string(&self.dataset)),
            ("format", self.format.tag().into()),
            ("out", self.out.display().to_string()),
            ("seed", self.seed.to_string()),
            ("workers", self.workers.to_string()),
            ("synth.entities", self.synth.entities.to_string()),
            ("synth.edges_per_node", self.synth.edges_per_node.to_string()),
            ("synth.relations", self.synth.relations.to_string()),
            ("synth.entity_types", self.synth.entity_types.to_string()),
            ("synth.typed_fraction", self.synth.typed_fraction.to_string()),
            ("sampler.ratio_min", self.sampler.ratio_min.to_string()),
            ("sampler.ratio_max", self.sampler.ratio_max.to_string()),
            ("sampler.top_k_start", self.sampler.top_k_start.to_string()),
            ("sampler.num_samples", self.sampler.num_samples.to_string()),
            ("kge.scorer", self.kge.scorer.tag().into()),
            ("kge.dim", self.kge.dim.to_string()),
            ("kge.epochs", self.kge.epochs.to_string()),
            ("kge.learning_rate", self.kge.learning_rate.to_string()),
            ("kge.margin", self.kge.margin.to_string()),
            ("kge.negatives_per_positive", self.kge.negatives_per_positive.to_string()),
            ("kge.batch_size", self.kge.batch_size.to_string()),
            ("eval.holdout_fraction", self.eval.holdout_fraction.to_string()),
            ("quality.alpha", q.alpha.to_string()),
            ("quality.k_neighbors", q.k_neighbors.to_string()),
            ("quality.distance", enum_to_string(&q.distance)),
            ("quality.sample_size", q.sample_size.to_string()),
            ("quality.epsilon_low", threshold_to_string(q.thresholds.low)),
            ("quality.epsilon_high", threshold_to_string(q.thresholds.high)),
            (
                "mapper.hidden_dims",
                m.hidden_dims
                    .iter()
                    .map(|d| d.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            ),
            ("mapper.activation", enum_to_string(&m.activation)),
            ("mapper.loss", enum_to_string(&m.loss)),
            ("mapper.epochs", m.epochs.to_string()),
            ("mapper.learning_rate", m.learning_rate.to_string()),
            ("mapper.batch_size", m.batch_size.to_string()),
            ("mapper.weighting", enum_to_string(&m.weighting)),
            ("text.source", enum_to_string(&self.text.source)),
            ("text.path", path_string(&self.text.path)),
            ("text.dim", self.text.dim.to_string()),
            ("text.noise", self.text.noise.to_string()),
            ("text.open_fraction", self.text.open_fraction.to_string()),
            ("text.map", enum_to_string(&self.text.map)),
            ("sobol.samples", self.sobol.samples.to_string()),
            ("sobol.target", enum_to_string(&self.sobol.target)),
            ("correlation.permutation", self.correlation.permutation.to_string()),
        ]
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let r: std::result::Result<(), String> = (|| {
            match key {
                "dataset" => self.dataset = opt_path(v),
                "format" => self.format = v.parse()?,
                "out" => self.out = PathBuf::from(v),
                "seed" => self.seed = parse_num(v)?,
                "workers" => self.workers = parse_num(v)?,
                "synth.entities" => self.synth.entities = parse_num(v)?,
                "synth.edges_per_node" => self.synth.edges_per_node = parse_num(v)?,
                "synth.relations" => self.synth.relations = parse_num(v)?,
                "synth.entity_types" => self.synth.entity_types = parse_num(v)?,
                "synth.typed_fraction" => self.synth.typed_fraction = parse_num(v)?,
                "sampler.ratio_min" => self.sampler.ratio_min = parse_num(v)?,
                "sampler.ratio_max" => self.sampler.ratio_max = parse_num(v)?,
                "sampler.top_k_start" => self.sampler.top_k_start = parse_num(v)?,
                "sampler.num_samples" => self.sampler.num_samples = parse_num(v)?,
                "kge.scorer" => self.kge.scorer = parse_enum(v)?,
                "kge.dim" => self.kge.dim = parse_num(v)?,
                "kge.epochs" => self.kge.epochs = parse_num(v)?,
                "kge.learning_rate" => self.kge.learning_rate = parse_num(v)?,
                "kge.margin" => self.kge.margin = parse_num(v)?,
                "kge.negatives_per_positive" => self.kge.negatives_per_positive = parse_num(v)?,
                "kge.batch_size" => self.kge.batch_size = parse_num(v)?,
                "eval.holdout_fraction" => self.eval.holdout_fraction = parse_num(v)?,
                "quality.alpha" => self.quality.alpha = parse_num(v)?,
                "quality.k_neighbors" => self.quality.k_neighbors = parse_num(v)?,
                "quality.distance" => self.quality.distance = parse_enum(v)?,
                "quality.sample_size" => self.quality.sample_size = parse_num(v)?,
                "quality.epsilon_low" => self.quality.thresholds.low = parse_threshold(v)?,
                "quality.epsilon_high" => self.quality.thresholds.high = parse_threshold(v)?,
                "mapper.hidden_dims" => self.mapper.hidden_dims = parse_list(v)?,
                "mapper.activation" => self.mapper.activation = parse_enum(v)?,
                "mapper.loss" => self.mapper.loss = parse_enum(v)?,
                "mapper.epochs" => self.mapper.epochs = parse_num(v)?,
                "mapper.learning_rate" => self.mapper.learning_rate = parse_num(v)?,
                "mapper.batch_size" => self.mapper.batch_size = parse_num(v)?,
                "mapper.weighting" => self.mapper.weighting = parse_enum(v)?,
                "text.source" => self.text.source = parse_enum(v)?,
                "text.path" => self.text.path = opt_path(v),
                "text.dim" => self.text.dim = parse_num(v)?,
                "text.noise" => self.text.noise = parse_num(v)?,
                "text.open_fraction" => self.text.open_fraction = parse_num(v)?,
                "text.map" => self.text.map = parse_enum(v)?,
                "sobol.samples" => self.sobol.samples = parse_num(v)?,
                "sobol.target" => self.sobol.target = parse_enum(v)?,
                "correlation.permutation" => self.correlation.permutation = parse_bool(v)?,
                _ => return Err(format!("unknown key `{key}`")),
            }
            Ok(())
        })();
        r.map_err(|m| Error::Usage(format!("config `{key}`: {m}")))
    }

    /// Applies `key = value` lines on top of the current values.
    pub fn apply_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.into(),
                line: i + 1,
                message: "expected `key = value`".into(),
            })?;
            self.set(k.trim(), v).map_err(|e| Error::Parse {
                path: path.into(),
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(path, &text)?;
        Ok(cfg)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut section = "";
        for (k, v) in self.entries() {
            let sec = k.split_once('.').map_or("", |(s, _)| s);
            if sec != section {
                s.push('\n');
                section = sec;
            }
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    /// Stage configs with the global seed and shared thresholds applied.
    pub fn synth_config(&self) -> ScaleFreeConfig {
        ScaleFreeConfig {
            seed: self.seed,
            ..self.synth.clone()
        }
    }

    pub fn sampler_config(&self) -> SamplerConfig {
        SamplerConfig {
            seed: self.seed,
            ..self.sampler.clone()
        }
    }

    pub fn kge_config(&self) -> KgeConfig {
        KgeConfig {
            seed: self.seed,
            ..self.kge.clone()
        }
    }

    pub fn quality_config(&self) -> QualityConfig {
        QualityConfig {
            seed: self.seed,
            ..self.quality.clone()
        }
    }

    pub fn mapper_config(&self) -> MapperConfig {
        MapperConfig {
            seed: self.seed,
            thresholds: self.quality.thresholds,
            ..self.mapper.clone()
        }
    }

    /// Checks every stage config plus the settings owned by this crate.
    pub fn validate(&self) -> Result<()> {
        self.sampler_config().validate()?;
        self.kge_config().validate()?;
        self.quality_config().validate()?;
        self.mapper_config().validate()?;
        if self.format == DatasetFormat::Synthetic {
            self.synth_config().validate()?;
        }
        let bad = |m: &str| Err(Error::Usage(m.into()));
        if self.workers == 0 {
            return bad("workers must be positive");
        }
        if !(self.eval.holdout_fraction > 0.0 && self.eval.holdout_fraction < 1.0) {
            return bad("eval.holdout_fraction must lie in (0, 1)");
        }
        if !(self.text.open_fraction > 0.0 && self.text.open_fraction < 1.0) {
            return bad("text.open_fraction must lie in (0, 1)");
        }
        if self.text.dim == 0 || !(self.text.noise >= 0.0) {
            return bad("text.dim must be positive and text.noise non-negative");
        }
        if self.text.source == TextSource::File && self.text.path.is_none() {
            return bad("text.source = file needs text.path");
        }
        if !self.sobol.samples.is_power_of_two() {
            return bad("sobol.samples must be a power of two");
        }
        Ok(())
    }
}
