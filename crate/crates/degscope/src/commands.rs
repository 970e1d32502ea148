//! One function per subcommand. Each reads its inputs, writes its reports
//! into the run's output directory, and returns the in-memory result.

use std::collections::BTreeMap;
use std::path::Path;

use degscope_core::kge::{train_kge, EmbeddingTable};
use degscope_core::mapper::{
    epoch_peak, predict_open_world, reference_ranking, train_mapper, MapperRun,
};
use degscope_core::quality::{compare_by_degree, compare_by_distribution, QualityReport};
use degscope_core::rank::{evaluate_tails, RankingResult, TailFilter};
use degscope_core::sampler::{sample_batch, BatchOutcome};
use degscope_core::stats::{
    fit_surrogate, per_entity_degree_correlation, DegreeCorrelation, LabeledSample,
};
use degscope_core::structure::structural_characteristics;
use degscope_core::synth::{
    open_world_split, synth_text_embeddings, synth_text_with_map, Matrix, TextSource,
};
use degscope_core::{Executor, KnowledgeGraph, StructuralCharacteristics, Triple};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    correlation_report, read_labeled, sobol_report, write_correlations, write_degree_correlation,
    write_losses, write_quality, write_ranks, write_sample, write_sobol, CorrelationReport,
    EvaluationSummary, SampleRecord, SobolReport,
};
use crate::config::{ExperimentConfig, TextMap};
use crate::dataset::{load_dataset, open_dataset, parse_triples, Dataset, DatasetFormat, Split};
use crate::embfile::{align_table, load_table, load_text, save_table, save_text};
use crate::error::{Error, Result};
use crate::manifest::Run;
use crate::report::{write_csv, write_csv_records, write_json};

pub fn open(cfg: &ExperimentConfig) -> Result<Dataset> {
    open_dataset(cfg.dataset.as_deref(), cfg.format, &cfg.synth_config())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub dataset: Option<String>,
    pub format: DatasetFormat,
    /// Counts over every split.
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub duplicates: usize,
    pub split_triples: BTreeMap<Split, usize>,
    /// Measured on the training split.
    pub characteristics: StructuralCharacteristics,
}

pub fn stats(cfg: &ExperimentConfig, run: &mut Run) -> Result<StatsReport> {
    let ds = run.stage("load", |_| open(cfg))?;
    run.stage("characteristics", |run| {
        let train = ds.training_graph();
        let report = StatsReport {
            dataset: cfg.dataset.as_ref().map(|p| p.display().to_string()),
            format: ds.format,
            entities: ds.graph.num_entities(),
            relations: ds.graph.num_relations(),
            triples: ds.graph.num_triples(),
            duplicates: ds.duplicates,
            split_triples: ds.splits.iter().map(|(s, t)| (*s, t.len())).collect(),
            characteristics: structural_characteristics(&train)?,
        };
        write_json(&run.artifact("characteristics.json"), "characteristics", &report)?;
        let vals = report.characteristics.to_array();
        let rows: Vec<Vec<String>> = StructuralCharacteristics::NAMES
            .iter()
            .zip(vals)
            .map(|(n, v)| vec![n.to_string(), v.to_string()])
            .collect();
        write_csv_records(&run.artifact("characteristics.csv"), &["name", "value"], &rows)?;
        Ok(report)
    })
}

/// Writes the generated synthetic graph as `graph.tsv`.
pub fn synth(cfg: &ExperimentConfig, run: &mut Run) -> Result<KnowledgeGraph> {
    run.stage("generate", |run| {
        let ds = Dataset::synthetic(&cfg.synth_config())?;
        crate::dataset::write_graph(&run.artifact("graph.tsv"), &ds.graph)?;
        Ok(ds.graph)
    })
}

/// Samples subgraphs of the training graph; failed samples are recorded and skipped.
pub fn sample<E: Executor>(cfg: &ExperimentConfig, run: &mut Run, exec: &E) -> Result<BatchOutcome> {
    let ds = run.stage("load", |_| open(cfg))?;
    let g = ds.training_graph();
    let scfg = cfg.sampler_config();
    let outcome = run.stage("sample", |run| {
        let outcome = sample_batch(&g, &scfg, exec)?;
        for f in &outcome.failures {
            run.item_error(format!("sample {}: {}", f.sample_index, f.error));
        }
        Ok(outcome)
    })?;
    run.stage("write_samples", |run| {
        let mut records = Vec::with_capacity(outcome.samples.len());
        for s in &outcome.samples {
            write_sample(run, s, scfg.seed)?;
            records.push(SampleRecord::of(s, scfg.seed));
        }
        write_csv(&run.artifact("samples.csv"), &records)
    })?;
    Ok(outcome)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeSummary {
    pub scorer: String,
    pub dim: usize,
    pub epochs: usize,
    pub entities: usize,
    pub relations: usize,
    pub triples: usize,
    pub final_loss: f64,
    pub skipped_negatives: usize,
}

pub fn train(cfg: &ExperimentConfig, run: &mut Run) -> Result<EmbeddingTable> {
    let ds = run.stage("load", |_| open(cfg))?;
    let g = ds.training_graph();
    let kcfg = cfg.kge_config();
    let trained = run.stage("train_kge", |_| Ok(train_kge(&g, &kcfg)?))?;
    run.stage("write_embeddings", |run| {
        run.artifact("embeddings/entities.emb");
        run.artifact("embeddings/relations.emb");
        save_table(&run.out_dir().join("embeddings"), &trained.table)?;
        write_losses(&run.artifact("kge_losses.csv"), &trained.epoch_losses)?;
        let summary = KgeSummary {
            scorer: kcfg.scorer.tag().into(),
            dim: kcfg.dim,
            epochs: kcfg.epochs,
            entities: g.num_entities(),
            relations: g.num_relations(),
            triples: g.num_triples(),
            final_loss: *trained.epoch_losses.last().unwrap_or(&f64::NAN),
            skipped_negatives: trained.skipped_negatives,
        };
        write_json(&run.artifact("kge.json"), "kge", &summary)
    })?;
    Ok(trained.table)
}

/// Maps labelled triples into `g`'s ids; returns the resolved triples and
/// the number dropped because a label is unknown to `g`.
fn resolve_labeled<'a>(
    g: &KnowledgeGraph,
    rows: impl IntoIterator<Item = (&'a str, &'a str, &'a str)>,
) -> (Vec<Triple>, usize) {
    let mut out = Vec::new();
    let mut skipped = 0;
    for (h, r, t) in rows {
        match g.resolve(h, r, t) {
            Ok(tr) => out.push(tr),
            Err(_) => skipped += 1,
        }
    }
    (out, skipped)
}

fn labels_of(g: &KnowledgeGraph, t: &Triple) -> (String, String, String) {
    (
        g.entity_label(t.head).into(),
        g.relation_label(t.relation).into(),
        g.entity_label(t.tail).into(),
    )
}

/// Closed-world test queries resolved against the training graph.
pub struct TestSet {
    pub graph: KnowledgeGraph,
    pub table: EmbeddingTable,
    pub test: Vec<Triple>,
    pub filter: TailFilter<(degscope_core::EntityId, degscope_core::RelationId)>,
    pub skipped: usize,
}

/// Loads embeddings aligned to the training graph and resolves test triples
/// from `test` (a triple file) or the dataset's test split.
pub fn test_set(cfg: &ExperimentConfig, embeddings: &Path, test: Option<&Path>) -> Result<TestSet> {
    let ds = open(cfg)?;
    let graph = ds.training_graph();
    let table = align_table(&load_table(embeddings)?, &graph)?;
    let rows: Vec<(String, String, String)> = match test {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            parse_triples(p, &text)?
        }
        None if !ds.split(Split::Test).is_empty() => ds
            .split(Split::Test)
            .iter()
            .map(|t| labels_of(&ds.graph, t))
            .collect(),
        None => {
            return Err(Error::Usage(
                "no test triples: pass --test or use a dataset with a test split".into(),
            ))
        }
    };
    let (test, skipped) =
        resolve_labeled(&graph, rows.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())));
    if test.is_empty() {
        return Err(Error::Format("no test triple resolves against the training graph".into()));
    }
    let all: Vec<(String, String, String)> =
        ds.graph.triples().iter().map(|t| labels_of(&ds.graph, t)).collect();
    let (mut known, _) =
        resolve_labeled(&graph, all.iter().map(|(h, r, t)| (h.as_str(), r.as_str(), t.as_str())));
    known.extend_from_slice(&test);
    let filter = TailFilter::from_triples(known.iter());
    Ok(TestSet {
        graph,
        table,
        test,
        filter,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub summary: EvaluationSummary,
    pub filtered: bool,
    /// Test triples naming an entity or relation outside the training graph.
    pub skipped: usize,
}

pub fn eval<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    embeddings: &Path,
    test: Option<&Path>,
    exec: &E,
) -> Result<RankingResult> {
    let ts = run.stage("load", |_| test_set(cfg, embeddings, test))?;
    let ranking = run.stage("evaluate", |_| Ok(evaluate_tails(&ts.table, &ts.test, &ts.filter, exec)?))?;
    run.stage("write_reports", |run| {
        let report = EvalReport {
            summary: EvaluationSummary::of(&ranking),
            filtered: true,
            skipped: ts.skipped,
        };
        write_json(&run.artifact("evaluation.json"), "evaluation", &report)?;
        write_ranks(&run.artifact("ranks.csv"), &ts.table, &ranking)
    })?;
    Ok(ranking)
}

pub fn quality_by_degree<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    embeddings: &Path,
    exec: &E,
) -> Result<QualityReport> {
    let (g, emb) = run.stage("load", |_| {
        let g = open(cfg)?.training_graph();
        let emb = align_table(&load_table(embeddings)?, &g)?;
        Ok((g, emb))
    })?;
    let report = run.stage("quality", |_| Ok(compare_by_degree(&g, &emb, &cfg.quality_config(), exec)?))?;
    run.stage("write_reports", |run| write_quality(run, &report))?;
    Ok(report)
}

/// Compares two subgraphs (triple files) under their own embeddings.
pub fn quality_by_distribution<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    subgraphs: [&Path; 2],
    embeddings: [&Path; 2],
    exec: &E,
) -> Result<QualityReport> {
    let loaded = run.stage("load", |_| {
        let mut out = Vec::new();
        for (s, e) in subgraphs.iter().zip(embeddings) {
            let g = load_dataset(s, DatasetFormat::TsvTriples)?.graph;
            let emb = align_table(&load_table(e)?, &g)?;
            out.push((g, emb));
        }
        Ok(out)
    })?;
    let report = run.stage("quality", |_| {
        Ok(compare_by_distribution(
            &loaded[0].0,
            &loaded[1].0,
            &loaded[0].1,
            &loaded[1].1,
            &cfg.quality_config(),
            exec,
        )?)
    })?;
    run.stage("write_reports", |run| write_quality(run, &report))?;
    Ok(report)
}

fn load_samples(path: &Path) -> Result<(Vec<crate::analysis::LabeledRow>, Vec<LabeledSample>)> {
    let rows = read_labeled(path)?;
    let samples = rows.iter().map(|r| r.labeled()).collect();
    Ok((rows, samples))
}

pub fn sobol<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    samples: &Path,
    exec: &E,
) -> Result<SobolReport> {
    let (_, labeled) = run.stage("load", |_| load_samples(samples))?;
    let surrogate = run.stage("surrogate", |run| {
        let s = fit_surrogate(&labeled, cfg.sobol.target)?;
        write_json(&run.artifact("surrogate.json"), "surrogate", &s)?;
        Ok(s)
    })?;
    run.stage("sobol", |run| {
        let r = sobol_report(&surrogate, &labeled, cfg.sobol.target, cfg.sobol.samples, cfg.seed, exec)?;
        write_sobol(run, &r)?;
        Ok(r)
    })
}

pub fn correlate_samples(cfg: &ExperimentConfig, run: &mut Run, samples: &Path) -> Result<CorrelationReport> {
    let (rows, labeled) = run.stage("load", |_| load_samples(samples))?;
    run.stage("correlation", |run| {
        let r = correlation_report(&labeled, cfg.correlation.permutation)?;
        write_correlations(run, &r, &rows)?;
        Ok(r)
    })
}

/// Entity degree in the training graph against per-entity tail MRR.
pub fn correlate_degree<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    embeddings: &Path,
    test: Option<&Path>,
    exec: &E,
) -> Result<DegreeCorrelation> {
    let ts = run.stage("load", |_| test_set(cfg, embeddings, test))?;
    let ranking = run.stage("evaluate", |_| Ok(evaluate_tails(&ts.table, &ts.test, &ts.filter, exec)?))?;
    run.stage("degree_correlation", |run| {
        let dc = per_entity_degree_correlation(&ts.graph, &ranking.per_tail_mrr())?;
        write_degree_correlation(run, &ts.graph, &dc, ts.test.len())?;
        Ok(dc)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperEvaluation {
    pub open_entities: usize,
    pub queries: usize,
    pub text_source: TextSource,
    /// Mapper after the last epoch.
    pub final_ranking: EvaluationSummary,
    /// Queries skipped because the open entity has no text vector.
    pub skipped: usize,
    /// 1-based epoch of peak MRR.
    pub best_epoch: Option<usize>,
    /// Same queries ranked from each open entity's own graph vector.
    pub reference_ranking: EvaluationSummary,
    /// `|final − reference| / reference` on MRR.
    pub relative_gap: f64,
}

pub struct MapperOutput {
    pub run: MapperRun,
    pub evaluation: MapperEvaluation,
}

/// Open-world mapper experiment against reference embeddings of the full graph.
pub fn train_mapper_cmd<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    embeddings: &Path,
    exec: &E,
) -> Result<MapperOutput> {
    let (g, emb) = run.stage("load", |_| {
        let g = open(cfg)?.training_graph();
        let emb = align_table(&load_table(embeddings)?, &g)?;
        Ok((g, emb))
    })?;
    let split = run.stage("open_world_split", |_| {
        Ok(open_world_split(&g, cfg.text.open_fraction, cfg.seed)?)
    })?;
    let text = run.stage("text_embeddings", |run| match cfg.text.source {
        TextSource::File => {
            let p = cfg
                .text
                .path
                .as_deref()
                .ok_or_else(|| Error::Usage("text.source = file needs text.path".into()))?;
            load_text(p)
        }
        TextSource::Synthetic => {
            let s = match cfg.text.map {
                TextMap::Random => synth_text_embeddings(&emb, cfg.text.dim, cfg.text.noise, cfg.seed)?,
                TextMap::Identity => {
                    synth_text_with_map(&emb, Matrix::identity(emb.dim), cfg.text.noise, cfg.seed)?
                }
            };
            save_text(&run.artifact("text_embeddings.emb"), &s.set)?;
            Ok(s.set)
        }
    })?;
    let filter = TailFilter::from_triples(g.triples());
    let mcfg = cfg.mapper_config();
    let mrun = run.stage("train_mapper", |_| {
        Ok(train_mapper(&text, &emb, &split.closed_degrees, &split.queries, &filter, &mcfg, exec)?)
    })?;
    let evaluation = run.stage("evaluate", |run| {
        let fin = predict_open_world(&mrun.mapper, &text, &emb, &split.queries, &filter, exec)?;
        let reference = reference_ranking(&emb, &split.queries, &filter, exec)?;
        let e = MapperEvaluation {
            open_entities: split.open_entities.len(),
            queries: split.queries.len(),
            text_source: cfg.text.source,
            relative_gap: (fin.ranking.mrr - reference.mrr).abs() / reference.mrr,
            final_ranking: EvaluationSummary::of(&fin.ranking),
            skipped: fin.skipped,
            best_epoch: epoch_peak(&mrun.trace).ok(),
            reference_ranking: EvaluationSummary::of(&reference),
        };
        write_json(&run.artifact("evaluation.json"), "mapper-evaluation", &e)?;
        write_csv(&run.artifact("trace.csv"), &mrun.trace.rows())?;
        write_json(&run.artifact("trace.json"), "trace", &mrun.trace)?;
        Ok(e)
    })?;
    Ok(MapperOutput {
        run: mrun,
        evaluation,
    })
}

