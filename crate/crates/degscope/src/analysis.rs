//! Shared building blocks for the commands and the pipeline: held-out
//! splits, labeled-sample tables, and the Sobol, correlation and quality
//! report layouts.

use std::path::Path;

use degscope_core::kge::{train_kge, EmbeddingTable, KgeConfig, TrainedEmbeddings};
use degscope_core::quality::QualityReport;
use degscope_core::rank::{evaluate_tails, RankingResult, TailFilter};
use degscope_core::sampler::SampledSubgraph;
use degscope_core::stats::correlation::{
    correlate, permutation_p_value, Method, MAX_PERMUTATION_N,
};
use degscope_core::stats::{
    sobol_indices, CorrelationResult, DegreeCorrelation, LabeledSample, SobolIndices,
    Surrogate, Target,
};
use degscope_core::{Executor, GraphBuilder, KnowledgeGraph, StructuralCharacteristics, Triple};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::Run;
use crate::report::{write_csv, write_csv_records, write_json};

/// Mixes a base seed with an item index into an independent seed.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Closed-world train/test partition of one graph.
#[derive(Debug, Clone)]
pub struct Holdout {
    /// Same entity and relation ids as the source graph; only the held-out
    /// triples are missing.
    pub train: KnowledgeGraph,
    pub test: Vec<Triple>,
}

/// Withholds `round(fraction · |T|)` triples (at least one, never all),
/// chosen by a seeded shuffle.
pub fn holdout_split(g: &KnowledgeGraph, fraction: f64, seed: u64) -> Result<Holdout> {
    let n = g.num_triples();
    if n < 2 {
        return Err(Error::Core(degscope_core::Error::InvalidConfig(format!(
            "cannot hold out test triples from a graph with {n} triples"
        ))));
    }
    let n_test = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut is_test = vec![false; n];
    for &i in &order[..n_test] {
        is_test[i] = true;
    }
    let mut b = GraphBuilder::new();
    for l in g.entities().labels() {
        b.add_entity(l);
    }
    for l in g.relations().labels() {
        b.add_relation(l);
    }
    let mut test = Vec::with_capacity(n_test);
    for (i, t) in g.triples().iter().enumerate() {
        if is_test[i] {
            test.push(*t);
        } else {
            b.add(*t);
        }
    }
    Ok(Holdout {
        train: b.build(),
        test,
    })
}

pub struct ClosedWorldRun {
    pub trained: TrainedEmbeddings,
    pub ranking: RankingResult,
    pub train_triples: usize,
    pub test_triples: usize,
}

/// Trains on the holdout's training part and ranks the held-out tails,
/// filtering every known triple of `g`.
pub fn train_and_evaluate<E: Executor>(
    g: &KnowledgeGraph,
    fraction: f64,
    split_seed: u64,
    kge: &KgeConfig,
    exec: &E,
) -> Result<(Holdout, ClosedWorldRun)> {
    let h = holdout_split(g, fraction, split_seed)?;
    let trained = train_kge(&h.train, kge)?;
    let filter = TailFilter::from_triples(g.triples());
    let ranking = evaluate_tails(&trained.table, &h.test, &filter, exec)?;
    let run = ClosedWorldRun {
        train_triples: h.train.num_triples(),
        test_triples: h.test.len(),
        trained,
        ranking,
    };
    Ok((h, run))
}

/// Sidecar record written next to each sampled subgraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_index: u64,
    pub seed: u64,
    pub ratio: f64,
    pub start_entity: String,
    pub start_attempts: usize,
    pub entities: usize,
    pub triples: usize,
    pub graph_density: f64,
    pub global_clustering_coefficient: f64,
    pub num_relation_types: u64,
    pub degree_distribution_index: f64,
    pub relation_type_index: f64,
    pub num_strongly_connected_components: u64,
}

impl SampleRecord {
    pub fn of(s: &SampledSubgraph, seed: u64) -> Self {
        let c = &s.characteristics;
        Self {
            sample_index: s.sample_index,
            seed,
            ratio: s.ratio_used,
            start_entity: s.start_label.clone(),
            start_attempts: s.start_attempts,
            entities: s.subgraph.num_entities(),
            triples: s.subgraph.num_triples(),
            graph_density: c.graph_density,
            global_clustering_coefficient: c.global_clustering_coefficient,
            num_relation_types: c.num_relation_types,
            degree_distribution_index: c.degree_distribution_index,
            relation_type_index: c.relation_type_index,
            num_strongly_connected_components: c.num_strongly_connected_components,
        }
    }
}

pub fn sample_stem(index: u64) -> String {
    format!("samples/sample_{index:04}")
}

/// Writes a sample's triples and sidecar, registering both.
pub fn write_sample(run: &mut Run, s: &SampledSubgraph, seed: u64) -> Result<()> {
    let stem = sample_stem(s.sample_index);
    let tsv = run.artifact(&format!("{stem}.tsv"));
    crate::dataset::write_graph(&tsv, &s.subgraph)?;
    let json = run.artifact(&format!("{stem}.json"));
    write_json(&json, "sample", &SampleRecord::of(s, seed))
}

/// One row of the labeled-sample table: characteristics plus measured performance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledRow {
    pub sample_index: u64,
    pub ratio: f64,
    pub start_entity: String,
    pub entities: usize,
    pub triples: usize,
    pub train_triples: usize,
    pub test_triples: usize,
    pub graph_density: f64,
    pub global_clustering_coefficient: f64,
    pub num_relation_types: u64,
    pub degree_distribution_index: f64,
    pub relation_type_index: f64,
    pub num_strongly_connected_components: u64,
    pub mrr: f64,
    pub hits10: f64,
}

impl LabeledRow {
    pub fn characteristics(&self) -> StructuralCharacteristics {
        StructuralCharacteristics {
            graph_density: self.graph_density,
            global_clustering_coefficient: self.global_clustering_coefficient,
            num_relation_types: self.num_relation_types,
            degree_distribution_index: self.degree_distribution_index,
            relation_type_index: self.relation_type_index,
            num_strongly_connected_components: self.num_strongly_connected_components,
        }
    }

    pub fn labeled(&self) -> LabeledSample {
        LabeledSample {
            theta: self.characteristics(),
            mrr: self.mrr,
            hits10: self.hits10,
            sample_index: self.sample_index,
        }
    }
}

pub fn read_labeled(path: &Path) -> Result<Vec<LabeledRow>> {
    crate::report::read_csv(path)
}

/// Observed per-dimension range; a constant dimension is widened to ±0.5
/// around its value so the box stays non-degenerate.
pub fn observed_bounds(samples: &[LabeledSample]) -> Vec<(f64, f64)> {
    (0..StructuralCharacteristics::NAMES.len())
        .map(|i| {
            let xs = samples.iter().map(|s| s.theta.to_array()[i]);
            let lo = xs.clone().fold(f64::INFINITY, f64::min);
            let hi = xs.fold(f64::NEG_INFINITY, f64::max);
            if hi > lo {
                (lo, hi)
            } else {
                (lo - 0.5, hi + 0.5)
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolReport {
    pub target: Target,
    pub names: Vec<String>,
    pub surrogate_r_squared: f64,
    pub surrogate_loo_r_squared: Option<f64>,
    #[serde(flatten)]
    pub indices: SobolIndices,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolRow {
    pub name: String,
    pub first_order: f64,
    pub first_order_se: f64,
    pub total_order: f64,
    pub total_order_se: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
}

pub fn sobol_report<E: Executor>(
    surrogate: &Surrogate,
    samples: &[LabeledSample],
    target: Target,
    n: usize,
    seed: u64,
    exec: &E,
) -> Result<SobolReport> {
    let bounds = observed_bounds(samples);
    let indices = sobol_indices(surrogate, &bounds, n, seed, exec)?;
    Ok(SobolReport {
        target,
        names: StructuralCharacteristics::NAMES.iter().map(|s| s.to_string()).collect(),
        surrogate_r_squared: surrogate.r_squared,
        surrogate_loo_r_squared: surrogate.loo_r_squared,
        indices,
    })
}

/// `sobol.json`, `sobol.csv` and the pairwise `sobol_second_order.csv`.
pub fn write_sobol(run: &mut Run, r: &SobolReport) -> Result<()> {
    write_json(&run.artifact("sobol.json"), "sobol", r)?;
    let ix = &r.indices;
    let rows: Vec<SobolRow> = r
        .names
        .iter()
        .enumerate()
        .map(|(i, n)| SobolRow {
            name: n.clone(),
            first_order: ix.first_order[i],
            first_order_se: ix.first_order_se[i],
            total_order: ix.total_order[i],
            total_order_se: ix.total_order_se[i],
            lower_bound: ix.bounds[i].0,
            upper_bound: ix.bounds[i].1,
        })
        .collect();
    write_csv(&run.artifact("sobol.csv"), &rows)?;
    let mut pairs = Vec::new();
    for i in 0..r.names.len() {
        for j in i + 1..r.names.len() {
            let cell = |m: &Vec<Vec<Option<f64>>>| m[i][j].map(|v| v.to_string()).unwrap_or_default();
            pairs.push(vec![
                r.names[i].clone(),
                r.names[j].clone(),
                cell(&ix.second_order),
                cell(&ix.second_order_se),
            ]);
        }
    }
    write_csv_records(
        &run.artifact("sobol_second_order.csv"),
        &["name_i", "name_j", "second_order", "second_order_se"],
        &pairs,
    )
}

/// Correlation of one characteristic with one performance target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacteristicCorrelation {
    pub characteristic: String,
    pub target: Target,
    pub n: usize,
    pub pearson_r: Option<f64>,
    pub spearman_rho: Option<f64>,
    pub p_value_pearson: Option<f64>,
    pub p_value_spearman: Option<f64>,
    pub permutation_p_pearson: Option<f64>,
    pub permutation_p_spearman: Option<f64>,
    /// Why the coefficients are missing, e.g. a constant characteristic.
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub samples: usize,
    pub correlations: Vec<CharacteristicCorrelation>,
}

/// Correlates each characteristic with MRR and Hits@10. Undefined
/// coefficients are reported with a note; fewer than three samples is an error.
pub fn correlation_report(samples: &[LabeledSample], permutation: bool) -> Result<CorrelationReport> {
    if samples.len() < 3 {
        return Err(degscope_core::Error::UndefinedCorrelation("need at least 3 paired observations").into());
    }
    let mut out = Vec::new();
    for target in [Target::Mrr, Target::Hits10] {
        let y: Vec<f64> = samples.iter().map(|s| target.of(s)).collect();
        for (i, name) in StructuralCharacteristics::NAMES.iter().enumerate() {
            let x: Vec<f64> = samples.iter().map(|s| s.theta.to_array()[i]).collect();
            let mut row = CharacteristicCorrelation {
                characteristic: name.to_string(),
                target,
                n: x.len(),
                pearson_r: None,
                spearman_rho: None,
                p_value_pearson: None,
                p_value_spearman: None,
                permutation_p_pearson: None,
                permutation_p_spearman: None,
                note: None,
            };
            match correlate(&x, &y) {
                Ok(c) => {
                    row.pearson_r = Some(c.pearson_r);
                    row.spearman_rho = Some(c.spearman_rho);
                    row.p_value_pearson = Some(c.p_value_pearson);
                    row.p_value_spearman = Some(c.p_value_spearman);
                    if permutation && x.len() <= MAX_PERMUTATION_N {
                        row.permutation_p_pearson = permutation_p_value(&x, &y, Method::Pearson).ok();
                        row.permutation_p_spearman =
                            permutation_p_value(&x, &y, Method::Spearman).ok();
                    }
                }
                Err(e) => row.note = Some(e.to_string()),
            }
            out.push(row);
        }
    }
    Ok(CorrelationReport {
        samples: samples.len(),
        correlations: out,
    })
}

/// `correlations.json`, `correlations.csv` and the per-sample `scatter.csv`.
pub fn write_correlations(run: &mut Run, r: &CorrelationReport, rows: &[LabeledRow]) -> Result<()> {
    write_json(&run.artifact("correlations.json"), "correlations", r)?;
    write_csv(&run.artifact("correlations.csv"), &r.correlations)?;
    write_csv(&run.artifact("scatter.csv"), rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeCorrelationReport {
    pub test_queries: usize,
    pub entities: usize,
    pub unbinned: CorrelationResult,
    pub binned: Option<CorrelationResult>,
    pub bins: Vec<degscope_core::stats::correlation::DegreeBin>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DegreePointRow<'a> {
    entity: &'a str,
    degree: u64,
    mrr: f64,
}

/// `degree_correlation.json`, `degree_scatter.csv` and `degree_bins.csv`.
pub fn write_degree_correlation(
    run: &mut Run,
    g: &KnowledgeGraph,
    dc: &DegreeCorrelation,
    test_queries: usize,
) -> Result<()> {
    let report = DegreeCorrelationReport {
        test_queries,
        entities: dc.points.len(),
        unbinned: dc.unbinned,
        binned: dc.binned,
        bins: dc.bins.clone(),
    };
    write_json(&run.artifact("degree_correlation.json"), "degree-correlation", &report)?;
    let points: Vec<DegreePointRow> = dc
        .points
        .iter()
        .map(|p| DegreePointRow {
            entity: g.entity_label(p.entity),
            degree: p.degree,
            mrr: p.mrr,
        })
        .collect();
    write_csv(&run.artifact("degree_scatter.csv"), &points)?;
    write_csv(&run.artifact("degree_bins.csv"), &dc.bins)
}

/// `quality.json` plus a flat `quality.csv` (graph, entity, degree, stratum, q).
pub fn write_quality(run: &mut Run, r: &QualityReport) -> Result<()> {
    write_json(&run.artifact("quality.json"), "quality", r)?;
    let rows: Vec<Vec<String>> = r
        .records
        .iter()
        .map(|q| {
            vec![
                q.graph.to_string(),
                q.entity.clone(),
                q.degree.to_string(),
                q.stratum.name().to_string(),
                q.q.to_string(),
            ]
        })
        .collect();
    write_csv_records(
        &run.artifact("quality.csv"),
        &["graph", "entity", "degree", "stratum", "q"],
        &rows,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub queries: usize,
    pub mrr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

impl EvaluationSummary {
    pub fn of(r: &RankingResult) -> Self {
        let h = |k: u32| r.hits_at_k.get(&k).copied().unwrap_or(f64::NAN);
        Self {
            queries: r.queries.len(),
            mrr: r.mrr,
            hits_at_1: h(1),
            hits_at_3: h(3),
            hits_at_10: h(10),
        }
    }
}

#[derive(Serialize)]
struct RankRow<'a> {
    head: &'a str,
    relation: &'a str,
    tail: &'a str,
    rank: usize,
}

pub fn write_ranks(path: &Path, emb: &EmbeddingTable, r: &RankingResult) -> Result<()> {
    let rows: Vec<RankRow> = r
        .queries
        .iter()
        .map(|q| RankRow {
            head: &q.head,
            relation: &emb.relation_labels[q.relation.index()],
            tail: emb.entity_label(q.tail),
            rank: q.rank,
        })
        .collect();
    write_csv(path, &rows)
}

#[derive(Serialize)]
struct LossRow {
    epoch: usize,
    loss: f64,
}

pub fn write_losses(path: &Path, losses: &[f64]) -> Result<()> {
    let rows: Vec<LossRow> = losses
        .iter()
        .enumerate()
        .map(|(i, &loss)| LossRow { epoch: i + 1, loss })
        .collect();
    write_csv(path, &rows)
}
