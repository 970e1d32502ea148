//! The end-to-end study: sample subgraphs, train and evaluate each one,
//! fit the surrogate, compute sensitivity indices and correlations, then
//! measure degree effects on a reference model of the whole training graph.

use degscope_core::quality::compare_by_degree;
use degscope_core::sampler::sample_batch;
use degscope_core::stats::{fit_surrogate, per_entity_degree_correlation, LabeledSample};
use degscope_core::structure::structural_characteristics;
use degscope_core::kge::KgeConfig;
use degscope_core::{Executor, KnowledgeGraph};
use serde::{Deserialize, Serialize};

use crate::analysis::{
    correlation_report, derive_seed, sobol_report, train_and_evaluate, write_correlations,
    write_degree_correlation, write_quality, write_sample, write_sobol, EvaluationSummary,
    LabeledRow,
};
use crate::commands::open;
use crate::config::ExperimentConfig;
use crate::embfile::save_table;
use crate::error::Result;
use crate::manifest::Run;
use crate::report::{write_csv, write_json};

/// Keeps holdout shuffles independent of the training streams.
const SPLIT_SALT: u64 = 0x5eed;

/// Stages after the labeled-sample table; skipped when an earlier one fails.
const LATE_STAGES: [&str; 6] = [
    "surrogate",
    "sobol",
    "correlation",
    "reference_kge",
    "degree_correlation",
    "quality",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineSummary {
    pub labeled_samples: usize,
    pub failed_samples: usize,
    pub reference: Option<EvaluationSummary>,
}

pub fn pipeline<E: Executor>(cfg: &ExperimentConfig, run: &mut Run, exec: &E) -> Result<PipelineSummary> {
    cfg.validate()?;
    let ds = run.stage("load", |_| open(cfg))?;
    let g = ds.training_graph();
    run.stage("characteristics", |run| {
        let c = structural_characteristics(&g)?;
        write_json(&run.artifact("graph_characteristics.json"), "characteristics", &c)
    })?;

    let scfg = cfg.sampler_config();
    let outcome = run.stage("sample", |run| {
        let outcome = sample_batch(&g, &scfg, exec)?;
        for f in &outcome.failures {
            run.item_error(format!("sample {}: {}", f.sample_index, f.error));
        }
        for s in &outcome.samples {
            write_sample(run, s, scfg.seed)?;
        }
        Ok(outcome)
    })?;

    let kcfg = cfg.kge_config();
    let rows = run.stage("train_eval", |run| {
        let results = exec.map(&outcome.samples, |s| {
            let kge = KgeConfig {
                seed: derive_seed(kcfg.seed, s.sample_index),
                ..kcfg.clone()
            };
            let split_seed = derive_seed(cfg.seed ^ SPLIT_SALT, s.sample_index);
            // one subgraph at a time per task; ranking inside stays sequential
            train_and_evaluate(&s.subgraph, cfg.eval.holdout_fraction, split_seed, &kge, &degscope_core::Sequential)
        });
        let mut rows = Vec::new();
        for (s, r) in outcome.samples.iter().zip(results) {
            match r {
                Ok((_, cw)) => {
                    let c = &s.characteristics;
                    rows.push(LabeledRow {
                        sample_index: s.sample_index,
                        ratio: s.ratio_used,
                        start_entity: s.start_label.clone(),
                        entities: s.subgraph.num_entities(),
                        triples: s.subgraph.num_triples(),
                        train_triples: cw.train_triples,
                        test_triples: cw.test_triples,
                        graph_density: c.graph_density,
                        global_clustering_coefficient: c.global_clustering_coefficient,
                        num_relation_types: c.num_relation_types,
                        degree_distribution_index: c.degree_distribution_index,
                        relation_type_index: c.relation_type_index,
                        num_strongly_connected_components: c.num_strongly_connected_components,
                        mrr: cw.ranking.mrr,
                        hits10: cw.ranking.hits_at_k.get(&10).copied().unwrap_or(f64::NAN),
                    });
                }
                Err(e) => run.item_error(format!("sample {}: {e}", s.sample_index)),
            }
        }
        write_csv(&run.artifact("labeled_samples.csv"), &rows)?;
        Ok(rows)
    })?;
    let labeled: Vec<LabeledSample> = rows.iter().map(|r| r.labeled()).collect();
    let mut summary = PipelineSummary {
        labeled_samples: rows.len(),
        failed_samples: outcome.failures.len() + outcome.samples.len() - rows.len(),
        reference: None,
    };

    if let Err(e) = late_stages(cfg, run, exec, &g, &rows, &labeled, &mut summary) {
        let missing: Vec<&str> = LATE_STAGES
            .iter()
            .copied()
            .filter(|n| !run.manifest().stages.iter().any(|s| s.name == *n))
            .collect();
        run.skip(&missing);
        return Err(e);
    }
    write_json(&run.artifact("pipeline.json"), "pipeline", &summary)?;
    Ok(summary)
}

fn late_stages<E: Executor>(
    cfg: &ExperimentConfig,
    run: &mut Run,
    exec: &E,
    g: &KnowledgeGraph,
    rows: &[LabeledRow],
    labeled: &[LabeledSample],
    summary: &mut PipelineSummary,
) -> Result<()> {
    let surrogate = run.stage("surrogate", |run| {
        let s = fit_surrogate(labeled, cfg.sobol.target)?;
        write_json(&run.artifact("surrogate.json"), "surrogate", &s)?;
        Ok(s)
    })?;
    run.stage("sobol", |run| {
        let r = sobol_report(&surrogate, labeled, cfg.sobol.target, cfg.sobol.samples, cfg.seed, exec)?;
        write_sobol(run, &r)
    })?;
    run.stage("correlation", |run| {
        let r = correlation_report(labeled, cfg.correlation.permutation)?;
        write_correlations(run, &r, rows)
    })?;
    let (holdout, cw) = run.stage("reference_kge", |run| {
        let seed = derive_seed(cfg.seed ^ SPLIT_SALT, u64::MAX);
        let (h, cw) = train_and_evaluate(g, cfg.eval.holdout_fraction, seed, &cfg.kge_config(), exec)?;
        run.artifact("reference/embeddings/entities.emb");
        run.artifact("reference/embeddings/relations.emb");
        save_table(&run.out_dir().join("reference/embeddings"), &cw.trained.table)?;
        let e = EvaluationSummary::of(&cw.ranking);
        write_json(&run.artifact("reference/evaluation.json"), "evaluation", &e)?;
        Ok((h, cw))
    })?;
    summary.reference = Some(EvaluationSummary::of(&cw.ranking));
    run.stage("degree_correlation", |run| {
        let dc = per_entity_degree_correlation(&holdout.train, &cw.ranking.per_tail_mrr())?;
        write_degree_correlation(run, &holdout.train, &dc, holdout.test.len())
    })?;
    run.stage("quality", |run| {
        let r = compare_by_degree(&holdout.train, &cw.trained.table, &cfg.quality_config(), exec)?;
        write_quality(run, &r)
    })
}
