use std::collections::HashSet;

use degscope::analysis::{derive_seed, holdout_split, observed_bounds};
use degscope::RayonExecutor;
use degscope_core::sampler::{sample_batch, SamplerConfig};
use degscope_core::stats::LabeledSample;
use degscope_core::synth::{scale_free_graph, ScaleFreeConfig};
use degscope_core::{Executor, Sequential, StructuralCharacteristics};

fn graph() -> degscope_core::KnowledgeGraph {
    scale_free_graph(&ScaleFreeConfig {
        entities: 400,
        ..ScaleFreeConfig::default()
    })
    .unwrap()
}

#[test]
fn holdout_partitions_triples_and_keeps_ids() {
    let g = graph();
    let h = holdout_split(&g, 0.1, 3).unwrap();
    assert_eq!(h.test.len(), (g.num_triples() as f64 * 0.1).round() as usize);
    assert_eq!(h.train.num_triples() + h.test.len(), g.num_triples());
    assert_eq!(h.train.entities().labels(), g.entities().labels());
    assert_eq!(h.train.relations().labels(), g.relations().labels());
    let train: HashSet<_> = h.train.triples().iter().copied().collect();
    for t in &h.test {
        assert!(g.contains(t));
        assert!(!train.contains(t));
    }
    let again = holdout_split(&g, 0.1, 3).unwrap();
    assert_eq!(again.test, h.test);
    assert_ne!(holdout_split(&g, 0.1, 4).unwrap().test, h.test);
}

#[test]
fn holdout_always_leaves_both_sides_non_empty() {
    let (g, _) = degscope_core::KnowledgeGraph::from_labeled([("a", "r", "b"), ("b", "r", "c")]);
    let h = holdout_split(&g, 0.01, 0).unwrap();
    assert_eq!((h.train.num_triples(), h.test.len()), (1, 1));
    let h = holdout_split(&g, 0.99, 0).unwrap();
    assert_eq!((h.train.num_triples(), h.test.len()), (1, 1));
    let (one, _) = degscope_core::KnowledgeGraph::from_labeled([("a", "r", "b")]);
    assert!(holdout_split(&one, 0.5, 0).is_err());
}

#[test]
fn derived_seeds_are_distinct() {
    let seeds: HashSet<u64> = (0..10_000).map(|i| derive_seed(7, i)).collect();
    assert_eq!(seeds.len(), 10_000);
    assert_ne!(derive_seed(7, 0), derive_seed(8, 0));
}

#[test]
fn thread_pool_matches_sequential() {
    let g = graph();
    let cfg = SamplerConfig {
        num_samples: 12,
        seed: 11,
        ..SamplerConfig::default()
    };
    let a = sample_batch(&g, &cfg, &Sequential).unwrap();
    let b = sample_batch(&g, &cfg, &RayonExecutor::new(4)).unwrap();
    assert_eq!(a, b);
    let xs: Vec<u64> = (0..1000).collect();
    assert_eq!(RayonExecutor::new(3).map(&xs, |x| x * x), Sequential.map(&xs, |x| x * x));
}

#[test]
fn constant_dimensions_are_widened() {
    let theta = |d: f64| StructuralCharacteristics {
        graph_density: d,
        global_clustering_coefficient: 0.1,
        num_relation_types: 20,
        degree_distribution_index: 0.3,
        relation_type_index: 0.2,
        num_strongly_connected_components: 4,
    };
    let s = |i: u64, d: f64| LabeledSample {
        theta: theta(d),
        mrr: 0.1,
        hits10: 0.2,
        sample_index: i,
    };
    let b = observed_bounds(&[s(0, 0.01), s(1, 0.03), s(2, 0.02)]);
    assert_eq!(b[0], (0.01, 0.03));
    assert_eq!(b[2], (19.5, 20.5));
    assert_eq!(b[5], (3.5, 4.5));
}
