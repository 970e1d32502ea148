//! High-degree-seeded BFS sampling of connected subgraphs.
//!
//! Each sample draws a ratio `r`, picks a start among the `top_k_start`
//! highest-degree entities, walks the undirected projection breadth-first
//! until `round(|V|·r)` entities are collected, and induces the subgraph on
//! every parent triple whose endpoints were both collected.

use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph};
use crate::structure::{structural_characteristics, StructuralCharacteristics};
use crate::Executor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub top_k_start: usize,
    pub seed: u64,
    pub num_samples: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            ratio_min: 0.5,
            ratio_max: 1.0,
            top_k_start: 10,
            seed: 0,
            num_samples: 50,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio_min > 0.0 && self.ratio_min <= self.ratio_max && self.ratio_max <= 1.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "sampling ratios must satisfy 0 < min <= max <= 1 (got {}..{})",
                self.ratio_min,
                self.ratio_max
            )));
        }
        if self.top_k_start == 0 {
            return Err(Error::InvalidConfig("top_k_start must be positive".into()));
        }
        if self.num_samples == 0 {
            return Err(Error::InvalidConfig("num_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Per-sample random stream: ChaCha8 keyed by `seed`, stream id `sample_index`.
pub fn sample_stream(seed: u64, sample_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(sample_index);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledSubgraph {
    pub subgraph: KnowledgeGraph,
    pub characteristics: StructuralCharacteristics,
    pub ratio_used: f64,
    /// Start entity id in the parent graph.
    pub start_entity: EntityId,
    pub start_label: String,
    pub sample_index: u64,
    /// Start entities tried before one reached the target size (1 = first pick).
    pub start_attempts: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFailure {
    pub sample_index: u64,
    pub error: Error,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutcome {
    pub samples: Vec<SampledSubgraph>,
    pub failures: Vec<SampleFailure>,
}

/// Sampler bound to one parent graph; precomputes the undirected projection
/// and the degree-ranked start candidates.
pub struct SubgraphSampler<'g> {
    graph: &'g KnowledgeGraph,
    cfg: SamplerConfig,
    adjacency: Vec<Vec<u32>>,
    top_k: Vec<EntityId>,
}

impl<'g> SubgraphSampler<'g> {
    pub fn new(graph: &'g KnowledgeGraph, cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        if graph.num_entities() < 2 {
            return Err(Error::InvalidConfig(
                "subgraph sampling needs at least 2 entities".into(),
            ));
        }
        let degrees = graph.degree_vector();
        let mut order: Vec<EntityId> = graph.entity_ids().collect();
        // highest degree first, ties by ascending id
        order.sort_by(|a, b| degrees.get(*b).cmp(&degrees.get(*a)).then(a.cmp(b)));
        order.truncate(cfg.top_k_start.min(order.len()));
        Ok(Self {
            graph,
            cfg,
            adjacency: graph.undirected_projection(),
            top_k: order,
        })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn start_candidates(&self) -> &[EntityId] {
        &self.top_k
    }

    pub fn target_size(&self, ratio: f64) -> usize {
        libm::round(self.graph.num_entities() as f64 * ratio) as usize
    }

    pub fn sample(&self, sample_index: u64) -> Result<SampledSubgraph> {
        let mut rng = sample_stream(self.cfg.seed, sample_index);
        let ratio = if self.cfg.ratio_min == self.cfg.ratio_max {
            self.cfg.ratio_min
        } else {
            rng.random_range(self.cfg.ratio_min..=self.cfg.ratio_max)
        };
        let needed = self.target_size(ratio);
        if needed == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "ratio {ratio} selects no entities"
            )));
        }
        let k = self.top_k.len();
        let first = rng.random_range(0..k);
        let mut best = 0usize;
        for attempt in 0..k {
            let start = self.top_k[(first + attempt) % k];
            let nodes = self.bfs(start, needed, &mut rng);
            if nodes.len() == needed {
                let subgraph = self.graph.induced_subgraph(&nodes);
                let characteristics = structural_characteristics(&subgraph)?;
                return Ok(SampledSubgraph {
                    subgraph,
                    characteristics,
                    ratio_used: ratio,
                    start_entity: start,
                    start_label: self.graph.entity_label(start).into(),
                    sample_index,
                    start_attempts: attempt + 1,
                });
            }
            best = best.max(nodes.len());
        }
        Err(Error::UndersizedComponent {
            sample_index,
            needed,
            achieved: best,
        })
    }

    /// FIFO breadth-first collection over the undirected projection with
    /// neighbour lists shuffled by the sample stream.
    fn bfs(&self, start: EntityId, needed: usize, rng: &mut ChaCha8Rng) -> Vec<EntityId> {
        let mut visited = alloc::vec![false; self.graph.num_entities()];
        let mut out = Vec::with_capacity(needed);
        let mut queue = VecDeque::new();
        visited[start.index()] = true;
        out.push(start);
        queue.push_back(start.0);
        let mut scratch: Vec<u32> = Vec::new();
        while let Some(u) = queue.pop_front() {
            if out.len() >= needed {
                break;
            }
            scratch.clear();
            scratch.extend_from_slice(&self.adjacency[u as usize]);
            scratch.shuffle(rng);
            for &v in &scratch {
                if out.len() >= needed {
                    break;
                }
                if !visited[v as usize] {
                    visited[v as usize] = true;
                    out.push(EntityId(v));
                    queue.push_back(v);
                }
            }
        }
        out
    }
}

pub fn sample_subgraph(
    g: &KnowledgeGraph,
    cfg: &SamplerConfig,
    sample_index: u64,
) -> Result<SampledSubgraph> {
    SubgraphSampler::new(g, cfg.clone())?.sample(sample_index)
}

/// Draws `cfg.num_samples` independent samples. Failed samples are reported
/// and skipped; results are ordered by sample index whatever the executor.
pub fn sample_batch<E: Executor>(
    g: &KnowledgeGraph,
    cfg: &SamplerConfig,
    exec: &E,
) -> Result<BatchOutcome> {
    let sampler = SubgraphSampler::new(g, cfg.clone())?;
    let indices: Vec<u64> = (0..cfg.num_samples as u64).collect();
    let results = exec.map(&indices, |&i| sampler.sample(i));
    let mut outcome = BatchOutcome::default();
    for (i, r) in indices.into_iter().zip(results) {
        match r {
            Ok(s) => outcome.samples.push(s),
            Err(error) => outcome.failures.push(SampleFailure {
                sample_index: i,
                error,
            }),
        }
    }
    Ok(outcome)
}
