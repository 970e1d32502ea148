//! Embedding quality index `Q` and the degree-stratified and
//! cross-subgraph comparison protocols.
//!
//! For a target entity `e₀`, every other entity is scored by link similarity
//! `α·J(N(e₀), N(e)) + (1 − α)·J(R(e₀), R(e))` (neighbour and incident-relation
//! Jaccard). With `C_s` the `k` most similar and `C_d` the `k` least similar
//! entities, `Q = (Σ_{C_d} d − Σ_{C_s} d) / Σ_{C_d} d` where `d` is the
//! embedding distance to `e₀`.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeVector, EntityId, KnowledgeGraph};
use crate::kge::EmbeddingTable;
use crate::numeric::{cosine_distance, euclidean, percentile_nearest_rank, CompensatedSum};
use crate::Executor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Cosine,
}

impl Distance {
    pub fn between(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Distance::Euclidean => euclidean(a, b),
            Distance::Cosine => cosine_distance(a, b),
        }
    }
}

/// A degree cut-off, either absolute or a percentile of the non-zero degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum Threshold {
    Percentile(f64),
    Degree(u64),
}

impl Threshold {
    pub fn resolve(self, degrees: &DegreeVector) -> Result<u64> {
        match self {
            Threshold::Degree(d) => Ok(d),
            Threshold::Percentile(p) => {
                if !(0.0..=100.0).contains(&p) {
                    return Err(Error::InvalidConfig(alloc::format!("percentile {p} out of range")));
                }
                let nonzero: Vec<u64> = degrees.as_slice().iter().copied().filter(|&d| d > 0).collect();
                percentile_nearest_rank(&nonzero, p)
                    .ok_or_else(|| Error::InvalidConfig("no entity has a positive degree".into()))
            }
        }
    }
}

/// Low/high degree cut-offs: `L = {d ≤ ε_L}`, `H = {d ≥ ε_H}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegreeThresholds {
    pub low: Threshold,
    pub high: Threshold,
}

impl Default for DegreeThresholds {
    fn default() -> Self {
        Self {
            low: Threshold::Percentile(25.0),
            high: Threshold::Percentile(75.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stratum {
    Low,
    Mid,
    High,
}

impl Stratum {
    pub fn name(self) -> &'static str {
        match self {
            Stratum::Low => "low",
            Stratum::Mid => "mid",
            Stratum::High => "high",
        }
    }
}

/// Resolved integer cut-offs, guaranteed `low < high`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedThresholds {
    pub low: u64,
    pub high: u64,
}

impl ResolvedThresholds {
    pub fn stratum(&self, degree: u64) -> Stratum {
        if degree <= self.low {
            Stratum::Low
        } else if degree >= self.high {
            Stratum::High
        } else {
            Stratum::Mid
        }
    }
}

impl DegreeThresholds {
    pub fn resolve(&self, degrees: &DegreeVector) -> Result<ResolvedThresholds> {
        let low = self.low.resolve(degrees)?;
        let high = self.high.resolve(degrees)?;
        if low >= high {
            return Err(Error::InvalidConfig(alloc::format!(
                "degree thresholds must satisfy low < high (got {low} and {high})"
            )));
        }
        Ok(ResolvedThresholds { low, high })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityConfig {
    pub alpha: f64,
    pub k_neighbors: usize,
    pub distance: Distance,
    pub sample_size: usize,
    pub thresholds: DegreeThresholds,
    pub seed: u64,
}

impl Default for QualityConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            k_neighbors: 10,
            distance: Distance::Euclidean,
            sample_size: 200,
            thresholds: DegreeThresholds::default(),
            seed: 0,
        }
    }
}

impl QualityConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidConfig("alpha must lie in [0, 1]".into()));
        }
        if self.k_neighbors == 0 || self.sample_size == 0 {
            return Err(Error::InvalidConfig(
                "k_neighbors and sample_size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// `|a ∩ b| / |a ∪ b|` over sorted, deduplicated slices; 0 when both are empty.
pub fn jaccard<T: Ord>(a: &[T], b: &[T]) -> f64 {
    let (mut i, mut j, mut common) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                common += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - common;
    if union == 0 {
        0.0
    } else {
        common as f64 / union as f64
    }
}

/// Per-entity neighbour and incident-relation sets.
#[derive(Debug, Clone)]
pub struct Neighborhoods {
    neighbors: Vec<Vec<u32>>,
    relations: Vec<Vec<u32>>,
}

impl Neighborhoods {
    pub fn new(g: &KnowledgeGraph) -> Self {
        Self {
            neighbors: g.undirected_projection(),
            relations: g.entity_ids().map(|e| g.incident_relations(e)).collect(),
        }
    }

    pub fn similarity(&self, e: EntityId, e0: EntityId, alpha: f64) -> f64 {
        alpha * jaccard(&self.neighbors[e0.index()], &self.neighbors[e.index()])
            + (1.0 - alpha) * jaccard(&self.relations[e0.index()], &self.relations[e.index()])
    }
}

/// Link similarity of two entities of `g`.
pub fn link_similarity(g: &KnowledgeGraph, e: EntityId, e0: EntityId, alpha: f64) -> f64 {
    let n = |x: EntityId| g.undirected_neighbors(x);
    alpha * jaccard(&n(e0), &n(e))
        + (1.0 - alpha) * jaccard(&g.incident_relations(e0), &g.incident_relations(e))
}

/// A graph with its embedding table, ready for repeated `Q` evaluations.
pub struct QualityContext<'a> {
    graph: &'a KnowledgeGraph,
    emb: &'a EmbeddingTable,
    hoods: Neighborhoods,
    degrees: DegreeVector,
    cfg: QualityConfig,
}

impl<'a> QualityContext<'a> {
    pub fn new(graph: &'a KnowledgeGraph, emb: &'a EmbeddingTable, cfg: &QualityConfig) -> Result<Self> {
        cfg.validate()?;
        if emb.num_entities() != graph.num_entities() {
            return Err(Error::DimensionMismatch {
                expected: graph.num_entities(),
                got: emb.num_entities(),
            });
        }
        Ok(Self {
            graph,
            emb,
            hoods: Neighborhoods::new(graph),
            degrees: graph.degree_vector(),
            cfg: cfg.clone(),
        })
    }

    pub fn degrees(&self) -> &DegreeVector {
        &self.degrees
    }

    /// The `k` most and `k` least similar entities to `e0`, ties by ascending id.
    pub fn similarity_sets(&self, e0: EntityId) -> (Vec<EntityId>, Vec<EntityId>) {
        let k = self.cfg.k_neighbors;
        let mut sims: Vec<(f64, u32)> = self
            .graph
            .entity_ids()
            .filter(|&e| e != e0)
            .map(|e| (self.hoods.similarity(e, e0, self.cfg.alpha), e.0))
            .collect();
        sims.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let most: Vec<EntityId> = sims.iter().take(k).map(|s| EntityId(s.1)).collect();
        sims.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let least: Vec<EntityId> = sims.iter().take(k).map(|s| EntityId(s.1)).collect();
        (most, least)
    }

    pub fn quality(&self, e0: EntityId) -> Result<f64> {
        if e0.index() >= self.graph.num_entities() {
            return Err(Error::UnknownEntity(alloc::format!("{}", e0.0)));
        }
        if self.degrees.get(e0) == 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "entity {} has degree 0",
                self.graph.entity_label(e0)
            )));
        }
        if self.graph.num_entities() < 2 * self.cfg.k_neighbors + 1 {
            return Err(Error::InvalidConfig(alloc::format!(
                "need at least {} entities for k = {}",
                2 * self.cfg.k_neighbors + 1,
                self.cfg.k_neighbors
            )));
        }
        let (most, least) = self.similarity_sets(e0);
        let x0 = self.emb.entity(e0);
        let dist = |set: &[EntityId]| -> f64 {
            let mut s = CompensatedSum::new();
            for &e in set {
                s.add(self.cfg.distance.between(x0, self.emb.entity(e)));
            }
            s.value()
        };
        let far = dist(&least);
        let near = dist(&most);
        if far == 0.0 {
            return Err(Error::DegenerateDenominator { entity: e0.0 });
        }
        Ok((far - near) / far)
    }
}

pub fn embedding_quality_index(
    g: &KnowledgeGraph,
    emb: &EmbeddingTable,
    e0: EntityId,
    cfg: &QualityConfig,
) -> Result<f64> {
    QualityContext::new(g, emb, cfg)?.quality(e0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QualityMode {
    ByDegree,
    ByDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityQuality {
    pub entity: String,
    /// 0 for a single-graph report, otherwise 1 or 2.
    pub graph: u8,
    pub degree: u64,
    pub stratum: Stratum,
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupMean {
    pub group: String,
    pub count: usize,
    pub mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub mode: QualityMode,
    pub config: QualityConfig,
    /// Resolved thresholds, one per graph.
    pub thresholds: Vec<ResolvedThresholds>,
    pub records: Vec<EntityQuality>,
    pub means: Vec<GroupMean>,
}

impl QualityReport {
    pub fn mean(&self, group: &str) -> Option<f64> {
        self.means.iter().find(|m| m.group == group).and_then(|m| m.mean)
    }
}

fn group_mean<'r>(group: &str, records: impl Iterator<Item = &'r EntityQuality>) -> GroupMean {
    let mut s = CompensatedSum::new();
    let mut count = 0;
    for r in records {
        s.add(r.q);
        count += 1;
    }
    GroupMean {
        group: group.into(),
        count,
        mean: (count > 0).then(|| s.value() / count as f64),
    }
}

/// Samples `n` entities from each of the low- and high-degree strata and
/// averages their quality indices.
pub fn compare_by_degree<E: Executor>(
    g: &KnowledgeGraph,
    emb: &EmbeddingTable,
    cfg: &QualityConfig,
    exec: &E,
) -> Result<QualityReport> {
    let ctx = QualityContext::new(g, emb, cfg)?;
    let th = cfg.thresholds.resolve(ctx.degrees())?;
    let degrees = ctx.degrees();
    let low: Vec<EntityId> = g
        .entity_ids()
        .filter(|&e| degrees.get(e) > 0 && th.stratum(degrees.get(e)) == Stratum::Low)
        .collect();
    let high: Vec<EntityId> = g
        .entity_ids()
        .filter(|&e| th.stratum(degrees.get(e)) == Stratum::High)
        .collect();
    let n = cfg.sample_size;
    if low.len() < n || high.len() < n {
        return Err(Error::InsufficientStratum {
            needed: n,
            low: low.len(),
            high: high.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut picked: Vec<EntityId> = Vec::with_capacity(2 * n);
    for pool in [&low, &high] {
        let mut idx = sample(&mut rng, pool.len(), n).into_vec();
        idx.sort_unstable();
        picked.extend(idx.into_iter().map(|i| pool[i]));
    }
    let qs = exec.map(&picked, |&e| ctx.quality(e));
    let mut records = Vec::with_capacity(picked.len());
    for (e, q) in picked.into_iter().zip(qs) {
        records.push(EntityQuality {
            entity: g.entity_label(e).into(),
            graph: 0,
            degree: degrees.get(e),
            stratum: th.stratum(degrees.get(e)),
            q: q?,
        });
    }
    let means = alloc::vec![
        group_mean("low", records.iter().filter(|r| r.stratum == Stratum::Low)),
        group_mean("high", records.iter().filter(|r| r.stratum == Stratum::High)),
    ];
    Ok(QualityReport {
        mode: QualityMode::ByDegree,
        config: cfg.clone(),
        thresholds: alloc::vec![th],
        records,
        means,
    })
}

/// Quality of every entity shared by two subgraphs (and linked in both),
/// each in its own embedding space, with overall and per-stratum means per
/// subgraph.
pub fn compare_by_distribution<E: Executor>(
    g1: &KnowledgeGraph,
    g2: &KnowledgeGraph,
    emb1: &EmbeddingTable,
    emb2: &EmbeddingTable,
    cfg: &QualityConfig,
    exec: &E,
) -> Result<QualityReport> {
    let (d1, d2) = (g1.degree_vector(), g2.degree_vector());
    let common: Vec<(EntityId, EntityId)> = g1
        .entity_ids()
        .filter_map(|e| g2.entity_id(g1.entity_label(e)).map(|e2| (e, e2)))
        .filter(|&(a, b)| d1.get(a) > 0 && d2.get(b) > 0)
        .collect();
    if common.is_empty() {
        return Err(Error::NoCommonEntities);
    }
    let mut records = Vec::with_capacity(2 * common.len());
    let mut thresholds = Vec::with_capacity(2);
    for (which, g, emb) in [(1u8, g1, emb1), (2u8, g2, emb2)] {
        let ctx = QualityContext::new(g, emb, cfg)?;
        let th = cfg.thresholds.resolve(ctx.degrees())?;
        thresholds.push(th);
        let ids: Vec<EntityId> = common
            .iter()
            .map(|&(a, b)| if which == 1 { a } else { b })
            .collect();
        let qs = exec.map(&ids, |&e| ctx.quality(e));
        for (e, q) in ids.into_iter().zip(qs) {
            let degree = ctx.degrees().get(e);
            records.push(EntityQuality {
                entity: g.entity_label(e).into(),
                graph: which,
                degree,
                stratum: th.stratum(degree),
                q: q?,
            });
        }
    }
    let mut means = Vec::new();
    for which in [1u8, 2] {
        let of = move |r: &&EntityQuality| r.graph == which;
        means.push(group_mean(&alloc::format!("g{which}"), records.iter().filter(of)));
        for s in [Stratum::Low, Stratum::High] {
            means.push(group_mean(
                &alloc::format!("g{which}_{}", s.name()),
                records.iter().filter(of).filter(|r| r.stratum == s),
            ));
        }
    }
    Ok(QualityReport {
        mode: QualityMode::ByDistribution,
        config: cfg.clone(),
        thresholds,
        records,
        means,
    })
}
