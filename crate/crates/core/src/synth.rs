//! Seeded synthetic fixtures: a scale-free knowledge graph, an open-world
//! split of an existing graph, and text embeddings derived from graph
//! embeddings through a random linear map.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use hashbrown::HashSet;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeVector, EntityId, KnowledgeGraph, RelationId, Triple};
use crate::kge::EmbeddingTable;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleFreeConfig {
    pub entities: usize,
    /// Edges attached by every new node.
    pub edges_per_node: usize,
    pub relations: usize,
    /// Latent entity types; the relation of most edges is a function of the
    /// endpoint types.
    pub entity_types: usize,
    /// Fraction of edges whose relation follows the type rule; the rest draw
    /// a Zipf-distributed relation.
    pub typed_fraction: f64,
    pub seed: u64,
}

impl Default for ScaleFreeConfig {
    fn default() -> Self {
        Self {
            entities: 2000,
            edges_per_node: 6,
            relations: 20,
            entity_types: 4,
            typed_fraction: 0.8,
            seed: 0,
        }
    }
}

impl ScaleFreeConfig {
    pub fn validate(&self) -> Result<()> {
        let m = self.edges_per_node;
        if m == 0 || self.entities <= m + 1 {
            return Err(Error::InvalidConfig(
                "need edges_per_node > 0 and entities > edges_per_node + 1".into(),
            ));
        }
        if self.relations == 0 || self.entity_types == 0 {
            return Err(Error::InvalidConfig("relations and entity_types must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.typed_fraction) {
            return Err(Error::InvalidConfig("typed_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Preferential-attachment graph with typed relations.
///
/// Starts from a clique on `m + 1` nodes; each further node links to `m`
/// distinct existing nodes chosen proportionally to degree. Each edge gets a
/// random direction. Entity labels are a random permutation and triples are
/// shuffled, so neither ids nor file order reveal node age.
pub fn scale_free_graph(cfg: &ScaleFreeConfig) -> Result<KnowledgeGraph> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.entities;
    let m = cfg.edges_per_node;
    let types: Vec<usize> = (0..n).map(|_| rng.random_range(0..cfg.entity_types)).collect();
    let zipf = WeightedIndex::new((0..cfg.relations).map(|k| 1.0 / (k + 1) as f64))
        .map_err(|e| Error::InvalidConfig(format!("{e}")))?;

    let mut edges: Vec<(usize, usize)> = Vec::with_capacity(n * m);
    let mut ends: Vec<usize> = Vec::with_capacity(2 * n * m);
    for u in 0..=m {
        for v in u + 1..=m {
            edges.push((u, v));
            ends.push(u);
            ends.push(v);
        }
    }
    let mut targets: Vec<usize> = Vec::with_capacity(m);
    for v in m + 1..n {
        targets.clear();
        while targets.len() < m {
            let u = ends[rng.random_range(0..ends.len())];
            if !targets.contains(&u) {
                targets.push(u);
            }
        }
        for &u in &targets {
            edges.push((v, u));
            ends.push(v);
            ends.push(u);
        }
    }

    let mut label_of: Vec<usize> = (0..n).collect();
    label_of.shuffle(&mut rng);
    let mut triples: Vec<(usize, usize, usize)> = edges
        .into_iter()
        .map(|(a, b)| {
            let (h, t) = if rng.random_bool(0.5) { (a, b) } else { (b, a) };
            let r = if rng.random_bool(cfg.typed_fraction) {
                (types[h] * cfg.entity_types + types[t]) % cfg.relations
            } else {
                zipf.sample(&mut rng)
            };
            (h, r, t)
        })
        .collect();
    triples.shuffle(&mut rng);

    let width = digits(n);
    let rwidth = digits(cfg.relations);
    let mut b = crate::graph::GraphBuilder::new();
    for (h, r, t) in triples {
        b.add_labeled(
            &format!("e{:0width$}", label_of[h]),
            &format!("r{:0rwidth$}", r),
            &format!("e{:0width$}", label_of[t]),
        );
    }
    Ok(b.build())
}

fn digits(mut n: usize) -> usize {
    let mut d = 1;
    while n >= 10 {
        n /= 10;
        d += 1;
    }
    d
}

/// A tail-prediction query for an entity unseen by the closed graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OpenWorldQuery {
    pub open_entity: EntityId,
    pub relation: RelationId,
    pub true_tail: EntityId,
}

impl OpenWorldQuery {
    pub fn triple(&self) -> Triple {
        Triple {
            head: self.open_entity,
            relation: self.relation,
            tail: self.true_tail,
        }
    }
}

/// Partition of a graph into a closed part and held-out open entities.
///
/// Ids in `open_entities`, `queries` and `closed_degrees` refer to the
/// original graph, so they index a table trained on it directly.
#[derive(Debug, Clone)]
pub struct OpenWorldSplit {
    pub closed: KnowledgeGraph,
    pub open_entities: Vec<EntityId>,
    pub queries: Vec<OpenWorldQuery>,
    /// Degree of every original entity within the closed graph (0 if open).
    pub closed_degrees: DegreeVector,
}

impl OpenWorldSplit {
    pub fn is_open(&self, e: EntityId) -> bool {
        self.open_entities.binary_search(&e).is_ok()
    }
}

/// Holds out `round(fraction · |candidates|)` random entities that have at
/// least one outgoing edge. The closed graph is induced on the rest; every
/// triple from an open head to a closed tail becomes a query.
pub fn open_world_split(g: &KnowledgeGraph, fraction: f64, seed: u64) -> Result<OpenWorldSplit> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidConfig("open fraction must lie in (0, 1)".into()));
    }
    let candidates: Vec<EntityId> = g.entity_ids().filter(|&e| !g.out_edges(e).is_empty()).collect();
    let count = libm::round(candidates.len() as f64 * fraction) as usize;
    if count == 0 || count >= g.num_entities() {
        return Err(Error::InvalidConfig(format!(
            "open fraction {fraction} selects {count} of {} entities",
            g.num_entities()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut open: Vec<EntityId> = candidates.choose_multiple(&mut rng, count).copied().collect();
    open.sort_unstable();
    let open_set: HashSet<EntityId> = open.iter().copied().collect();
    let keep: Vec<EntityId> = g.entity_ids().filter(|e| !open_set.contains(e)).collect();
    let closed = g.induced_subgraph(&keep);

    let mut degrees = alloc::vec![0u64; g.num_entities()];
    for t in g.triples() {
        if !open_set.contains(&t.head) && !open_set.contains(&t.tail) {
            degrees[t.head.index()] += 1;
            degrees[t.tail.index()] += 1;
        }
    }
    let queries = g
        .triples()
        .iter()
        .filter(|t| open_set.contains(&t.head) && !open_set.contains(&t.tail))
        .map(|t| OpenWorldQuery {
            open_entity: t.head,
            relation: t.relation,
            true_tail: t.tail,
        })
        .collect();
    Ok(OpenWorldSplit {
        closed,
        open_entities: open,
        queries,
        closed_degrees: DegreeVector(degrees),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    File,
    Synthetic,
}

/// Text-side vectors keyed by entity label.
#[derive(Debug, Clone, PartialEq)]
pub struct TextEmbeddingSet {
    pub text_dim: usize,
    pub source: TextSource,
    labels: Vec<String>,
    vectors: Vec<f64>,
    index: hashbrown::HashMap<String, usize>,
}

impl TextEmbeddingSet {
    pub fn new(text_dim: usize, source: TextSource) -> Self {
        Self {
            text_dim,
            source,
            labels: Vec::new(),
            vectors: Vec::new(),
            index: hashbrown::HashMap::new(),
        }
    }

    /// Inserts or replaces a vector.
    pub fn insert(&mut self, label: &str, v: &[f64]) -> Result<()> {
        if v.len() != self.text_dim {
            return Err(Error::DimensionMismatch {
                expected: self.text_dim,
                got: v.len(),
            });
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidConfig(format!("non-finite text vector for {label}")));
        }
        match self.index.get(label) {
            Some(&i) => self.vectors[i * self.text_dim..(i + 1) * self.text_dim].copy_from_slice(v),
            None => {
                self.index.insert(label.into(), self.labels.len());
                self.labels.push(label.into());
                self.vectors.extend_from_slice(v);
            }
        }
        Ok(())
    }

    pub fn remove(&mut self, label: &str) -> bool {
        let Some(i) = self.index.remove(label) else {
            return false;
        };
        let d = self.text_dim;
        self.labels.swap_remove(i);
        let last = self.labels.len();
        if i != last {
            let (head, tail) = self.vectors.split_at_mut(last * d);
            head[i * d..(i + 1) * d].copy_from_slice(&tail[..d]);
            *self.index.get_mut(&self.labels[i]).expect("moved label") = i;
        }
        self.vectors.truncate(last * d);
        true
    }

    pub fn get(&self, label: &str) -> Option<&[f64]> {
        self.index
            .get(label)
            .map(|&i| &self.vectors[i * self.text_dim..(i + 1) * self.text_dim])
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.labels
            .iter()
            .zip(self.vectors.chunks_exact(self.text_dim.max(1)))
            .map(|(l, v)| (l.as_str(), v))
    }
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn identity(n: usize) -> Self {
        let mut data = alloc::vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = 1.0;
        }
        Self { rows: n, cols: n, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| crate::numeric::dot(self.row(i), x)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticText {
    pub set: TextEmbeddingSet,
    /// `text_dim × dim` map applied to every graph vector.
    pub map: Matrix,
}

/// `text(e) = W·graph(e) + N(0, σ²)` for every entity of `emb`, with
/// `W_ij ~ N(0, 1/text_dim)`.
pub fn synth_text_embeddings(emb: &EmbeddingTable, text_dim: usize, noise_sigma: f64, seed: u64) -> Result<SyntheticText> {
    if text_dim == 0 {
        return Err(Error::InvalidConfig("text_dim must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / libm::sqrt(text_dim as f64);
    let data = (0..text_dim * emb.dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let map = Matrix {
        rows: text_dim,
        cols: emb.dim,
        data,
    };
    with_map(emb, map, noise_sigma, &mut rng)
}

/// Same as [`synth_text_embeddings`] with a caller-supplied map.
pub fn synth_text_with_map(emb: &EmbeddingTable, map: Matrix, noise_sigma: f64, seed: u64) -> Result<SyntheticText> {
    if map.cols != emb.dim {
        return Err(Error::DimensionMismatch {
            expected: emb.dim,
            got: map.cols,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    with_map(emb, map, noise_sigma, &mut rng)
}

fn with_map(emb: &EmbeddingTable, map: Matrix, sigma: f64, rng: &mut ChaCha8Rng) -> Result<SyntheticText> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidConfig("noise_sigma must be finite and non-negative".into()));
    }
    let mut set = TextEmbeddingSet::new(map.rows, TextSource::Synthetic);
    for i in 0..emb.num_entities() {
        let e = EntityId(i as u32);
        let mut v = map.apply(emb.entity(e));
        if sigma > 0.0 {
            for x in &mut v {
                *x += sigma * rng.sample::<f64, _>(StandardNormal);
            }
        }
        set.insert(emb.entity_label(e), &v)?;
    }
    Ok(SyntheticText { set, map })
}
