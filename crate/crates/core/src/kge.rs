//! Stage-one knowledge-graph embedding training.
//!
//! Two scorer families are supported, both "higher is better":
//! translational (`−‖h + r − t‖₂`, margin ranking loss) and bilinear complex
//! (`Re⟨h, r, conj t⟩` over paired real/imaginary halves, logistic loss with
//! L2 regularization). Training is plain mini-batch SGD with exact analytic
//! gradients and seeded negative sampling.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, KnowledgeGraph, RelationId, Triple};

/// L2 penalty applied to every triple scored under the bilinear-complex loss.
pub const COMPLEX_L2: f64 = 1e-5;

/// Attempts at drawing a corruption that is not a known triple.
const MAX_NEGATIVE_ATTEMPTS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scorer {
    Translational,
    BilinearComplex,
}

impl Scorer {
    pub fn tag(self) -> &'static str {
        match self {
            Scorer::Translational => "translational",
            Scorer::BilinearComplex => "bilinear-complex",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        match tag {
            "translational" => Some(Scorer::Translational),
            "bilinear-complex" => Some(Scorer::BilinearComplex),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KgeConfig {
    pub scorer: Scorer,
    pub dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for KgeConfig {
    fn default() -> Self {
        Self {
            scorer: Scorer::Translational,
            dim: 64,
            epochs: 200,
            learning_rate: 0.01,
            margin: 1.0,
            negatives_per_positive: 8,
            batch_size: 512,
            seed: 0,
        }
    }
}

impl KgeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.into()));
        if self.dim == 0 {
            return bad("dim must be positive");
        }
        if self.scorer == Scorer::BilinearComplex && self.dim % 2 != 0 {
            return bad("bilinear-complex scorer needs an even dim");
        }
        if self.epochs == 0 || self.batch_size == 0 || self.negatives_per_positive == 0 {
            return bad("epochs, batch_size and negatives_per_positive must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.margin > 0.0) {
            return bad("learning_rate and margin must be positive");
        }
        Ok(())
    }
}

/// Entity and relation vectors, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub dim: usize,
    pub scorer: Scorer,
    pub entity_labels: Vec<String>,
    pub relation_labels: Vec<String>,
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
}

impl EmbeddingTable {
    /// All-zero table with generated labels `e<i>` / `r<i>`.
    pub fn zeros(scorer: Scorer, dim: usize, entities: usize, relations: usize) -> Self {
        Self {
            dim,
            scorer,
            entity_labels: (0..entities).map(|i| alloc::format!("e{i}")).collect(),
            relation_labels: (0..relations).map(|i| alloc::format!("r{i}")).collect(),
            entities: alloc::vec![0.0; entities * dim],
            relations: alloc::vec![0.0; relations * dim],
        }
    }

    /// Uniform initialization in `[−6/√dim, 6/√dim]`, entities first.
    pub fn random_for(g: &KnowledgeGraph, scorer: Scorer, dim: usize, rng: &mut impl Rng) -> Self {
        let bound = 6.0 / libm::sqrt(dim as f64);
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n * dim).map(|_| rng.random_range(-bound..=bound)).collect()
        };
        let entities = draw(g.num_entities());
        let relations = draw(g.num_relations());
        Self {
            dim,
            scorer,
            entity_labels: g.entities().labels().to_vec(),
            relation_labels: g.relations().labels().to_vec(),
            entities,
            relations,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relation_labels.len()
    }

    #[inline]
    pub fn entity(&self, e: EntityId) -> &[f64] {
        &self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    #[inline]
    pub fn entity_mut(&mut self, e: EntityId) -> &mut [f64] {
        &mut self.entities[e.index() * self.dim..(e.index() + 1) * self.dim]
    }

    #[inline]
    pub fn relation(&self, r: RelationId) -> &[f64] {
        &self.relations[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    #[inline]
    pub fn relation_mut(&mut self, r: RelationId) -> &mut [f64] {
        &mut self.relations[r.index() * self.dim..(r.index() + 1) * self.dim]
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        &self.entity_labels[e.index()]
    }

    pub fn entity_index(&self, label: &str) -> Option<EntityId> {
        self.entity_labels
            .iter()
            .position(|l| l == label)
            .map(|i| EntityId(i as u32))
    }

    pub fn is_finite(&self) -> bool {
        self.entities.iter().chain(&self.relations).all(|x| x.is_finite())
    }

    #[inline]
    pub fn score_vectors(&self, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
        score(self.scorer, h, r, t)
    }

    /// L2-normalizes every entity vector (zero vectors are left alone).
    pub fn normalize_entities(&mut self) {
        for row in self.entities.chunks_mut(self.dim) {
            let n = crate::numeric::l2_norm(row);
            if n > 0.0 {
                row.iter_mut().for_each(|x| *x /= n);
            }
        }
    }
}

pub fn score(scorer: Scorer, h: &[f64], r: &[f64], t: &[f64]) -> f64 {
    match scorer {
        Scorer::Translational => {
            let mut s = 0.0;
            for k in 0..h.len() {
                let u = h[k] + r[k] - t[k];
                s += u * u;
            }
            -libm::sqrt(s)
        }
        Scorer::BilinearComplex => {
            let half = h.len() / 2;
            let (hr, hi) = h.split_at(half);
            let (rr, ri) = r.split_at(half);
            let (tr, ti) = t.split_at(half);
            let mut s = 0.0;
            for k in 0..half {
                s += hr[k] * rr[k] * tr[k] + hi[k] * rr[k] * ti[k] + hr[k] * ri[k] * ti[k]
                    - hi[k] * ri[k] * tr[k];
            }
            s
        }
    }
}

pub fn score_triple(emb: &EmbeddingTable, t: &Triple) -> f64 {
    emb.score_vectors(emb.entity(t.head), emb.relation(t.relation), emb.entity(t.tail))
}

/// Adds `coef · ∂score/∂(h, r, t)` into the three gradient rows.
fn accumulate_score_grad(
    scorer: Scorer,
    (h, r, t): (&[f64], &[f64], &[f64]),
    coef: f64,
    gh: &mut [f64],
    gr: &mut [f64],
    gt: &mut [f64],
) {
    match scorer {
        Scorer::Translational => {
            let mut norm = 0.0;
            for k in 0..h.len() {
                let u = h[k] + r[k] - t[k];
                norm += u * u;
            }
            let norm = libm::sqrt(norm);
            if norm == 0.0 {
                return;
            }
            for k in 0..h.len() {
                let g = coef * (h[k] + r[k] - t[k]) / norm;
                gh[k] -= g;
                gr[k] -= g;
                gt[k] += g;
            }
        }
        Scorer::BilinearComplex => {
            let half = h.len() / 2;
            for k in 0..half {
                let (hr, hi) = (h[k], h[k + half]);
                let (rr, ri) = (r[k], r[k + half]);
                let (tr, ti) = (t[k], t[k + half]);
                gh[k] += coef * (rr * tr + ri * ti);
                gh[k + half] += coef * (rr * ti - ri * tr);
                gr[k] += coef * (hr * tr + hi * ti);
                gr[k + half] += coef * (hr * ti - hi * tr);
                gt[k] += coef * (hr * rr - hi * ri);
                gt[k + half] += coef * (hi * rr + hr * ri);
            }
        }
    }
}

/// A positive triple with its sampled corruptions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub positive: Triple,
    pub negatives: Vec<Triple>,
}

/// Gradient buffer over the whole table that remembers which rows were written.
#[derive(Debug, Clone)]
pub struct Gradient {
    dim: usize,
    pub entities: Vec<f64>,
    pub relations: Vec<f64>,
    touched_entities: Vec<u32>,
    touched_relations: Vec<u32>,
    entity_flag: Vec<bool>,
    relation_flag: Vec<bool>,
}

impl Gradient {
    pub fn for_table(t: &EmbeddingTable) -> Self {
        Self {
            dim: t.dim,
            entities: alloc::vec![0.0; t.entities.len()],
            relations: alloc::vec![0.0; t.relations.len()],
            touched_entities: Vec::new(),
            touched_relations: Vec::new(),
            entity_flag: alloc::vec![false; t.num_entities()],
            relation_flag: alloc::vec![false; t.num_relations()],
        }
    }

    pub fn clear(&mut self) {
        let d = self.dim;
        for &e in &self.touched_entities {
            self.entities[e as usize * d..(e as usize + 1) * d].fill(0.0);
            self.entity_flag[e as usize] = false;
        }
        for &r in &self.touched_relations {
            self.relations[r as usize * d..(r as usize + 1) * d].fill(0.0);
            self.relation_flag[r as usize] = false;
        }
        self.touched_entities.clear();
        self.touched_relations.clear();
    }

    fn touch(&mut self, t: &Triple) {
        for e in [t.head.0, t.tail.0] {
            if !self.entity_flag[e as usize] {
                self.entity_flag[e as usize] = true;
                self.touched_entities.push(e);
            }
        }
        let r = t.relation.0;
        if !self.relation_flag[r as usize] {
            self.relation_flag[r as usize] = true;
            self.touched_relations.push(r);
        }
    }

    /// Scaled score gradient of `t` added into the buffer. The three rows may
    /// alias (e.g. a self-loop), so each is accumulated through scratch.
    fn add_score_grad(&mut self, table: &EmbeddingTable, t: &Triple, coef: f64, scratch: &mut [f64]) {
        self.touch(t);
        let d = self.dim;
        scratch.fill(0.0);
        let (gh, rest) = scratch.split_at_mut(d);
        let (gr, gt) = rest.split_at_mut(d);
        accumulate_score_grad(
            table.scorer,
            (table.entity(t.head), table.relation(t.relation), table.entity(t.tail)),
            coef,
            gh,
            gr,
            gt,
        );
        add_row(&mut self.entities, t.head.index(), d, gh);
        add_row(&mut self.relations, t.relation.index(), d, gr);
        add_row(&mut self.entities, t.tail.index(), d, gt);
    }

    fn add_l2(&mut self, table: &EmbeddingTable, t: &Triple, lambda: f64) {
        self.touch(t);
        let d = self.dim;
        let c = 2.0 * lambda;
        add_scaled(&mut self.entities, t.head.index(), d, table.entity(t.head), c);
        add_scaled(&mut self.relations, t.relation.index(), d, table.relation(t.relation), c);
        add_scaled(&mut self.entities, t.tail.index(), d, table.entity(t.tail), c);
    }

    /// Applies `table -= lr · self` on the touched rows.
    pub fn apply(&self, table: &mut EmbeddingTable, lr: f64) {
        let d = self.dim;
        for &e in &self.touched_entities {
            let row = &self.entities[e as usize * d..(e as usize + 1) * d];
            for (x, g) in table.entity_mut(EntityId(e)).iter_mut().zip(row) {
                *x -= lr * g;
            }
        }
        for &r in &self.touched_relations {
            let row = &self.relations[r as usize * d..(r as usize + 1) * d];
            for (x, g) in table.relation_mut(RelationId(r)).iter_mut().zip(row) {
                *x -= lr * g;
            }
        }
    }
}

fn add_scaled(buf: &mut [f64], idx: usize, d: usize, src: &[f64], c: f64) {
    for (x, y) in buf[idx * d..(idx + 1) * d].iter_mut().zip(src) {
        *x += c * y;
    }
}

fn add_row(buf: &mut [f64], idx: usize, d: usize, g: &[f64]) {
    for (x, y) in buf[idx * d..(idx + 1) * d].iter_mut().zip(g) {
        *x += y;
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Loss of one example; adds `scale · ∂loss` into `grad` when given.
///
/// Translational: `Σₙ max(0, margin − s(pos) + s(neg))`.
/// Bilinear complex: `softplus(−s(pos)) + Σₙ softplus(s(neg))` plus
/// `COMPLEX_L2 · (‖h‖² + ‖r‖² + ‖t‖²)` for every scored triple.
pub fn example_loss(
    table: &EmbeddingTable,
    ex: &TrainingExample,
    margin: f64,
    scale: f64,
    mut grad: Option<(&mut Gradient, &mut [f64])>,
) -> f64 {
    let s_pos = score_triple(table, &ex.positive);
    let mut loss = 0.0;
    match table.scorer {
        Scorer::Translational => {
            for n in &ex.negatives {
                let s_neg = score_triple(table, n);
                let l = margin - s_pos + s_neg;
                if l > 0.0 {
                    loss += l;
                    if let Some((g, scratch)) = grad.as_mut() {
                        g.add_score_grad(table, &ex.positive, -scale, scratch);
                        g.add_score_grad(table, n, scale, scratch);
                    }
                }
            }
        }
        Scorer::BilinearComplex => {
            let sq = |t: &Triple| {
                crate::numeric::dot(table.entity(t.head), table.entity(t.head))
                    + crate::numeric::dot(table.relation(t.relation), table.relation(t.relation))
                    + crate::numeric::dot(table.entity(t.tail), table.entity(t.tail))
            };
            loss += softplus(-s_pos) + COMPLEX_L2 * sq(&ex.positive);
            if let Some((g, scratch)) = grad.as_mut() {
                g.add_score_grad(table, &ex.positive, -scale * sigmoid(-s_pos), scratch);
                g.add_l2(table, &ex.positive, scale * COMPLEX_L2);
            }
            for n in &ex.negatives {
                let s_neg = score_triple(table, n);
                loss += softplus(s_neg) + COMPLEX_L2 * sq(n);
                if let Some((g, scratch)) = grad.as_mut() {
                    g.add_score_grad(table, n, scale * sigmoid(s_neg), scratch);
                    g.add_l2(table, n, scale * COMPLEX_L2);
                }
            }
        }
    }
    loss
}

/// Summed example loss over a batch, with its gradient accumulated into
/// `grad`. Summing keeps the learning rate a per-example step size.
pub fn batch_objective(
    table: &EmbeddingTable,
    batch: &[TrainingExample],
    margin: f64,
    grad: Option<&mut Gradient>,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let scale = 1.0;
    let mut scratch = alloc::vec![0.0; 3 * table.dim];
    let mut total = 0.0;
    match grad {
        Some(g) => {
            for ex in batch {
                total += example_loss(table, ex, margin, scale, Some((&mut *g, &mut scratch)));
            }
        }
        None => {
            for ex in batch {
                total += example_loss(table, ex, margin, scale, None);
            }
        }
    }
    total
}

/// Corrupts head or tail (fair coin) with a uniformly drawn entity, rejecting
/// known triples. `None` after repeated collisions.
pub fn corrupt(g: &KnowledgeGraph, t: &Triple, rng: &mut impl Rng) -> Option<Triple> {
    let n = g.num_entities() as u32;
    for _ in 0..MAX_NEGATIVE_ATTEMPTS {
        let e = EntityId(rng.random_range(0..n));
        let c = if rng.random_bool(0.5) {
            Triple { head: e, ..*t }
        } else {
            Triple { tail: e, ..*t }
        };
        if !g.contains(&c) {
            return Some(c);
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    /// Mean loss per positive triple, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Negatives abandoned because every draw hit a known triple.
    pub skipped_negatives: usize,
}

pub fn train_kge(g: &KnowledgeGraph, cfg: &KgeConfig) -> Result<TrainedEmbeddings> {
    cfg.validate()?;
    if g.num_triples() == 0 {
        return Err(Error::EmptyGraph);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut table = EmbeddingTable::random_for(g, cfg.scorer, cfg.dim, &mut rng);
    let mut grad = Gradient::for_table(&table);
    let mut order: Vec<usize> = (0..g.num_triples()).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut skipped = 0usize;
    let mut batch: Vec<TrainingExample> = Vec::with_capacity(cfg.batch_size);

    for epoch in 1..=cfg.epochs {
        if cfg.scorer == Scorer::Translational {
            table.normalize_entities();
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            batch.clear();
            for &i in chunk {
                let positive = g.triples()[i];
                let mut negatives = Vec::with_capacity(cfg.negatives_per_positive);
                for _ in 0..cfg.negatives_per_positive {
                    match corrupt(g, &positive, &mut rng) {
                        Some(n) => negatives.push(n),
                        None => skipped += 1,
                    }
                }
                batch.push(TrainingExample {
                    positive,
                    negatives,
                });
            }
            grad.clear();
            let loss = batch_objective(&table, &batch, cfg.margin, Some(&mut grad));
            epoch_loss += loss;
            grad.apply(&mut table, cfg.learning_rate);
        }
        let mean = epoch_loss / g.num_triples() as f64;
        if !mean.is_finite() || !table.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        epoch_losses.push(mean);
    }
    Ok(TrainedEmbeddings {
        table,
        epoch_losses,
        skipped_negatives: skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn translational_identity_scores_zero() {
        assert_eq!(score(Scorer::Translational, &[1.0, 2.0], &[0.5, -1.0], &[1.5, 1.0]), 0.0);
        assert_eq!(score(Scorer::Translational, &[0.3, 0.4], &[0.0, 0.0], &[0.3, 0.4]), 0.0);
        assert!(score(Scorer::Translational, &[0.0, 0.0], &[0.0, 0.0], &[3.0, 4.0]) == -5.0);
    }

    #[test]
    fn complex_hand_value() {
        // h = r = t = 1 + 0i
        assert_eq!(score(Scorer::BilinearComplex, &[1.0, 0.0], &[1.0, 0.0], &[1.0, 0.0]), 1.0);
        // h = i, r = 1, t = i: Re(i · 1 · conj(i)) = 1
        assert_eq!(score(Scorer::BilinearComplex, &[0.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]), 1.0);
        // h = 1, r = i, t = 1: Re(1 · i · 1) = 0
        assert_eq!(score(Scorer::BilinearComplex, &[1.0, 0.0], &[0.0, 1.0], &[1.0, 0.0]), 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = KgeConfig {
            scorer: Scorer::BilinearComplex,
            dim: 7,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.dim = 8;
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn single_fact_is_separated() {
        let g = KnowledgeGraph::from_labeled([("a", "r", "b"), ("c", "s", "d"), ("e", "s", "f")]).0;
        let cfg = KgeConfig {
            dim: 16,
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 4,
            seed: 3,
            ..Default::default()
        };
        let out = train_kge(&g, &cfg).unwrap();
        let pos = g.resolve("a", "r", "b").unwrap();
        let s_pos = score_triple(&out.table, &pos);
        for e in g.entity_ids() {
            for c in [Triple { head: e, ..pos }, Triple { tail: e, ..pos }] {
                if c != pos {
                    assert!(s_pos > score_triple(&out.table, &c), "{c:?}");
                }
            }
        }
    }

    #[test]
    fn training_is_bit_deterministic() {
        let g = KnowledgeGraph::from_labeled([("a", "r", "b"), ("b", "r", "c"), ("c", "q", "a")]).0;
        for scorer in [Scorer::Translational, Scorer::BilinearComplex] {
            let cfg = KgeConfig {
                scorer,
                dim: 8,
                epochs: 20,
                seed: 11,
                ..Default::default()
            };
            let a = train_kge(&g, &cfg).unwrap();
            let b = train_kge(&g, &cfg).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let g = KnowledgeGraph::from_labeled([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "d")]).0;
        let cfg = KgeConfig {
            scorer: Scorer::BilinearComplex,
            dim: 8,
            epochs: 50,
            learning_rate: 1e200,
            ..Default::default()
        };
        assert!(matches!(train_kge(&g, &cfg), Err(Error::Divergence { .. })));
    }
}
