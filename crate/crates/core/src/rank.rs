//! Filtered tail ranking and the MRR / Hits@k metrics.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::hash::Hash;

use hashbrown::HashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EntityId, RelationId, Triple};
use crate::kge::EmbeddingTable;
use crate::Executor;

/// Query head: a vocabulary entity or a raw vector (e.g. a mapped open-world entity).
#[derive(Debug, Clone, Copy)]
pub enum Head<'a> {
    Entity(EntityId),
    Vector(&'a [f64]),
}

/// Known true tails per query key, used to filter competing candidates.
#[derive(Debug, Clone)]
pub struct TailFilter<K: Hash + Eq> {
    tails: HashMap<K, Vec<EntityId>>,
}

impl<K: Hash + Eq> Default for TailFilter<K> {
    fn default() -> Self {
        Self {
            tails: HashMap::new(),
        }
    }
}

impl<K: Hash + Eq> TailFilter<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, key: K, tail: EntityId) {
        let v = self.tails.entry(key).or_default();
        if !v.contains(&tail) {
            v.push(tail);
        }
    }

    pub fn known_tails(&self, key: &K) -> &[EntityId] {
        self.tails.get(key).map(Vec::as_slice).unwrap_or(&[])
    }
}

impl TailFilter<(EntityId, RelationId)> {
    pub fn from_triples<'a>(triples: impl IntoIterator<Item = &'a Triple>) -> Self {
        let mut f = Self::new();
        for t in triples {
            f.insert((t.head, t.relation), t.tail);
        }
        f
    }
}

/// 1-based rank of `true_tail` among all entities, scored with the table's
/// scorer. Candidates in `filter` other than the true tail are removed. A tied
/// block receives its mean rank, rounded up.
pub fn rank_tail(
    emb: &EmbeddingTable,
    head: Head<'_>,
    relation: RelationId,
    true_tail: EntityId,
    filter: &[EntityId],
) -> usize {
    let h = match head {
        Head::Entity(e) => emb.entity(e),
        Head::Vector(v) => v,
    };
    let r = emb.relation(relation);
    let target = emb.score_vectors(h, r, emb.entity(true_tail));
    let mut greater = 0usize;
    let mut tied = 0usize;
    for c in 0..emb.num_entities() as u32 {
        let c = EntityId(c);
        if c == true_tail {
            continue;
        }
        let s = emb.score_vectors(h, r, emb.entity(c));
        if s < target {
            continue;
        }
        if filter.contains(&c) {
            continue;
        }
        if s > target {
            greater += 1;
        } else {
            tied += 1;
        }
    }
    // tied block spans ranks greater+1 ..= greater+tied+1
    greater + (tied + 2).div_ceil(2)
}

pub fn mrr(ranks: &[usize]) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let s = crate::numeric::sum(ranks.iter().map(|&r| 1.0 / r as f64));
    Ok(s / ranks.len() as f64)
}

pub fn hits_at_k(ranks: &[usize], k: usize) -> Result<f64> {
    if ranks.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let hits = ranks.iter().filter(|&&r| r <= k).count();
    Ok(hits as f64 / ranks.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedQuery {
    pub head: String,
    pub relation: RelationId,
    pub tail: EntityId,
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub queries: Vec<RankedQuery>,
    pub mrr: f64,
    pub hits_at_k: BTreeMap<u32, f64>,
}

pub const DEFAULT_HITS: [u32; 3] = [1, 3, 10];

impl RankingResult {
    pub fn from_queries(queries: Vec<RankedQuery>, ks: &[u32]) -> Result<Self> {
        let ranks: Vec<usize> = queries.iter().map(|q| q.rank).collect();
        let mrr = mrr(&ranks)?;
        let mut hits = BTreeMap::new();
        for &k in ks {
            hits.insert(k, hits_at_k(&ranks, k as usize)?);
        }
        Ok(Self {
            queries,
            mrr,
            hits_at_k: hits,
        })
    }

    pub fn ranks(&self) -> Vec<usize> {
        self.queries.iter().map(|q| q.rank).collect()
    }

    /// Mean reciprocal rank grouped by true tail, ascending by entity id.
    pub fn per_tail_mrr(&self) -> Vec<(EntityId, f64)> {
        let mut acc: BTreeMap<EntityId, (f64, usize)> = BTreeMap::new();
        for q in &self.queries {
            let e = acc.entry(q.tail).or_insert((0.0, 0));
            e.0 += 1.0 / q.rank as f64;
            e.1 += 1;
        }
        acc.into_iter()
            .map(|(e, (s, n))| (e, s / n as f64))
            .collect()
    }
}

/// Filtered tail-prediction evaluation of closed-world test triples.
pub fn evaluate_tails<E: Executor>(
    emb: &EmbeddingTable,
    test: &[Triple],
    filter: &TailFilter<(EntityId, RelationId)>,
    exec: &E,
) -> Result<RankingResult> {
    let queries = exec.map(test, |t| RankedQuery {
        head: emb.entity_label(t.head).into(),
        relation: t.relation,
        tail: t.tail,
        rank: rank_tail(
            emb,
            Head::Entity(t.head),
            t.relation,
            t.tail,
            filter.known_tails(&(t.head, t.relation)),
        ),
    });
    RankingResult::from_queries(queries, &DEFAULT_HITS)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kge::Scorer;

    fn table(tails: &[f64]) -> EmbeddingTable {
        // 1-dim translational table: head 0 at origin, relation 0; score = -|t|
        let mut t = EmbeddingTable::zeros(Scorer::Translational, 1, tails.len() + 1, 1);
        for (i, &x) in tails.iter().enumerate() {
            t.entity_mut(EntityId(i as u32 + 1))[0] = x;
        }
        t
    }

    #[test]
    fn strict_best_is_rank_one() {
        let t = table(&[0.1, 0.5, 0.9]);
        assert_eq!(rank_tail(&t, Head::Entity(EntityId(0)), RelationId(0), EntityId(1), &[]), 2);
        // head itself (distance 0) outranks everything; filter it away
        assert_eq!(
            rank_tail(&t, Head::Entity(EntityId(0)), RelationId(0), EntityId(1), &[EntityId(0)]),
            1
        );
    }

    #[test]
    fn three_way_tie_gets_rank_two() {
        let t = EmbeddingTable::zeros(Scorer::Translational, 2, 3, 1);
        assert_eq!(rank_tail(&t, Head::Vector(&[0.0, 0.0]), RelationId(0), EntityId(1), &[]), 2);
    }

    #[test]
    fn filter_never_removes_true_tail() {
        let t = table(&[0.1, 0.5, 0.9]);
        let all: Vec<EntityId> = (0..4).map(EntityId).collect();
        assert_eq!(rank_tail(&t, Head::Entity(EntityId(0)), RelationId(0), EntityId(3), &all), 1);
    }

    #[test]
    fn metric_examples() {
        assert_eq!(mrr(&[1, 1, 1]).unwrap(), 1.0);
        assert!((mrr(&[1, 2, 4]).unwrap() - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(mrr(&[10]).unwrap(), 0.1);
        assert_eq!(hits_at_k(&[1, 2, 4], 1).unwrap(), 1.0 / 3.0);
        assert_eq!(hits_at_k(&[1, 2, 4], 2).unwrap(), 2.0 / 3.0);
        assert_eq!(hits_at_k(&[1, 2, 4], 10).unwrap(), 1.0);
        assert_eq!(mrr(&[]), Err(Error::EmptyEvaluation));
        assert_eq!(hits_at_k(&[], 3), Err(Error::EmptyEvaluation));
    }
}
