//! Knowledge-graph data model: interned vocabularies, a deduplicated triple
//! store, and directed adjacency indexes.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use hashbrown::{HashMap, HashSet};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub u32);

impl EntityId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl RelationId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Triple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
}

impl Triple {
    pub fn new(head: u32, relation: u32, tail: u32) -> Self {
        Self {
            head: EntityId(head),
            relation: RelationId(relation),
            tail: EntityId(tail),
        }
    }
}

/// Label interner; ids are assigned in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    labels: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, label: &str) -> u32 {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len() as u32;
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }

    pub fn get(&self, label: &str) -> Option<u32> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: u32) -> &str {
        &self.labels[id as usize]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Incrementally assembles a [`KnowledgeGraph`], dropping exact duplicate triples.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    entities: Vocabulary,
    relations: Vocabulary,
    triples: Vec<Triple>,
    seen: HashSet<Triple>,
    duplicates: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_entity(&mut self, label: &str) -> EntityId {
        EntityId(self.entities.intern(label))
    }

    pub fn add_relation(&mut self, label: &str) -> RelationId {
        RelationId(self.relations.intern(label))
    }

    /// Adds a labelled triple. Returns `false` when it duplicates an earlier one.
    pub fn add_labeled(&mut self, head: &str, relation: &str, tail: &str) -> bool {
        let h = self.add_entity(head);
        let r = self.add_relation(relation);
        let t = self.add_entity(tail);
        self.add(Triple {
            head: h,
            relation: r,
            tail: t,
        })
    }

    /// Adds a triple over already-interned ids.
    pub fn add(&mut self, triple: Triple) -> bool {
        debug_assert!(triple.head.index() < self.entities.len());
        debug_assert!(triple.tail.index() < self.entities.len());
        debug_assert!(triple.relation.index() < self.relations.len());
        if self.seen.insert(triple) {
            self.triples.push(triple);
            true
        } else {
            self.duplicates += 1;
            false
        }
    }

    pub fn duplicates(&self) -> usize {
        self.duplicates
    }

    pub fn build(self) -> KnowledgeGraph {
        let n = self.entities.len();
        let mut out_adj = alloc::vec![Vec::new(); n];
        let mut in_adj = alloc::vec![Vec::new(); n];
        for t in &self.triples {
            out_adj[t.head.index()].push((t.relation, t.tail));
            in_adj[t.tail.index()].push((t.relation, t.head));
        }
        KnowledgeGraph {
            entities: self.entities,
            relations: self.relations,
            triples: self.triples,
            triple_set: self.seen,
            out_adj,
            in_adj,
        }
    }
}

/// Immutable directed multigraph of `(head, relation, tail)` facts.
#[derive(Debug, Clone)]
pub struct KnowledgeGraph {
    entities: Vocabulary,
    relations: Vocabulary,
    triples: Vec<Triple>,
    triple_set: HashSet<Triple>,
    out_adj: Vec<Vec<(RelationId, EntityId)>>,
    in_adj: Vec<Vec<(RelationId, EntityId)>>,
}

impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.entities == other.entities
            && self.relations == other.relations
            && self.triples == other.triples
    }
}

impl KnowledgeGraph {
    /// Builds a graph from labelled triples; returns the graph and the duplicate count.
    pub fn from_labeled<'a, I>(triples: I) -> (Self, usize)
    where
        I: IntoIterator<Item = (&'a str, &'a str, &'a str)>,
    {
        let mut b = GraphBuilder::new();
        for (h, r, t) in triples {
            b.add_labeled(h, r, t);
        }
        let dups = b.duplicates();
        (b.build(), dups)
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }

    pub fn num_triples(&self) -> usize {
        self.triples.len()
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn contains(&self, t: &Triple) -> bool {
        self.triple_set.contains(t)
    }

    pub fn out_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.out_adj[e.index()]
    }

    pub fn in_edges(&self, e: EntityId) -> &[(RelationId, EntityId)] {
        &self.in_adj[e.index()]
    }

    pub fn entity_label(&self, e: EntityId) -> &str {
        self.entities.label(e.0)
    }

    pub fn relation_label(&self, r: RelationId) -> &str {
        self.relations.label(r.0)
    }

    pub fn entity_id(&self, label: &str) -> Option<EntityId> {
        self.entities.get(label).map(EntityId)
    }

    pub fn relation_id(&self, label: &str) -> Option<RelationId> {
        self.relations.get(label).map(RelationId)
    }

    pub fn entity_ids(&self) -> impl Iterator<Item = EntityId> {
        (0..self.num_entities() as u32).map(EntityId)
    }

    /// Total degree (in + out over directed triples) of every vocabulary entity.
    pub fn degree_vector(&self) -> DegreeVector {
        DegreeVector(
            self.out_adj
                .iter()
                .zip(&self.in_adj)
                .map(|(o, i)| (o.len() + i.len()) as u64)
                .collect(),
        )
    }

    /// Neighbours in the undirected simple projection: sorted, deduplicated, no self-loops.
    pub fn undirected_neighbors(&self, e: EntityId) -> Vec<u32> {
        let mut ns: Vec<u32> = self.out_adj[e.index()]
            .iter()
            .chain(&self.in_adj[e.index()])
            .map(|&(_, x)| x.0)
            .filter(|&x| x != e.0)
            .collect();
        ns.sort_unstable();
        ns.dedup();
        ns
    }

    /// Undirected simple projection as adjacency lists.
    pub fn undirected_projection(&self) -> Vec<Vec<u32>> {
        self.entity_ids().map(|e| self.undirected_neighbors(e)).collect()
    }

    /// Sorted, deduplicated relation ids incident to `e` in either direction.
    pub fn incident_relations(&self, e: EntityId) -> Vec<u32> {
        let mut rs: Vec<u32> = self.out_adj[e.index()]
            .iter()
            .chain(&self.in_adj[e.index()])
            .map(|&(r, _)| r.0)
            .collect();
        rs.sort_unstable();
        rs.dedup();
        rs
    }

    /// Number of triples per relation type, indexed by relation id.
    pub fn relation_counts(&self) -> Vec<u64> {
        let mut counts = alloc::vec![0u64; self.num_relations()];
        for t in &self.triples {
            counts[t.relation.index()] += 1;
        }
        counts
    }

    /// Induces the subgraph on `keep` (parent entity ids). Entities keep their
    /// relative parent order, relations are renumbered in parent order, and
    /// triples keep parent order.
    pub fn induced_subgraph(&self, keep: &[EntityId]) -> KnowledgeGraph {
        let mut member = alloc::vec![false; self.num_entities()];
        for e in keep {
            member[e.index()] = true;
        }
        let mut b = GraphBuilder::new();
        let mut ent_map = alloc::vec![u32::MAX; self.num_entities()];
        for (i, &m) in member.iter().enumerate() {
            if m {
                ent_map[i] = b.add_entity(self.entities.label(i as u32)).0;
            }
        }
        let kept: Vec<&Triple> = self
            .triples
            .iter()
            .filter(|t| member[t.head.index()] && member[t.tail.index()])
            .collect();
        let mut used = alloc::vec![false; self.num_relations()];
        for t in &kept {
            used[t.relation.index()] = true;
        }
        let mut rel_map = alloc::vec![u32::MAX; self.num_relations()];
        for (i, &u) in used.iter().enumerate() {
            if u {
                rel_map[i] = b.add_relation(self.relations.label(i as u32)).0;
            }
        }
        for t in kept {
            b.add(Triple::new(
                ent_map[t.head.index()],
                rel_map[t.relation.index()],
                ent_map[t.tail.index()],
            ));
        }
        b.build()
    }

    /// Resolves a label-keyed triple against this graph's vocabularies.
    pub fn resolve(&self, head: &str, relation: &str, tail: &str) -> Result<Triple> {
        let h = self
            .entity_id(head)
            .ok_or_else(|| Error::UnknownEntity(head.to_string()))?;
        let t = self
            .entity_id(tail)
            .ok_or_else(|| Error::UnknownEntity(tail.to_string()))?;
        let r = self
            .relation_id(relation)
            .ok_or_else(|| Error::UnknownEntity(relation.to_string()))?;
        Ok(Triple {
            head: h,
            relation: r,
            tail: t,
        })
    }
}

/// Per-entity total degree, indexed by entity id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegreeVector(pub Vec<u64>);

impl DegreeVector {
    pub fn get(&self, e: EntityId) -> u64 {
        self.0[e.index()]
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.0.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_line_graph() {
        let (g, dups) =
            KnowledgeGraph::from_labeled([("a", "r1", "b"), ("b", "r1", "c"), ("a", "r2", "c")]);
        assert_eq!(g.num_entities(), 3);
        assert_eq!(g.num_relations(), 2);
        assert_eq!(g.num_triples(), 3);
        assert_eq!(dups, 0);
        assert_eq!(g.entity_label(EntityId(2)), "c");
    }

    #[test]
    fn duplicates_are_dropped_and_counted() {
        let (g, dups) = KnowledgeGraph::from_labeled([("a", "r1", "b"), ("a", "r1", "b")]);
        assert_eq!(g.num_triples(), 1);
        assert_eq!(dups, 1);
    }

    #[test]
    fn degree_examples() {
        let (g, _) = KnowledgeGraph::from_labeled([("a", "r", "b")]);
        assert_eq!(g.degree_vector().0, [1, 1]);

        let (g, _) = KnowledgeGraph::from_labeled([("a", "r", "b"), ("b", "r", "c"), ("c", "r", "a")]);
        assert_eq!(g.degree_vector().0, [2, 2, 2]);

        let spokes = ["s1", "s2", "s3", "s4", "s5"];
        let (g, _) = KnowledgeGraph::from_labeled(spokes.iter().map(|s| ("hub", "r", *s)));
        let d = g.degree_vector();
        assert_eq!(d.get(g.entity_id("hub").unwrap()), 5);
        for s in spokes {
            assert_eq!(d.get(g.entity_id(s).unwrap()), 1);
        }
        assert_eq!(d.total(), 2 * 5);
    }

    #[test]
    fn isolated_vocabulary_entities_have_zero_degree() {
        let mut b = GraphBuilder::new();
        b.add_labeled("a", "r", "b");
        b.add_entity("lonely");
        let g = b.build();
        assert_eq!(g.degree_vector().0, [1, 1, 0]);
    }

    #[test]
    fn adjacency_is_consistent_with_triples() {
        let (g, _) = KnowledgeGraph::from_labeled([
            ("a", "r1", "b"),
            ("a", "r2", "b"),
            ("b", "r1", "a"),
            ("c", "r1", "c"),
        ]);
        let out: usize = g.entity_ids().map(|e| g.out_edges(e).len()).sum();
        let inn: usize = g.entity_ids().map(|e| g.in_edges(e).len()).sum();
        assert_eq!(out, g.num_triples());
        assert_eq!(inn, g.num_triples());
        for t in g.triples() {
            assert!(g.out_edges(t.head).contains(&(t.relation, t.tail)));
            assert!(g.in_edges(t.tail).contains(&(t.relation, t.head)));
        }
        assert_eq!(g.undirected_neighbors(EntityId(2)), Vec::<u32>::new());
        assert_eq!(g.undirected_neighbors(EntityId(0)), [1]);
    }

    #[test]
    fn induced_subgraph_keeps_only_internal_triples() {
        let (g, _) = KnowledgeGraph::from_labeled([
            ("a", "r1", "b"),
            ("b", "r2", "c"),
            ("c", "r3", "a"),
            ("a", "r3", "d"),
        ]);
        let keep = [g.entity_id("c").unwrap(), g.entity_id("a").unwrap()];
        let sub = g.induced_subgraph(&keep);
        assert_eq!(sub.num_entities(), 2);
        assert_eq!(sub.num_triples(), 1);
        assert_eq!(sub.relations().labels(), ["r3"]);
        assert_eq!(sub.entities().labels(), ["a", "c"]);
    }
}
