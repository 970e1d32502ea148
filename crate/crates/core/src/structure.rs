//! The six structural characteristics of a (sub)graph: density, global
//! clustering coefficient, relation-type count, degree distribution index,
//! relation type index and strongly-connected-component count.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeVector, EntityId, KnowledgeGraph};

/// Gini-form inequality index over non-negative counts.
///
/// Equals `Σᵢ Σⱼ |xᵢ − xⱼ| / (2 n² x̄)` over all ordered pairs, evaluated in
/// `O(n log n)` from the sorted values: the pairwise sum is
/// `2 Σₖ (2k − n − 1) x₍ₖ₎` with 1-based ranks `k`. Integer accumulation keeps
/// the numerator exact.
pub fn gini_index(values: &[u64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::UndefinedIndex("no values"));
    }
    let total: u128 = values.iter().map(|&v| v as u128).sum();
    if total == 0 {
        return Err(Error::UndefinedIndex("mean is zero"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable();
    let n = sorted.len() as i128;
    let numer: i128 = sorted
        .iter()
        .enumerate()
        .map(|(k, &x)| (2 * (k as i128 + 1) - n - 1) * x as i128)
        .sum();
    // G = 2·numer / (2 n² x̄) = numer / (n · total)
    Ok(numer as f64 / (n as f64 * total as f64))
}

pub fn degree_distribution_index(degrees: &DegreeVector) -> Result<f64> {
    gini_index(degrees.as_slice())
}

pub fn relation_type_index(g: &KnowledgeGraph) -> Result<f64> {
    if g.num_triples() == 0 {
        return Err(Error::UndefinedIndex("graph has zero triples"));
    }
    gini_index(&g.relation_counts())
}

/// Distinct connected ordered entity pairs over `n (n − 1)`.
pub fn graph_density(g: &KnowledgeGraph) -> Result<f64> {
    let n = g.num_entities();
    if n < 2 {
        return Err(Error::UndefinedDensity { entities: n });
    }
    let mut pairs = 0u64;
    let mut targets: Vec<u32> = Vec::new();
    for e in g.entity_ids() {
        targets.clear();
        targets.extend(
            g.out_edges(e)
                .iter()
                .map(|&(_, t)| t.0)
                .filter(|&t| t != e.0),
        );
        targets.sort_unstable();
        targets.dedup();
        pairs += targets.len() as u64;
    }
    Ok(pairs as f64 / (n as f64 * (n as f64 - 1.0)))
}

/// Triangle and connected-triplet counts of the undirected simple projection.
pub fn triangles_and_triplets(g: &KnowledgeGraph) -> (u64, u64) {
    let adj = g.undirected_projection();
    let mut triangles = 0u64;
    let mut triplets = 0u64;
    for (u, nu) in adj.iter().enumerate() {
        let d = nu.len() as u64;
        triplets += d * d.saturating_sub(1) / 2;
        for &v in nu.iter().filter(|&&v| v as usize > u) {
            let nv = &adj[v as usize];
            // count w > v present in both lists
            let (mut i, mut j) = (0, 0);
            while i < nu.len() && j < nv.len() {
                match nu[i].cmp(&nv[j]) {
                    core::cmp::Ordering::Less => i += 1,
                    core::cmp::Ordering::Greater => j += 1,
                    core::cmp::Ordering::Equal => {
                        if nu[i] > v {
                            triangles += 1;
                        }
                        i += 1;
                        j += 1;
                    }
                }
            }
        }
    }
    (triangles, triplets)
}

/// Transitivity of the undirected simple projection; 0 when there are no triplets.
pub fn global_clustering_coefficient(g: &KnowledgeGraph) -> f64 {
    let (triangles, triplets) = triangles_and_triplets(g);
    if triplets == 0 {
        0.0
    } else {
        3.0 * triangles as f64 / triplets as f64
    }
}

/// Number of strongly connected components (iterative Tarjan, `O(V + E)`).
/// Isolated entities count as singleton components.
pub fn strongly_connected_components(g: &KnowledgeGraph) -> usize {
    scc_labels(g).1
}

/// Component label per entity and the component count.
pub fn scc_labels(g: &KnowledgeGraph) -> (Vec<u32>, usize) {
    const UNVISITED: u32 = u32::MAX;
    let n = g.num_entities();
    let mut index = alloc::vec![UNVISITED; n];
    let mut low = alloc::vec![0u32; n];
    let mut on_stack = alloc::vec![false; n];
    let mut comp = alloc::vec![UNVISITED; n];
    let mut stack: Vec<u32> = Vec::new();
    let mut call: Vec<(u32, usize)> = Vec::new();
    let mut next_index = 0u32;
    let mut count = 0usize;

    for root in 0..n as u32 {
        if index[root as usize] != UNVISITED {
            continue;
        }
        call.push((root, 0));
        index[root as usize] = next_index;
        low[root as usize] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root as usize] = true;

        while let Some(&mut (v, ref mut edge)) = call.last_mut() {
            let edges = g.out_edges(EntityId(v));
            if *edge < edges.len() {
                let w = edges[*edge].1 .0;
                *edge += 1;
                if index[w as usize] == UNVISITED {
                    index[w as usize] = next_index;
                    low[w as usize] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w as usize] = true;
                    call.push((w, 0));
                } else if on_stack[w as usize] {
                    low[v as usize] = low[v as usize].min(index[w as usize]);
                }
                continue;
            }
            call.pop();
            if let Some(&(parent, _)) = call.last() {
                low[parent as usize] = low[parent as usize].min(low[v as usize]);
            }
            if low[v as usize] == index[v as usize] {
                loop {
                    let w = stack.pop().expect("tarjan stack underflow");
                    on_stack[w as usize] = false;
                    comp[w as usize] = count as u32;
                    if w == v {
                        break;
                    }
                }
                count += 1;
            }
        }
    }
    (comp, count)
}

/// Structural characteristics of one graph, in fixed serialization order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructuralCharacteristics {
    pub graph_density: f64,
    pub global_clustering_coefficient: f64,
    pub num_relation_types: u64,
    pub degree_distribution_index: f64,
    pub relation_type_index: f64,
    pub num_strongly_connected_components: u64,
}

impl StructuralCharacteristics {
    pub const NAMES: [&'static str; 6] = [
        "graph_density",
        "global_clustering_coefficient",
        "num_relation_types",
        "degree_distribution_index",
        "relation_type_index",
        "num_strongly_connected_components",
    ];

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.graph_density,
            self.global_clustering_coefficient,
            self.num_relation_types as f64,
            self.degree_distribution_index,
            self.relation_type_index,
            self.num_strongly_connected_components as f64,
        ]
    }
}

pub fn structural_characteristics(g: &KnowledgeGraph) -> Result<StructuralCharacteristics> {
    if g.num_triples() == 0 {
        return Err(Error::EmptyGraph);
    }
    let used_relations = g.relation_counts().iter().filter(|&&c| c > 0).count();
    Ok(StructuralCharacteristics {
        graph_density: graph_density(g)?,
        global_clustering_coefficient: global_clustering_coefficient(g),
        num_relation_types: used_relations as u64,
        degree_distribution_index: degree_distribution_index(&g.degree_vector())?,
        relation_type_index: relation_type_index(g)?,
        num_strongly_connected_components: strongly_connected_components(g) as u64,
    })
}
