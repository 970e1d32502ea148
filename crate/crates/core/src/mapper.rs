//! Stage-two mapping function: a feed-forward network from the text
//! embedding space into the stage-one graph embedding space, trained with
//! per-degree-group instrumentation.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{DegreeVector, EntityId, RelationId};
use crate::kge::EmbeddingTable;
use crate::numeric::{cosine_distance, dot, euclidean, l2_norm, CompensatedSum};
use crate::quality::{DegreeThresholds, ResolvedThresholds, Stratum};
use crate::rank::{rank_tail, Head, RankedQuery, RankingResult, TailFilter, DEFAULT_HITS};
use crate::synth::{Matrix, OpenWorldQuery, TextEmbeddingSet};
use crate::Executor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlignmentLoss {
    SquaredEuclidean,
    NegativeCosine,
}

impl AlignmentLoss {
    /// Loss value and its gradient with respect to the output `o`.
    pub fn value_and_grad(self, o: &[f64], y: &[f64], grad: &mut [f64]) -> f64 {
        match self {
            AlignmentLoss::SquaredEuclidean => {
                let mut s = 0.0;
                for ((g, &a), &b) in grad.iter_mut().zip(o).zip(y) {
                    let d = a - b;
                    *g = 2.0 * d;
                    s += d * d;
                }
                s
            }
            AlignmentLoss::NegativeCosine => {
                let no = l2_norm(o);
                let ny = l2_norm(y);
                if no == 0.0 || ny == 0.0 {
                    grad.fill(0.0);
                    return 0.0;
                }
                let c = dot(o, y) / (no * ny);
                for ((g, &a), &b) in grad.iter_mut().zip(o).zip(y) {
                    *g = -(b / (no * ny) - c * a / (no * no));
                }
                -c
            }
        }
    }
}

/// Fully connected network with hidden activations and a linear output.
///
/// Parameters live in one flat buffer, layer by layer: the `out × in`
/// row-major weight matrix followed by the bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mapper {
    sizes: Vec<usize>,
    activation: Activation,
    params: Vec<f64>,
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl Mapper {
    /// Glorot-uniform weights, zero biases.
    pub fn new(input: usize, hidden: &[usize], output: usize, activation: Activation, rng: &mut impl Rng) -> Self {
        let mut sizes = Vec::with_capacity(hidden.len() + 2);
        sizes.push(input);
        sizes.extend_from_slice(hidden);
        sizes.push(output);
        let mut params = Vec::with_capacity(param_count(&sizes));
        for w in sizes.windows(2) {
            let bound = libm::sqrt(6.0 / (w[0] + w[1]) as f64);
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(core::iter::repeat_n(0.0, w[1]));
        }
        Self { sizes, activation, params }
    }

    /// A single linear layer `x ↦ M·x + b`.
    pub fn linear_from(m: &Matrix, bias: Option<&[f64]>) -> Result<Self> {
        let mut params = m.data.clone();
        match bias {
            Some(b) if b.len() != m.rows => {
                return Err(Error::DimensionMismatch {
                    expected: m.rows,
                    got: b.len(),
                })
            }
            Some(b) => params.extend_from_slice(b),
            None => params.extend(core::iter::repeat_n(0.0, m.rows)),
        }
        Ok(Self {
            sizes: vec![m.cols, m.rows],
            activation: Activation::Tanh,
            params,
        })
    }

    pub fn from_parts(sizes: Vec<usize>, activation: Activation, params: Vec<f64>) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::InvalidConfig("mapper needs at least two positive layer sizes".into()));
        }
        let expected = param_count(&sizes);
        if params.len() != expected {
            return Err(Error::DimensionMismatch {
                expected,
                got: params.len(),
            });
        }
        Ok(Self { sizes, activation, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        self.sizes[self.sizes.len() - 1]
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut acts = Vec::new();
        self.forward_cached(x, &mut acts);
        acts.pop().expect("output layer")
    }

    /// Fills `acts` with the input followed by every layer's output.
    fn forward_cached(&self, x: &[f64], acts: &mut Vec<Vec<f64>>) {
        let layers = self.sizes.len() - 1;
        acts.resize_with(layers + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(x);
        let mut off = 0;
        for l in 0..layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let w = &self.params[off..off + n_in * n_out];
            let b = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            off += n_out * (n_in + 1);
            let (prev, rest) = acts.split_at_mut(l + 1);
            let input = &prev[l];
            let out = &mut rest[0];
            out.clear();
            for j in 0..n_out {
                let z = dot(&w[j * n_in..(j + 1) * n_in], input) + b[j];
                out.push(if l + 1 < layers { self.activation.apply(z) } else { z });
            }
        }
    }

    /// Adds `scale · ∂loss/∂θ` for one sample to `grad` given the cached
    /// activations and `∂loss/∂output` in `delta`. Returns the L1 norm and
    /// squared L2 norm of the unscaled per-sample gradient.
    fn backward(&self, acts: &[Vec<f64>], delta: &mut Vec<f64>, next: &mut Vec<f64>, grad: &mut [f64], scale: f64) -> (f64, f64) {
        let layers = self.sizes.len() - 1;
        let mut offsets = Vec::with_capacity(layers);
        let mut off = 0;
        for l in 0..layers {
            offsets.push(off);
            off += self.sizes[l + 1] * (self.sizes[l] + 1);
        }
        let (mut l1, mut l2) = (0.0, 0.0);
        for l in (0..layers).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = offsets[l];
            let input = &acts[l];
            let d1: f64 = delta.iter().map(|d| d.abs()).sum();
            let d2: f64 = delta.iter().map(|d| d * d).sum();
            let a1: f64 = input.iter().map(|a| a.abs()).sum();
            let a2: f64 = input.iter().map(|a| a * a).sum();
            l1 += d1 * (a1 + 1.0);
            l2 += d2 * (a2 + 1.0);
            for j in 0..n_out {
                let dj = scale * delta[j];
                if dj != 0.0 {
                    let row = &mut grad[off + j * n_in..off + (j + 1) * n_in];
                    for (g, &a) in row.iter_mut().zip(input) {
                        *g += dj * a;
                    }
                }
                grad[off + n_in * n_out + j] += dj;
            }
            if l > 0 {
                let w = &self.params[off..off + n_in * n_out];
                next.clear();
                next.resize(n_in, 0.0);
                for j in 0..n_out {
                    let dj = delta[j];
                    if dj != 0.0 {
                        for (n, &wv) in next.iter_mut().zip(&w[j * n_in..(j + 1) * n_in]) {
                            *n += dj * wv;
                        }
                    }
                }
                for (n, &a) in next.iter_mut().zip(input) {
                    *n *= self.activation.derivative_from_output(a);
                }
                core::mem::swap(delta, next);
            }
        }
        (l1, l2)
    }

    /// Loss of one `(text, target)` pair and its full parameter gradient.
    pub fn loss_and_gradient(&self, x: &[f64], y: &[f64], loss: AlignmentLoss) -> (f64, Vec<f64>) {
        let mut acts = Vec::new();
        self.forward_cached(x, &mut acts);
        let out = acts.last().expect("output");
        let mut delta = vec![0.0; out.len()];
        let value = loss.value_and_grad(out, y, &mut delta);
        let mut grad = vec![0.0; self.params.len()];
        self.backward(&acts, &mut delta, &mut Vec::new(), &mut grad, 1.0);
        (value, grad)
    }

    pub fn loss(&self, x: &[f64], y: &[f64], loss: AlignmentLoss) -> f64 {
        let o = self.forward(x);
        let mut g = vec![0.0; o.len()];
        loss.value_and_grad(&o, y, &mut g)
    }
}

/// How often an entity is visited per epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SampleWeighting {
    /// Once per incident closed-graph triple, i.e. `degree(e)` times.
    PerTriple,
    PerEntity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapperConfig {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub loss: AlignmentLoss,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub thresholds: DegreeThresholds,
    pub weighting: SampleWeighting,
}

impl Default for MapperConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![256],
            activation: Activation::Tanh,
            loss: AlignmentLoss::SquaredEuclidean,
            epochs: 30,
            learning_rate: 0.005,
            batch_size: 128,
            seed: 0,
            thresholds: DegreeThresholds::default(),
            weighting: SampleWeighting::PerTriple,
        }
    }
}

impl MapperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("hidden layer sizes must be positive".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidConfig("epochs and batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidConfig("learning_rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceGroup {
    Low,
    Mid,
    High,
    /// Open entities, compared against their reference graph vectors.
    HeldOut,
}

impl TraceGroup {
    pub const ALL: [TraceGroup; 4] = [TraceGroup::Low, TraceGroup::Mid, TraceGroup::High, TraceGroup::HeldOut];

    pub fn name(self) -> &'static str {
        match self {
            TraceGroup::Low => "low",
            TraceGroup::Mid => "mid",
            TraceGroup::High => "high",
            TraceGroup::HeldOut => "held-out",
        }
    }

    fn from_stratum(s: Stratum) -> Self {
        match s {
            Stratum::Low => TraceGroup::Low,
            Stratum::Mid => TraceGroup::Mid,
            Stratum::High => TraceGroup::High,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRecord {
    pub group: TraceGroup,
    /// Distinct entities in the group.
    pub entities: usize,
    /// Training samples drawn from the group this epoch.
    pub samples: usize,
    /// Sum over the group's samples of each per-sample gradient's L1 norm.
    pub grad_l1: f64,
    /// Sum over the group's samples of each per-sample gradient's L2 norm.
    pub grad_l2: f64,
    pub grad_l1_cumulative: f64,
    pub grad_l2_cumulative: f64,
    /// Norms of the group's gradients summed over the epoch.
    pub sum_grad_l1: f64,
    pub sum_grad_l2: f64,
    pub align_cosine_mean: Option<f64>,
    pub align_cosine_std: Option<f64>,
    pub align_euclidean_mean: Option<f64>,
    pub align_euclidean_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub loss: f64,
    pub mrr: Option<f64>,
    /// Per-sample gradient norms accumulated over every sample of the epoch.
    pub total_grad_l1: f64,
    pub total_grad_l2: f64,
    /// Low, mid, high and held-out, in that order.
    pub groups: Vec<GroupRecord>,
}

impl EpochRecord {
    pub fn group(&self, g: TraceGroup) -> &GroupRecord {
        self.groups.iter().find(|r| r.group == g).expect("every group is traced")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub thresholds: ResolvedThresholds,
    pub epochs: Vec<EpochRecord>,
}

/// One CSV row of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub group: TraceGroup,
    pub entities: usize,
    pub samples: usize,
    pub loss: f64,
    pub mrr: Option<f64>,
    pub grad_l1: f64,
    pub grad_l2: f64,
    pub grad_l1_cumulative: f64,
    pub grad_l2_cumulative: f64,
    pub sum_grad_l1: f64,
    pub sum_grad_l2: f64,
    pub align_cosine_mean: Option<f64>,
    pub align_cosine_std: Option<f64>,
    pub align_euclidean_mean: Option<f64>,
    pub align_euclidean_std: Option<f64>,
}

impl TrainingTrace {
    pub fn rows(&self) -> Vec<TraceRow> {
        let mut rows = Vec::with_capacity(self.epochs.len() * TraceGroup::ALL.len());
        for e in &self.epochs {
            for g in &e.groups {
                rows.push(TraceRow {
                    epoch: e.epoch,
                    group: g.group,
                    entities: g.entities,
                    samples: g.samples,
                    loss: e.loss,
                    mrr: e.mrr,
                    grad_l1: g.grad_l1,
                    grad_l2: g.grad_l2,
                    grad_l1_cumulative: g.grad_l1_cumulative,
                    grad_l2_cumulative: g.grad_l2_cumulative,
                    sum_grad_l1: g.sum_grad_l1,
                    sum_grad_l2: g.sum_grad_l2,
                    align_cosine_mean: g.align_cosine_mean,
                    align_cosine_std: g.align_cosine_std,
                    align_euclidean_mean: g.align_euclidean_mean,
                    align_euclidean_std: g.align_euclidean_std,
                });
            }
        }
        rows
    }

    pub fn mrr_series(&self) -> Vec<Option<f64>> {
        self.epochs.iter().map(|e| e.mrr).collect()
    }
}

/// 1-based epoch of maximal validation MRR, earliest on ties. Epochs
/// without an MRR are ignored.
pub fn epoch_peak(trace: &TrainingTrace) -> Result<usize> {
    peak_of(&trace.mrr_series())
}

pub fn peak_of(series: &[Option<f64>]) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, m) in series.iter().enumerate() {
        if let Some(m) = *m {
            if best.is_none_or(|(_, b)| m > b) {
                best = Some((i + 1, m));
            }
        }
    }
    best.map(|b| b.0).ok_or(Error::EmptyEvaluation)
}

#[derive(Debug, Clone)]
pub struct MapperRun {
    /// Parameters after the last epoch.
    pub mapper: Mapper,
    /// Parameters at the epoch of peak validation MRR.
    pub best: Option<(usize, Mapper)>,
    pub trace: TrainingTrace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpenWorldResult {
    pub ranking: RankingResult,
    /// Queries dropped because the open entity has no text vector.
    pub skipped: usize,
}

/// Maps each query's open entity and ranks tails with the stage-one scorer.
pub fn predict_open_world<E: Executor>(
    mapper: &Mapper,
    text: &TextEmbeddingSet,
    emb: &EmbeddingTable,
    queries: &[OpenWorldQuery],
    filter: &TailFilter<(EntityId, RelationId)>,
    exec: &E,
) -> Result<OpenWorldResult> {
    check_dims(mapper, text, emb)?;
    let ranked = exec.map(queries, |q| {
        let label = emb.entity_label(q.open_entity);
        let x = text.get(label)?;
        let v = mapper.forward(x);
        Some(RankedQuery {
            head: label.into(),
            relation: q.relation,
            tail: q.true_tail,
            rank: rank_tail(
                emb,
                Head::Vector(&v),
                q.relation,
                q.true_tail,
                filter.known_tails(&(q.open_entity, q.relation)),
            ),
        })
    });
    let total = ranked.len();
    let kept: Vec<RankedQuery> = ranked.into_iter().flatten().collect();
    let skipped = total - kept.len();
    Ok(OpenWorldResult {
        ranking: RankingResult::from_queries(kept, &DEFAULT_HITS)?,
        skipped,
    })
}

/// Ranking of the same queries using the reference graph vector of each open
/// entity as head.
pub fn reference_ranking<E: Executor>(
    emb: &EmbeddingTable,
    queries: &[OpenWorldQuery],
    filter: &TailFilter<(EntityId, RelationId)>,
    exec: &E,
) -> Result<RankingResult> {
    let ranked = exec.map(queries, |q| RankedQuery {
        head: emb.entity_label(q.open_entity).into(),
        relation: q.relation,
        tail: q.true_tail,
        rank: rank_tail(
            emb,
            Head::Entity(q.open_entity),
            q.relation,
            q.true_tail,
            filter.known_tails(&(q.open_entity, q.relation)),
        ),
    });
    RankingResult::from_queries(ranked, &DEFAULT_HITS)
}

fn check_dims(mapper: &Mapper, text: &TextEmbeddingSet, emb: &EmbeddingTable) -> Result<()> {
    if mapper.input_dim() != text.text_dim {
        return Err(Error::DimensionMismatch {
            expected: mapper.input_dim(),
            got: text.text_dim,
        });
    }
    if mapper.output_dim() != emb.dim {
        return Err(Error::DimensionMismatch {
            expected: emb.dim,
            got: mapper.output_dim(),
        });
    }
    Ok(())
}

struct Alignment {
    cos_mean: Option<f64>,
    cos_std: Option<f64>,
    euc_mean: Option<f64>,
    euc_std: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (Option<f64>, Option<f64>) {
    (crate::numeric::mean(xs), crate::numeric::std_dev(xs))
}

fn alignment<E: Executor>(mapper: &Mapper, pairs: &[(&[f64], &[f64])], exec: &E) -> Alignment {
    let d: Vec<(f64, f64)> = exec.map(pairs, |&(x, y)| {
        let o = mapper.forward(x);
        (cosine_distance(&o, y), euclidean(&o, y))
    });
    let cos: Vec<f64> = d.iter().map(|p| p.0).collect();
    let euc: Vec<f64> = d.iter().map(|p| p.1).collect();
    let (cos_mean, cos_std) = mean_std(&cos);
    let (euc_mean, euc_std) = mean_std(&euc);
    Alignment {
        cos_mean,
        cos_std,
        euc_mean,
        euc_std,
    }
}

/// Trains the mapper on every entity with a positive closed-graph degree, a
/// text vector, and no role as an open query entity.
///
/// `degrees` is indexed by the ids of `emb`. Each epoch records per-group
/// gradient contributions and alignment errors, and validation MRR over
/// `queries` when there are any. Training itself is sequential; evaluation
/// runs through `exec`.
pub fn train_mapper<E: Executor>(
    text: &TextEmbeddingSet,
    emb: &EmbeddingTable,
    degrees: &DegreeVector,
    queries: &[OpenWorldQuery],
    filter: &TailFilter<(EntityId, RelationId)>,
    cfg: &MapperConfig,
    exec: &E,
) -> Result<MapperRun> {
    cfg.validate()?;
    if degrees.len() != emb.num_entities() {
        return Err(Error::DimensionMismatch {
            expected: emb.num_entities(),
            got: degrees.len(),
        });
    }
    let thresholds = cfg.thresholds.resolve(degrees)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut mapper = Mapper::new(text.text_dim, &cfg.hidden_dims, emb.dim, cfg.activation, &mut rng);

    let mut open: Vec<EntityId> = queries.iter().map(|q| q.open_entity).collect();
    open.sort_unstable();
    open.dedup();

    // (text, graph vector, group) per training entity
    let mut train: Vec<(&[f64], &[f64], TraceGroup)> = Vec::new();
    let mut schedule: Vec<u32> = Vec::new();
    for i in 0..emb.num_entities() {
        let e = EntityId(i as u32);
        let d = degrees.get(e);
        if d == 0 || open.binary_search(&e).is_ok() {
            continue;
        }
        let Some(x) = text.get(emb.entity_label(e)) else {
            continue;
        };
        if x.len() != text.text_dim {
            return Err(Error::DimensionMismatch {
                expected: text.text_dim,
                got: x.len(),
            });
        }
        let idx = train.len() as u32;
        train.push((x, emb.entity(e), TraceGroup::from_stratum(thresholds.stratum(d))));
        let repeats = match cfg.weighting {
            SampleWeighting::PerTriple => d as usize,
            SampleWeighting::PerEntity => 1,
        };
        schedule.extend(core::iter::repeat_n(idx, repeats));
    }
    if train.is_empty() {
        return Err(Error::InvalidConfig("no entity has both a text vector and a positive degree".into()));
    }
    let held_out: Vec<(&[f64], &[f64])> = open
        .iter()
        .filter_map(|&e| text.get(emb.entity_label(e)).map(|x| (x, emb.entity(e))))
        .collect();
    let mut group_pairs: [Vec<(&[f64], &[f64])>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for &(x, y, g) in &train {
        group_pairs[g as usize].push((x, y));
    }

    let p = mapper.params.len();
    let mut batch_grads = [vec![0.0; p], vec![0.0; p], vec![0.0; p]];
    let mut epoch_grads = [vec![0.0; p], vec![0.0; p], vec![0.0; p]];
    let mut cumulative = [(0.0f64, 0.0f64); 3];
    let mut acts = Vec::new();
    let mut delta = Vec::new();
    let mut next = Vec::new();
    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, f64, Mapper)> = None;

    for epoch in 1..=cfg.epochs {
        schedule.shuffle(&mut rng);
        for g in &mut epoch_grads {
            g.fill(0.0);
        }
        let mut norms = [(0.0f64, 0.0f64); 3];
        let mut counts = [0usize; 3];
        let mut total = (CompensatedSum::new(), CompensatedSum::new());
        let mut loss_sum = CompensatedSum::new();
        for batch in schedule.chunks(cfg.batch_size) {
            for g in &mut batch_grads {
                g.fill(0.0);
            }
            for &i in batch {
                let (x, y, group) = train[i as usize];
                let gi = group as usize;
                mapper.forward_cached(x, &mut acts);
                let out = acts.last().expect("output");
                delta.clear();
                delta.resize(out.len(), 0.0);
                loss_sum.add(cfg.loss.value_and_grad(out, y, &mut delta));
                let (l1, l2sq) = mapper.backward(&acts, &mut delta, &mut next, &mut batch_grads[gi], 1.0);
                let l2 = libm::sqrt(l2sq);
                norms[gi].0 += l1;
                norms[gi].1 += l2;
                counts[gi] += 1;
                total.0.add(l1);
                total.1.add(l2);
            }
            let step = cfg.learning_rate / batch.len() as f64;
            for (gi, bg) in batch_grads.iter().enumerate() {
                for ((w, &g), acc) in mapper.params.iter_mut().zip(bg).zip(epoch_grads[gi].iter_mut()) {
                    *w -= step * g;
                    *acc += g;
                }
            }
        }
        let loss = loss_sum.value() / schedule.len() as f64;
        if !loss.is_finite() || mapper.params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Divergence { epoch });
        }

        let mut groups = Vec::with_capacity(4);
        for gi in 0..3 {
            cumulative[gi].0 += norms[gi].0;
            cumulative[gi].1 += norms[gi].1;
            let a = alignment(&mapper, &group_pairs[gi], exec);
            groups.push(GroupRecord {
                group: TraceGroup::ALL[gi],
                entities: group_pairs[gi].len(),
                samples: counts[gi],
                grad_l1: norms[gi].0,
                grad_l2: norms[gi].1,
                grad_l1_cumulative: cumulative[gi].0,
                grad_l2_cumulative: cumulative[gi].1,
                sum_grad_l1: epoch_grads[gi].iter().map(|g| g.abs()).sum(),
                sum_grad_l2: l2_norm(&epoch_grads[gi]),
                align_cosine_mean: a.cos_mean,
                align_cosine_std: a.cos_std,
                align_euclidean_mean: a.euc_mean,
                align_euclidean_std: a.euc_std,
            });
        }
        let a = alignment(&mapper, &held_out, exec);
        groups.push(GroupRecord {
            group: TraceGroup::HeldOut,
            entities: held_out.len(),
            samples: 0,
            grad_l1: 0.0,
            grad_l2: 0.0,
            grad_l1_cumulative: 0.0,
            grad_l2_cumulative: 0.0,
            sum_grad_l1: 0.0,
            sum_grad_l2: 0.0,
            align_cosine_mean: a.cos_mean,
            align_cosine_std: a.cos_std,
            align_euclidean_mean: a.euc_mean,
            align_euclidean_std: a.euc_std,
        });

        let mrr = if queries.is_empty() {
            None
        } else {
            match predict_open_world(&mapper, text, emb, queries, filter, exec) {
                Ok(r) => Some(r.ranking.mrr),
                Err(Error::EmptyEvaluation) => None,
                Err(e) => return Err(e),
            }
        };
        if let Some(m) = mrr {
            if best.as_ref().is_none_or(|b| m > b.1) {
                best = Some((epoch, m, mapper.clone()));
            }
        }
        epochs.push(EpochRecord {
            epoch,
            loss,
            mrr,
            total_grad_l1: total.0.value(),
            total_grad_l2: total.1.value(),
            groups,
        });
    }
    Ok(MapperRun {
        mapper,
        best: best.map(|(e, _, m)| (e, m)),
        trace: TrainingTrace { thresholds, epochs },
    })
}

/// Label of every trained entity together with its group, for reporting.
pub fn training_groups(
    emb: &EmbeddingTable,
    degrees: &DegreeVector,
    thresholds: &ResolvedThresholds,
) -> Vec<(String, u64, Stratum)> {
    (0..emb.num_entities())
        .map(|i| EntityId(i as u32))
        .filter(|&e| degrees.get(e) > 0)
        .map(|e| {
            let d = degrees.get(e);
            (emb.entity_label(e).into(), d, thresholds.stratum(d))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn peak_rules() {
        assert_eq!(peak_of(&[Some(0.1), Some(0.3), Some(0.2)]), Ok(2));
        assert_eq!(peak_of(&[Some(0.2); 4]), Ok(1));
        assert_eq!(peak_of(&[None, Some(0.1)]), Ok(2));
        assert_eq!(peak_of(&[]), Err(Error::EmptyEvaluation));
    }

    #[test]
    fn linear_mapper_applies_matrix() {
        let m = Matrix {
            rows: 2,
            cols: 3,
            data: vec![1.0, 2.0, 3.0, -1.0, 0.0, 1.0],
        };
        let mapper = Mapper::linear_from(&m, Some(&[0.5, -0.5])).unwrap();
        assert_eq!(mapper.forward(&[1.0, 1.0, 1.0]), vec![6.5, -0.5]);
    }

    #[test]
    fn loss_values() {
        let mut g = [0.0; 2];
        assert_eq!(AlignmentLoss::SquaredEuclidean.value_and_grad(&[1.0, 2.0], &[0.0, 0.0], &mut g), 5.0);
        assert_eq!(g, [2.0, 4.0]);
        let v = AlignmentLoss::NegativeCosine.value_and_grad(&[2.0, 0.0], &[3.0, 0.0], &mut g);
        assert_eq!(v, -1.0);
        assert_eq!(g, [0.0, 0.0]);
    }

    #[test]
    fn per_sample_norms_match_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let m = Mapper::new(3, &[4, 2], 2, Activation::Tanh, &mut rng);
        let x = [0.3, -0.2, 0.9];
        let y = [1.0, -1.0];
        let mut acts = Vec::new();
        m.forward_cached(&x, &mut acts);
        let mut delta = vec![0.0; 2];
        AlignmentLoss::SquaredEuclidean.value_and_grad(acts.last().unwrap(), &y, &mut delta);
        let mut grad = vec![0.0; m.params().len()];
        let (l1, l2sq) = m.backward(&acts, &mut delta, &mut Vec::new(), &mut grad, 1.0);
        let d1: f64 = grad.iter().map(|g| g.abs()).sum();
        let d2: f64 = grad.iter().map(|g| g * g).sum();
        assert!((l1 - d1).abs() < 1e-12 * d1.max(1.0));
        assert!((l2sq - d2).abs() < 1e-12 * d2.max(1.0));
    }
}
