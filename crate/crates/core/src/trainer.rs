//! Weighted negative-sampling objective and its SGD trainer.
//!
//! Every stored pair `(i, j)` with combined weight `α·t + β·h + w > 0` is a
//! positive sample; negatives are drawn from a degree^{3/4} noise
//! distribution. One table of node vectors is shared by both roles.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;
use crate::structure::PairWeightTable;

/// Norm above which training is declared divergent.
pub const DIVERGENCE_NORM: f64 = 1e3;
/// Attempts to draw a negative distinct from both endpoints before skipping it.
pub const NEGATIVE_RETRIES: usize = 10;

/// Dense `n × d` matrix of node vectors, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    n: usize,
    d: usize,
    data: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(n: usize, d: usize) -> Self {
        EmbeddingMatrix {
            n,
            d,
            data: vec![0.0; n * d],
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        let d = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == d), "ragged rows");
        EmbeddingMatrix {
            n: rows.len(),
            d,
            data: rows.concat(),
        }
    }

    /// Entries uniform in `(−0.5/d, 0.5/d)`.
    pub fn random(n: usize, d: usize, seed: u64) -> Self {
        let mut r = rng::seeded(seed, &[0x1417]);
        let half = 0.5 / d as f64;
        EmbeddingMatrix {
            n,
            d,
            data: (0..n * d).map(|_| r.gen_range(-half..half)).collect(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn row(&self, i: NodeId) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    #[inline]
    pub fn row_mut(&mut self, i: NodeId) -> &mut [f64] {
        &mut self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn dot(&self, i: NodeId, j: NodeId) -> f64 {
        dot(self.row(i), self.row(j))
    }

    pub fn norm(&self, i: NodeId) -> f64 {
        self.dot(i, i).sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// First row whose norm exceeds `limit` (or is not finite).
    fn find_divergent(&self, limit: f64) -> Option<(NodeId, f64)> {
        (0..self.n)
            .map(|i| (i, self.norm(i)))
            .find(|&(_, norm)| !(norm <= limit))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln σ(x)`, stable for large |x|.
#[inline]
fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `σ(clamp(⟨u_i, u_j⟩, ±clip))`.
pub fn pair_similarity(u: &EmbeddingMatrix, i: NodeId, j: NodeId, clip: f64) -> f64 {
    sigmoid(u.dot(i, j).clamp(-clip, clip))
}

/// How positive pairs are presented to SGD.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PositiveMode {
    /// One pass over every pair per epoch; the combined weight scales the
    /// positive gradient. Large raw counts need `max_weight` or a small
    /// learning rate to stay stable.
    Weighted,
    /// Draw pairs with probability proportional to their combined weight,
    /// each with unit weight.
    Sampled,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    /// Weight of shared triads.
    pub alpha: f64,
    /// Weight of shared communities.
    pub beta: f64,
    pub epochs: usize,
    pub negatives: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub sigmoid_clip: f64,
    pub mode: PositiveMode,
    /// Draws per epoch in [`PositiveMode::Sampled`]; `None` draws as many
    /// samples as the rounded total weight.
    pub samples_per_epoch: Option<usize>,
    /// Cap on the combined weight of a single pair.
    pub max_weight: Option<f64>,
    /// Lock-free parallel updates. Results are then reproducible only in
    /// distribution.
    pub parallel: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dim: 128,
            alpha: 1.0,
            beta: 1.0,
            epochs: 5,
            negatives: 5,
            lr_init: 0.025,
            lr_final: 0.0001,
            sigmoid_clip: 6.0,
            mode: PositiveMode::Sampled,
            samples_per_epoch: None,
            max_weight: None,
            parallel: false,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dim == 0 {
            return bad("train.dim must be >= 1");
        }
        if !(self.alpha >= 0.0) || !(self.beta >= 0.0) {
            return bad("train.alpha and train.beta must be >= 0");
        }
        if !(self.lr_final > 0.0 && self.lr_init >= self.lr_final) {
            return bad("need train.lr_init >= train.lr_final > 0");
        }
        if self.negatives == 0 {
            return bad("train.negatives must be >= 1");
        }
        if !(self.sigmoid_clip > 0.0) {
            return bad("train.sigmoid_clip must be > 0");
        }
        if matches!(self.max_weight, Some(w) if !(w > 0.0)) {
            return bad("train.max_weight must be > 0");
        }
        Ok(())
    }

    pub fn pair_weight(&self, t: u64, h: u64, w: u64) -> f64 {
        let x = self.alpha * t as f64 + self.beta * h as f64 + w as f64;
        match self.max_weight {
            Some(cap) => x.min(cap),
            None => x,
        }
    }
}

/// Negative-sampling distribution with mass ∝ degree^{3/4}; zero-degree nodes
/// are never drawn.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    nodes: Vec<NodeId>,
    cdf: Vec<f64>,
    probs: Vec<f64>,
}

pub fn build_noise_sampler(graph: &Graph) -> NoiseSampler {
    let mut probs = vec![0.0; graph.num_nodes()];
    let mut nodes = Vec::new();
    let mut masses = Vec::new();
    for v in 0..graph.num_nodes() {
        let d = graph.degree(v);
        if d > 0 {
            nodes.push(v);
            masses.push((d as f64).powf(0.75));
        }
    }
    let total: f64 = masses.iter().sum();
    let mut acc = 0.0;
    let cdf = masses
        .iter()
        .zip(&nodes)
        .map(|(m, &v)| {
            probs[v] = m / total;
            acc += m / total;
            acc
        })
        .collect();
    NoiseSampler { nodes, cdf, probs }
}

impl NoiseSampler {
    pub fn sample(&self, rng: &mut impl Rng) -> NodeId {
        let u: f64 = rng.gen();
        let k = self.cdf.partition_point(|&c| c <= u);
        self.nodes[k.min(self.nodes.len() - 1)]
    }

    pub fn probability(&self, v: NodeId) -> f64 {
        self.probs[v]
    }

    pub fn support_size(&self) -> usize {
        self.nodes.len()
    }
}

/// Positive pair with its combined weight. `i` is the side that is paired
/// with the negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveSample {
    pub i: NodeId,
    pub j: NodeId,
    pub weight: f64,
}

/// Pairs of a [`PairWeightTable`] with positive combined weight.
#[derive(Debug, Clone)]
pub struct PositiveStream {
    pairs: Vec<(NodeId, NodeId, f64)>,
    /// Cumulative weights, for [`PositiveMode::Sampled`].
    cumulative: Vec<f64>,
    mode: PositiveMode,
    draws: usize,
    seed: u64,
}

pub fn positive_sample_stream(pairs: &PairWeightTable, cfg: &TrainConfig) -> Result<PositiveStream> {
    let pairs: Vec<_> = pairs
        .iter()
        .map(|(i, j, pw)| (i, j, cfg.pair_weight(pw.t, pw.h, pw.w)))
        .filter(|&(_, _, w)| w > 0.0)
        .collect();
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut acc = 0.0;
    let cumulative: Vec<f64> = pairs
        .iter()
        .map(|p| {
            acc += p.2;
            acc
        })
        .collect();
    let draws = match cfg.mode {
        PositiveMode::Weighted => pairs.len(),
        PositiveMode::Sampled => cfg.samples_per_epoch.unwrap_or(acc.round().max(1.0) as usize),
    };
    Ok(PositiveStream {
        pairs,
        cumulative,
        mode: cfg.mode,
        draws,
        seed: cfg.seed,
    })
}

impl PositiveStream {
    /// Distinct pairs with positive weight.
    pub fn support_size(&self) -> usize {
        self.pairs.len()
    }

    /// Samples yielded per epoch.
    pub fn samples_per_epoch(&self) -> usize {
        self.draws
    }

    pub fn total_weight(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// The samples of one epoch. Weighted mode visits every pair once in a
    /// seeded shuffle; sampled mode draws pairs ∝ weight. The orientation of
    /// each sample is a fair coin.
    pub fn epoch(&self, epoch: usize) -> Vec<PositiveSample> {
        let mut r = rng::seeded(self.seed, &[0x9051, epoch as u64]);
        match self.mode {
            PositiveMode::Weighted => {
                let mut order: Vec<usize> = (0..self.pairs.len()).collect();
                order.shuffle(&mut r);
                order
                    .into_iter()
                    .map(|k| self.oriented(k, self.pairs[k].2, &mut r))
                    .collect()
            }
            PositiveMode::Sampled => {
                let total = self.total_weight();
                (0..self.draws)
                    .map(|_| {
                        let u = r.gen::<f64>() * total;
                        let k = self.cumulative.partition_point(|&c| c <= u).min(self.pairs.len() - 1);
                        self.oriented(k, 1.0, &mut r)
                    })
                    .collect()
            }
        }
    }

    fn oriented(&self, k: usize, weight: f64, r: &mut impl Rng) -> PositiveSample {
        let (a, b, _) = self.pairs[k];
        let (i, j) = if r.gen::<bool>() { (a, b) } else { (b, a) };
        PositiveSample { i, j, weight }
    }
}

/// Scratch rows for one SGD step.
struct StepBuffers {
    d: usize,
    ui: Vec<f64>,
    uj: Vec<f64>,
    uk: Vec<f64>,
    di: Vec<f64>,
    dj: Vec<f64>,
    dk: Vec<f64>,
}

impl StepBuffers {
    fn new(d: usize, k: usize) -> Self {
        StepBuffers {
            d,
            ui: vec![0.0; d],
            uj: vec![0.0; d],
            uk: vec![0.0; d * k],
            di: vec![0.0; d],
            dj: vec![0.0; d],
            dk: vec![0.0; d * k],
        }
    }

    /// Fill the deltas from the loaded pre-update rows.
    fn compute(&mut self, weight: f64, k: usize, lr: f64, clip: f64) {
        let d = self.d;
        let pos = lr * weight * sigmoid(-dot(&self.ui, &self.uj).clamp(-clip, clip));
        for x in 0..d {
            self.di[x] = pos * self.uj[x];
            self.dj[x] = pos * self.ui[x];
        }
        for n in 0..k {
            let uk = &self.uk[n * d..(n + 1) * d];
            let g = lr * sigmoid(dot(&self.ui, uk).clamp(-clip, clip));
            let dk = &mut self.dk[n * d..(n + 1) * d];
            for x in 0..d {
                self.di[x] -= g * uk[x];
                dk[x] = -g * self.ui[x];
            }
        }
    }
}

/// One descent step on
/// `−weight·ln σ(⟨u_i,u_j⟩) − Σ_k ln σ(−⟨u_i,u_k⟩)`, all gradients taken at
/// the pre-update vectors.
pub fn sgd_step(
    u: &mut EmbeddingMatrix,
    i: NodeId,
    j: NodeId,
    weight: f64,
    negatives: &[NodeId],
    lr: f64,
    clip: f64,
) {
    let mut buf = StepBuffers::new(u.dim(), negatives.len());
    step_dense(u, &mut buf, i, j, weight, negatives, lr, clip);
}

#[allow(clippy::too_many_arguments)]
fn step_dense(
    u: &mut EmbeddingMatrix,
    buf: &mut StepBuffers,
    i: NodeId,
    j: NodeId,
    weight: f64,
    negatives: &[NodeId],
    lr: f64,
    clip: f64,
) {
    let d = u.dim();
    buf.ui.copy_from_slice(u.row(i));
    buf.uj.copy_from_slice(u.row(j));
    for (n, &k) in negatives.iter().enumerate() {
        buf.uk[n * d..(n + 1) * d].copy_from_slice(u.row(k));
    }
    buf.compute(weight, negatives.len(), lr, clip);
    add(u.row_mut(i), &buf.di);
    add(u.row_mut(j), &buf.dj);
    for (n, &k) in negatives.iter().enumerate() {
        add(u.row_mut(k), &buf.dk[n * d..(n + 1) * d]);
    }
}

#[inline]
fn add(row: &mut [f64], delta: &[f64]) {
    row.iter_mut().zip(delta).for_each(|(a, b)| *a += b);
}

/// A positive sample with its negatives, for evaluating the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenSample {
    pub i: NodeId,
    pub j: NodeId,
    pub weight: f64,
    pub negatives: Vec<NodeId>,
}

/// Sampled objective `Σ [−w·ln σ(⟨u_i,u_j⟩) − Σ_k ln σ(−⟨u_i,u_k⟩)]` with the
/// same argument clamp as training.
pub fn objective(u: &EmbeddingMatrix, samples: &[FrozenSample], clip: f64) -> f64 {
    samples
        .iter()
        .map(|s| {
            let pos = -s.weight * log_sigmoid(u.dot(s.i, s.j).clamp(-clip, clip));
            let neg: f64 = s
                .negatives
                .iter()
                .map(|&k| -log_sigmoid(-u.dot(s.i, k).clamp(-clip, clip)))
                .sum();
            pos + neg
        })
        .sum()
}

/// Draw up to `count` negatives distinct from `i` and `j`.
pub fn draw_negatives(
    noise: &NoiseSampler,
    i: NodeId,
    j: NodeId,
    count: usize,
    r: &mut impl Rng,
    out: &mut Vec<NodeId>,
) {
    out.clear();
    for _ in 0..count {
        for _ in 0..NEGATIVE_RETRIES {
            let k = noise.sample(r);
            if k != i && k != j {
                out.push(k);
                break;
            }
        }
    }
}

/// Per-epoch summary passed to the progress callback.
#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub samples: usize,
    pub lr: f64,
    pub max_norm: f64,
}

pub fn train(graph: &Graph, pairs: &PairWeightTable, cfg: &TrainConfig) -> Result<EmbeddingMatrix> {
    train_with(graph, pairs, cfg, |_, _| {})
}

/// [`train`] with a callback invoked after every epoch.
pub fn train_with(
    graph: &Graph,
    pairs: &PairWeightTable,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EmbeddingMatrix, EpochStats),
) -> Result<EmbeddingMatrix> {
    cfg.validate()?;
    let stream = positive_sample_stream(pairs, cfg)?;
    let noise = build_noise_sampler(graph);
    let n = graph.num_nodes();
    let mut u = EmbeddingMatrix::random(n, cfg.dim, cfg.seed);
    let total_steps = (cfg.epochs * stream.samples_per_epoch()).max(1) as f64;
    let lr_at = |step: usize| cfg.lr_init - (cfg.lr_init - cfg.lr_final) * (step as f64 / total_steps);

    for epoch in 0..cfg.epochs {
        let samples = stream.epoch(epoch);
        let offset = epoch * stream.samples_per_epoch();
        if cfg.parallel {
            train_epoch_hogwild(&mut u, &samples, &noise, cfg, epoch, offset, &lr_at);
        } else {
            let mut r = rng::seeded(cfg.seed, &[0x0e9, epoch as u64]);
            let mut buf = StepBuffers::new(cfg.dim, cfg.negatives);
            let mut negs = Vec::with_capacity(cfg.negatives);
            for (s, sample) in samples.iter().enumerate() {
                draw_negatives(&noise, sample.i, sample.j, cfg.negatives, &mut r, &mut negs);
                let lr = lr_at(offset + s);
                step_dense(&mut u, &mut buf, sample.i, sample.j, sample.weight, &negs, lr, cfg.sigmoid_clip);
            }
        }
        if let Some((node, norm)) = u.find_divergent(DIVERGENCE_NORM) {
            return Err(Error::DivergenceDetected {
                node,
                norm,
                limit: DIVERGENCE_NORM,
            });
        }
        let max_norm = (0..n).map(|i| u.norm(i)).fold(0.0, f64::max);
        on_epoch(
            &u,
            EpochStats {
                epoch,
                samples: samples.len(),
                lr: lr_at(offset + samples.len()),
                max_norm,
            },
        );
    }
    Ok(u)
}

/// Lock-free epoch: shards of the sample list run concurrently and update
/// rows with relaxed atomic loads/stores, so concurrent writers may
/// overwrite each other's deltas.
fn train_epoch_hogwild(
    u: &mut EmbeddingMatrix,
    samples: &[PositiveSample],
    noise: &NoiseSampler,
    cfg: &TrainConfig,
    epoch: usize,
    offset: usize,
    lr_at: &(dyn Fn(usize) -> f64 + Sync),
) {
    let d = cfg.dim;
    let shared: Vec<AtomicU64> = u.data.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
    let load = |i: NodeId, out: &mut [f64]| {
        for (o, a) in out.iter_mut().zip(&shared[i * d..(i + 1) * d]) {
            *o = f64::from_bits(a.load(Ordering::Relaxed));
        }
    };
    let store_add = |i: NodeId, delta: &[f64]| {
        for (a, x) in shared[i * d..(i + 1) * d].iter().zip(delta) {
            let v = f64::from_bits(a.load(Ordering::Relaxed)) + x;
            a.store(v.to_bits(), Ordering::Relaxed);
        }
    };
    let shard = (samples.len() / (4 * rayon::current_num_threads())).max(1024);
    samples.par_chunks(shard).enumerate().for_each(|(c, chunk)| {
        let mut r = rng::seeded(cfg.seed, &[0x0e9, epoch as u64, c as u64]);
        let mut buf = StepBuffers::new(d, cfg.negatives);
        let mut negs = Vec::with_capacity(cfg.negatives);
        for (s, sample) in chunk.iter().enumerate() {
            draw_negatives(noise, sample.i, sample.j, cfg.negatives, &mut r, &mut negs);
            load(sample.i, &mut buf.ui);
            load(sample.j, &mut buf.uj);
            for (n, &k) in negs.iter().enumerate() {
                load(k, &mut buf.uk[n * d..(n + 1) * d]);
            }
            let lr = lr_at(offset + c * shard + s);
            buf.compute(sample.weight, negs.len(), lr, cfg.sigmoid_clip);
            store_add(sample.i, &buf.di);
            store_add(sample.j, &buf.dj);
            for (n, &k) in negs.iter().enumerate() {
                store_add(k, &buf.dk[n * d..(n + 1) * d]);
            }
        }
    });
    for (x, a) in u.data.iter_mut().zip(shared) {
        *x = f64::from_bits(a.into_inner());
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structure::{merge_pair_weights, PairCounts};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn similarity_examples() {
        let u = EmbeddingMatrix::from_rows(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(pair_similarity(&u, 0, 1, 6.0), 0.5);
        let u = EmbeddingMatrix::from_rows(vec![vec![6.0], vec![1.0], vec![100.0]]);
        assert!((pair_similarity(&u, 0, 1, 6.0) - 0.997_527_376).abs() < 1e-9);
        assert_eq!(pair_similarity(&u, 2, 1, 6.0), pair_similarity(&u, 0, 1, 6.0));
    }

    #[test]
    fn similarity_is_monotone_and_saturates() {
        let mut prev = 0.0;
        for k in -100..=100 {
            let x = k as f64 * 0.1;
            let u = EmbeddingMatrix::from_rows(vec![vec![x], vec![1.0]]);
            let s = pair_similarity(&u, 0, 1, 6.0);
            assert!(s >= prev);
            if x.abs() >= 6.0 {
                assert_eq!(s, sigmoid(6.0f64.copysign(x)));
            }
            prev = s;
        }
    }

    #[test]
    fn noise_examples() {
        // star-free graph with degrees 1 and 16: node 0 – hub 1 plus 15 more leaves
        let mut edges: Vec<(usize, usize)> = vec![(0, 1)];
        edges.extend((2..17).map(|v| (1, v)));
        let g = Graph::from_edges(17, &edges);
        let noise = build_noise_sampler(&g);
        let total = 16.0 * 1.0 + 8.0;
        assert!((noise.probability(1) - 8.0 / total).abs() < 1e-15);
        assert!((noise.probability(0) - 1.0 / total).abs() < 1e-15);

        let ring = Graph::from_edges(6, &(0..6).map(|v| (v, (v + 1) % 6)).collect::<Vec<_>>());
        let noise = build_noise_sampler(&ring);
        for v in 0..6 {
            assert!((noise.probability(v) - 1.0 / 6.0).abs() < 1e-15);
        }

        let with_isolated = Graph::from_edges(3, &[(0, 1)]);
        let noise = build_noise_sampler(&with_isolated);
        assert_eq!(noise.probability(2), 0.0);
        assert_eq!(noise.support_size(), 2);
        let mut r = ChaCha8Rng::seed_from_u64(0);
        assert!((0..1000).all(|_| noise.sample(&mut r) != 2));
    }

    fn table(entries: &[(usize, usize, u64, u64, u64)]) -> PairWeightTable {
        let t = PairCounts::from_triples(entries.iter().map(|e| (e.0, e.1, e.2)));
        let h = PairCounts::from_triples(entries.iter().map(|e| (e.0, e.1, e.3)));
        let w = PairCounts::from_triples(entries.iter().map(|e| (e.0, e.1, e.4)));
        merge_pair_weights(&t, &h, &w)
    }

    #[test]
    fn stream_weights() {
        let tab = table(&[(0, 1, 3, 2, 0), (1, 2, 1, 2, 4)]);
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        let s = positive_sample_stream(&tab, &cfg).unwrap();
        assert_eq!(s.support_size(), 1);
        assert_eq!(s.total_weight(), 4.0);

        let cfg = TrainConfig::default();
        let s = positive_sample_stream(&tab, &cfg).unwrap();
        let weights: Vec<f64> = s.pairs.iter().map(|p| p.2).collect();
        assert_eq!(weights, vec![5.0, 7.0]);

        let capped = TrainConfig {
            max_weight: Some(6.0),
            ..Default::default()
        };
        assert_eq!(capped.pair_weight(1, 2, 4), 6.0);

        let only_t = table(&[(0, 1, 3, 0, 0)]);
        let cfg = TrainConfig {
            alpha: 0.0,
            beta: 0.0,
            ..Default::default()
        };
        assert!(matches!(positive_sample_stream(&only_t, &cfg), Err(Error::EmptyTrainingSet)));
    }

    #[test]
    fn epochs_are_seeded_permutations() {
        let tab = table(&(0..50).map(|i| (i, i + 1, 0, 0, 1 + i as u64 % 3)).collect::<Vec<_>>());
        let cfg = TrainConfig {
            mode: PositiveMode::Weighted,
            ..Default::default()
        };
        let s = positive_sample_stream(&tab, &cfg).unwrap();
        let (a, b) = (s.epoch(0), s.epoch(1));
        assert_eq!(a, s.epoch(0));
        assert_ne!(a, b);
        let mut keys: Vec<_> = a.iter().map(|p| (p.i.min(p.j), p.i.max(p.j))).collect();
        keys.sort();
        assert_eq!(keys, (0..50).map(|i| (i, i + 1)).collect::<Vec<_>>());

        let sampled = TrainConfig {
            mode: PositiveMode::Sampled,
            ..Default::default()
        };
        let s = positive_sample_stream(&tab, &sampled).unwrap();
        assert_eq!(s.samples_per_epoch(), s.total_weight() as usize);
        assert!(s.epoch(0).iter().all(|p| p.weight == 1.0));
    }

    #[test]
    fn step_examples() {
        let mut u = EmbeddingMatrix::zeros(3, 4);
        sgd_step(&mut u, 0, 1, 1.0, &[], 0.1, 6.0);
        assert!(u.as_slice().iter().all(|&x| x == 0.0));

        let mut u = EmbeddingMatrix::from_rows(vec![vec![10.0, 0.0], vec![10.0, 0.0]]);
        let before = u.clone();
        sgd_step(&mut u, 0, 1, 1.0, &[], 0.01, 6.0);
        let moved: f64 = u.row(0).iter().zip(before.row(0)).map(|(a, b)| (a - b).abs()).sum();
        assert!((moved - 0.01 * sigmoid(-6.0) * 10.0).abs() < 1e-12);
    }

    #[test]
    fn step_uses_pre_update_values() {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..4).map(|_| (0..3).map(|_| r.gen_range(-0.5..0.5)).collect()).collect();
        let u0 = EmbeddingMatrix::from_rows(rows);
        let mut u = u0.clone();
        let (lr, w) = (0.05, 2.0);
        sgd_step(&mut u, 0, 1, w, &[2, 3], lr, 6.0);
        let g = w * sigmoid(-u0.dot(0, 1));
        let g2 = sigmoid(u0.dot(0, 2));
        let g3 = sigmoid(u0.dot(0, 3));
        for x in 0..3 {
            let ui = u0.row(0)[x] + lr * (g * u0.row(1)[x] - g2 * u0.row(2)[x] - g3 * u0.row(3)[x]);
            assert!((u.row(0)[x] - ui).abs() < 1e-15);
            assert!((u.row(1)[x] - (u0.row(1)[x] + lr * g * u0.row(0)[x])).abs() < 1e-15);
            assert!((u.row(2)[x] - (u0.row(2)[x] - lr * g2 * u0.row(0)[x])).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        for bad in [
            TrainConfig { dim: 0, ..Default::default() },
            TrainConfig { alpha: -1.0, ..Default::default() },
            TrainConfig { lr_init: 0.0001, lr_final: 0.1, ..Default::default() },
            TrainConfig { negatives: 0, ..Default::default() },
            TrainConfig { max_weight: Some(0.0), ..Default::default() },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn divergence_is_reported() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
        let tab = table(&[(0, 1, 0, 0, 1_000_000), (2, 3, 0, 0, 1_000_000)]);
        let cfg = TrainConfig {
            dim: 4,
            lr_init: 1.0,
            lr_final: 0.9,
            epochs: 50,
            negatives: 1,
            sigmoid_clip: 1e9,
            mode: PositiveMode::Weighted,
            ..Default::default()
        };
        let err = train(&g, &tab, &cfg).unwrap_err();
        assert!(matches!(err, Error::DivergenceDetected { .. }), "{err}");
    }
}
