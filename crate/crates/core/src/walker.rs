//! Second-order (p, q)-biased random walks and windowed co-occurrence counts.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;
use crate::structure::PairCounts;

/// Co-occurrence counts `W` over unordered node pairs.
pub type CooccurrenceCounts = PairCounts;

pub type Walk = Vec<NodeId>;

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    pub walks_per_node: usize,
    pub walk_length: usize,
    /// Co-occurrence window radius.
    pub window: usize,
    /// Return parameter; weight `1/p` for stepping back to the previous node.
    pub p: f64,
    /// In-out parameter; weight `1/q` for moving away from the previous node.
    pub q: f64,
    pub seed: u64,
}

impl Default for WalkConfig {
    fn default() -> Self {
        WalkConfig {
            walks_per_node: 10,
            walk_length: 80,
            window: 5,
            p: 1.0,
            q: 1.0,
            seed: 0,
        }
    }
}

impl WalkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.walk_length < 2 {
            return Err(Error::Config("walk.walk_length must be >= 2".into()));
        }
        if self.window < 1 {
            return Err(Error::Config("walk.window must be >= 1".into()));
        }
        if !(self.p > 0.0) || !(self.q > 0.0) {
            return Err(Error::Config("walk.p and walk.q must be > 0".into()));
        }
        Ok(())
    }
}

/// Unnormalized transition weight from state `(prev, cur)` to `next`.
#[inline]
pub fn transition_weight(graph: &Graph, prev: NodeId, next: NodeId, p: f64, q: f64) -> f64 {
    if next == prev {
        1.0 / p
    } else if graph.has_edge(prev, next) {
        1.0
    } else {
        1.0 / q
    }
}

/// Normalized next-node distribution from state `(prev, cur)`, aligned with
/// `graph.neighbors(cur)`. Falls back to uniform if all weights vanish.
pub fn transition_probabilities(graph: &Graph, prev: NodeId, cur: NodeId, p: f64, q: f64) -> Vec<f64> {
    let nb = graph.neighbors(cur);
    let w: Vec<f64> = nb.iter().map(|&x| transition_weight(graph, prev, x, p, q)).collect();
    let total: f64 = w.iter().sum();
    if total > 0.0 && total.is_finite() {
        w.into_iter().map(|x| x / total).collect()
    } else {
        vec![1.0 / nb.len() as f64; nb.len()]
    }
}

/// Draw the next node from state `(prev, cur)`.
pub fn step(graph: &Graph, prev: NodeId, cur: NodeId, p: f64, q: f64, rng: &mut impl Rng) -> NodeId {
    let nb = graph.neighbors(cur);
    if nb.len() == 1 {
        return nb[0];
    }
    let (back, stay, out) = (1.0 / p, 1.0, 1.0 / q);
    // neighbors of cur are classified against the sorted neighbor list of prev
    let mut total = 0.0;
    for &x in nb {
        total += if x == prev {
            back
        } else if graph.has_edge(prev, x) {
            stay
        } else {
            out
        };
    }
    if !(total > 0.0 && total.is_finite()) {
        return *nb.choose(rng).unwrap();
    }
    let mut target = rng.gen::<f64>() * total;
    for &x in nb {
        let w = if x == prev {
            back
        } else if graph.has_edge(prev, x) {
            stay
        } else {
            out
        };
        if target < w {
            return x;
        }
        target -= w;
    }
    *nb.last().unwrap()
}

fn walk_from(graph: &Graph, start: NodeId, cfg: &WalkConfig, rng: &mut impl Rng) -> Walk {
    let mut walk = Vec::with_capacity(cfg.walk_length);
    walk.push(start);
    if graph.degree(start) == 0 {
        return walk;
    }
    walk.push(*graph.neighbors(start).choose(rng).unwrap());
    while walk.len() < cfg.walk_length {
        let (prev, cur) = (walk[walk.len() - 2], walk[walk.len() - 1]);
        walk.push(step(graph, prev, cur, cfg.p, cfg.q, rng));
    }
    walk
}

/// `walks_per_node` rounds; each round visits every node once as a start, in
/// a freshly shuffled order. Each walk has its own generator derived from
/// `(seed, start, round)`, so the output does not depend on thread count.
pub fn generate_walks(graph: &Graph, cfg: &WalkConfig) -> Vec<Walk> {
    let n = graph.num_nodes();
    let mut walks = Vec::with_capacity(n * cfg.walks_per_node);
    for round in 0..cfg.walks_per_node {
        let mut order: Vec<NodeId> = (0..n).collect();
        order.shuffle(&mut rng::seeded(cfg.seed, &[0, round as u64]));
        let batch: Vec<Walk> = order
            .par_iter()
            .map(|&s| {
                let mut r = rng::seeded(cfg.seed, &[1, s as u64, round as u64]);
                walk_from(graph, s, cfg, &mut r)
            })
            .collect();
        walks.extend(batch);
    }
    walks
}

fn count_into(walks: &[Walk], window: usize, acc: &mut HashMap<(NodeId, NodeId), u64>) {
    for walk in walks {
        for (k, &a) in walk.iter().enumerate() {
            for &b in walk.iter().skip(k + 1).take(window) {
                if a != b {
                    *acc.entry((a.min(b), a.max(b))).or_insert(0) += 1;
                }
            }
        }
    }
}

/// For every walk position `k` and offset `1..=window`, count the unordered
/// pair `(walk[k], walk[k+o])` once, skipping identical nodes.
pub fn count_cooccurrences(walks: &[Walk], window: usize) -> CooccurrenceCounts {
    let chunk = (walks.len() / (4 * rayon::current_num_threads())).max(64);
    let acc = walks
        .par_chunks(chunk)
        .map(|part| {
            let mut acc = HashMap::new();
            count_into(part, window, &mut acc);
            acc
        })
        .reduce(HashMap::new, |a, b| {
            let (mut big, small) = if a.len() >= b.len() { (a, b) } else { (b, a) };
            for (k, v) in small {
                *big.entry(k).or_insert(0) += v;
            }
            big
        });
    PairCounts::from_map(acc)
}

/// One walk per line, space-separated external node labels.
pub fn dump_walks(walks: &[Walk], graph: &Graph, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for walk in walks {
        let line: Vec<&str> = walk.iter().map(|&v| graph.label(v)).collect();
        writeln!(out, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
