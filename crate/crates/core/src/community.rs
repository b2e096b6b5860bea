//! Overlapping community detection.
//!
//! The built-in detector fits a non-negative affiliation factor matrix `F`
//! under the model `P(edge i–j) = 1 − exp(−⟨F_i, F_j⟩)` by per-row projected
//! gradient ascent on the graph log-likelihood, then thresholds `F` into
//! binary memberships. Communities can also be imported from a file or taken
//! from connected components.

use std::collections::VecDeque;
use std::path::PathBuf;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::rng;
use crate::structure::Affiliations;

/// Smallest inner product used on an edge term; smaller values are clamped.
pub const DOT_FLOOR: f64 = 1e-10;
/// Upper bound on any factor entry.
pub const MAX_FACTOR: f64 = 1e3;

/// Dense `n × m` non-negative matrix of node-community affiliation strengths.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl FactorMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        FactorMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == cols));
        assert!(rows.iter().flatten().all(|x| x.is_finite() && *x >= 0.0));
        FactorMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.rows
    }

    pub fn num_communities(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, v: NodeId) -> &[f64] {
        &self.data[v * self.cols..(v + 1) * self.cols]
    }

    fn row_mut(&mut self, v: NodeId) -> &mut [f64] {
        &mut self.data[v * self.cols..(v + 1) * self.cols]
    }

    /// Column sums `Σ_v F_v`.
    pub fn column_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols];
        for v in 0..self.rows {
            add_assign(&mut s, self.row(v));
        }
        s
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn add_assign(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

/// `1 − exp(−⟨F_i, F_j⟩)`.
pub fn edge_probability(f: &FactorMatrix, i: NodeId, j: NodeId) -> f64 {
    -(-dot(f.row(i), f.row(j))).exp_m1()
}

/// Log-likelihood value and the number of edges whose inner product fell
/// below [`DOT_FLOOR`] and was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLikelihood {
    pub value: f64,
    pub clamped_edges: usize,
}

#[inline]
fn edge_term(d: f64) -> f64 {
    (-(-d.max(DOT_FLOOR)).exp_m1()).ln()
}

/// `Σ_edges log(1 − exp(−⟨F_i,F_j⟩)) − Σ_non-edges ⟨F_i,F_j⟩` over unordered
/// pairs. The non-edge sum is obtained from column sums:
/// `½(‖Σ_v F_v‖² − Σ_v ‖F_v‖²) − Σ_edges ⟨F_i,F_j⟩`.
pub fn log_likelihood(graph: &Graph, f: &FactorMatrix) -> LogLikelihood {
    assert_eq!(graph.num_nodes(), f.num_nodes());
    let mut edge_sum = 0.0;
    let mut edge_dots = 0.0;
    let mut clamped_edges = 0;
    for (a, b) in graph.edges() {
        let d = dot(f.row(a), f.row(b));
        if d < DOT_FLOOR {
            clamped_edges += 1;
        }
        edge_sum += edge_term(d);
        edge_dots += d;
    }
    let s = f.column_sums();
    let self_sq: f64 = (0..f.num_nodes()).map(|v| dot(f.row(v), f.row(v))).sum();
    let all_pairs = 0.5 * (dot(&s, &s) - self_sq);
    if clamped_edges > 0 {
        log::debug!("{clamped_edges} edge terms clamped at inner product {DOT_FLOOR}");
    }
    LogLikelihood {
        value: edge_sum - (all_pairs - edge_dots),
        clamped_edges,
    }
}

/// Row-local view: everything about `L` that depends on `F_v`.
struct RowContext<'a> {
    neighbors: Vec<&'a [f64]>,
    /// Σ of rows of non-neighbors of `v`, excluding `v` itself.
    outside: Vec<f64>,
}

impl<'a> RowContext<'a> {
    fn new(graph: &Graph, f: &'a FactorMatrix, col_sums: &[f64], v: NodeId) -> Self {
        let neighbors: Vec<&[f64]> = graph.neighbors(v).iter().map(|&u| f.row(u)).collect();
        let mut outside = col_sums.to_vec();
        outside.iter_mut().zip(f.row(v)).for_each(|(o, x)| *o -= x);
        for nb in &neighbors {
            outside.iter_mut().zip(nb.iter()).for_each(|(o, x)| *o -= x);
        }
        // rounding can leave tiny negatives
        outside.iter_mut().for_each(|o| *o = o.max(0.0));
        RowContext { neighbors, outside }
    }

    fn value(&self, x: &[f64]) -> f64 {
        let edges: f64 = self.neighbors.iter().map(|nb| edge_term(dot(x, nb))).sum();
        edges - dot(x, &self.outside)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g: Vec<f64> = self.outside.iter().map(|o| -o).collect();
        for nb in &self.neighbors {
            let d = dot(x, nb).max(DOT_FLOOR);
            // e^{-d} / (1 - e^{-d})
            let coef = 1.0 / d.exp_m1();
            g.iter_mut().zip(nb.iter()).for_each(|(gi, y)| *gi += coef * y);
        }
        g
    }
}

/// `∂L/∂F_v`.
pub fn row_gradient(graph: &Graph, f: &FactorMatrix, v: NodeId) -> Vec<f64> {
    let sums = f.column_sums();
    RowContext::new(graph, f, &sums, v).gradient(f.row(v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigClamConfig {
    /// Community count.
    pub m: usize,
    /// Maximum number of full sweeps over all rows.
    pub max_iters: usize,
    pub step_init: f64,
    /// Multiplicative step shrink in `(0, 1)`.
    pub step_backtrack: f64,
    pub max_backtracks: usize,
    /// Stop when a sweep improves `L` by less than `tol·|L|`.
    pub tol: f64,
    /// Membership cutoff on `F`; `None` uses `√(−ln(1 − 1/n))`.
    pub threshold: Option<f64>,
    pub seed: u64,
    /// Propose row updates of a block concurrently. Proposals are re-checked
    /// against the current state before being applied, so the result is still
    /// independent of the thread count, but differs from sequential mode.
    pub parallel: bool,
}

impl Default for BigClamConfig {
    fn default() -> Self {
        BigClamConfig {
            m: 1,
            max_iters: 500,
            step_init: 1.0,
            step_backtrack: 0.5,
            max_backtracks: 20,
            tol: 1e-4,
            threshold: None,
            seed: 0,
            parallel: false,
        }
    }
}

impl BigClamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config("bigclam.m must be >= 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config("bigclam.tol must be > 0".into()));
        }
        if !(self.step_backtrack > 0.0 && self.step_backtrack < 1.0) {
            return Err(Error::Config("bigclam.step_backtrack must be in (0, 1)".into()));
        }
        if !(self.step_init > 0.0) {
            return Err(Error::Config("bigclam.step_init must be > 0".into()));
        }
        Ok(())
    }
}

/// Default membership cutoff for a graph with `n` nodes.
pub fn default_threshold(n: usize) -> f64 {
    (-(1.0 - 1.0 / n as f64).ln()).sqrt()
}

#[derive(Debug, Clone)]
pub struct BigClamFit {
    pub factors: FactorMatrix,
    pub affiliations: Affiliations,
    /// `L(F)` at initialization and after every sweep.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Communities dropped because no node passed the threshold.
    pub dropped: usize,
    pub threshold: f64,
}

const ARMIJO: f64 = 0.05;

/// Projected backtracking ascent on one row. Returns the accepted new row.
fn improve_row(ctx: &RowContext<'_>, x: &[f64], cfg: &BigClamConfig) -> Option<Vec<f64>> {
    let base = ctx.value(x);
    let g = ctx.gradient(x);
    let mut step = cfg.step_init;
    for _ in 0..cfg.max_backtracks {
        let cand: Vec<f64> = x
            .iter()
            .zip(&g)
            .map(|(xi, gi)| (xi + step * gi).clamp(0.0, MAX_FACTOR))
            .collect();
        let dir: f64 = g.iter().zip(cand.iter().zip(x)).map(|(gi, (c, xi))| gi * (c - xi)).sum();
        let val = ctx.value(&cand);
        let gain = val - base;
        if val.is_finite() && gain >= ARMIJO * dir && gain > 1e-12 * (1.0 + base.abs()) {
            return Some(cand);
        }
        step *= cfg.step_backtrack;
    }
    None
}

fn apply_row(f: &mut FactorMatrix, col_sums: &mut [f64], v: NodeId, new: &[f64]) {
    for ((s, old), n) in col_sums.iter_mut().zip(f.row(v)).zip(new) {
        *s += n - old;
    }
    f.row_mut(v).copy_from_slice(new);
}

pub fn fit_bigclam(graph: &Graph, cfg: &BigClamConfig) -> Result<BigClamFit> {
    cfg.validate()?;
    if graph.num_edges() == 0 {
        return Err(Error::EmptyGraph);
    }
    let n = graph.num_nodes();
    let m = cfg.m;
    let mut init_rng = rng::seeded(cfg.seed, &[0]);
    let scale = 1.0 / (m as f64).sqrt();
    let mut f = FactorMatrix {
        rows: n,
        cols: m,
        data: (0..n * m).map(|_| init_rng.gen::<f64>() * scale).collect(),
    };

    let mut trace = vec![log_likelihood(graph, &f).value];
    let mut converged = false;
    let mut order: Vec<NodeId> = (0..n).collect();
    for sweep in 0..cfg.max_iters {
        order.shuffle(&mut rng::seeded(cfg.seed, &[1, sweep as u64]));
        let mut col_sums = f.column_sums();
        if cfg.parallel {
            for block in order.chunks(256) {
                let proposals: Vec<Option<Vec<f64>>> = block
                    .par_iter()
                    .map(|&v| {
                        let ctx = RowContext::new(graph, &f, &col_sums, v);
                        improve_row(&ctx, f.row(v), cfg)
                    })
                    .collect();
                for (&v, prop) in block.iter().zip(proposals) {
                    let Some(new) = prop else { continue };
                    let ctx = RowContext::new(graph, &f, &col_sums, v);
                    let gain = ctx.value(&new) - ctx.value(f.row(v));
                    if gain > 1e-12 * (1.0 + ctx.value(f.row(v)).abs()) {
                        apply_row(&mut f, &mut col_sums, v, &new);
                    }
                }
            }
        } else {
            for &v in &order {
                let ctx = RowContext::new(graph, &f, &col_sums, v);
                if let Some(new) = improve_row(&ctx, f.row(v), cfg) {
                    apply_row(&mut f, &mut col_sums, v, &new);
                }
            }
        }
        let ll = log_likelihood(graph, &f).value;
        let prev = *trace.last().unwrap();
        trace.push(ll);
        if (ll - prev) <= cfg.tol * prev.abs() {
            converged = true;
            break;
        }
    }
    if !converged {
        log::info!("community fit stopped after {} sweeps without converging", cfg.max_iters);
    }

    let threshold = cfg.threshold.unwrap_or_else(|| default_threshold(n));
    let mut communities = Vec::new();
    let mut dropped = 0;
    for c in 0..m {
        let members: Vec<NodeId> = (0..n).filter(|&v| f.row(v)[c] >= threshold).collect();
        if members.is_empty() {
            dropped += 1;
        } else {
            communities.push(members);
        }
    }
    if communities.is_empty() {
        return Err(Error::NoCommunitiesFound);
    }
    let affiliations = Affiliations::new(n, communities)?;
    Ok(BigClamFit {
        factors: f,
        affiliations,
        trace,
        converged,
        dropped,
        threshold,
    })
}

/// Disjoint partition into connected components, ordered by smallest member.
pub fn connected_components(graph: &Graph) -> Affiliations {
    let n = graph.num_nodes();
    let mut seen = vec![false; n];
    let mut communities = Vec::new();
    let mut queue = VecDeque::new();
    for s in 0..n {
        if seen[s] {
            continue;
        }
        seen[s] = true;
        queue.push_back(s);
        let mut comp = Vec::new();
        while let Some(v) = queue.pop_front() {
            comp.push(v);
            for &u in graph.neighbors(v) {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
        communities.push(comp);
    }
    Affiliations::new(n, communities).expect("components are non-empty and in range")
}

/// Where communities come from.
#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    BigClam(BigClamConfig),
    Import(PathBuf),
    ConnectedComponents,
}

impl FromStr for Strategy {
    type Err = Error;

    /// `bigclam`, `bigclam:m=K`, `import:PATH` or `cc`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "cc" {
            return Ok(Strategy::ConnectedComponents);
        }
        if let Some(path) = s.strip_prefix("import:") {
            if path.is_empty() {
                return Err(Error::Config("import strategy needs a path".into()));
            }
            return Ok(Strategy::Import(PathBuf::from(path)));
        }
        if s == "bigclam" {
            return Ok(Strategy::BigClam(BigClamConfig::default()));
        }
        if let Some(rest) = s.strip_prefix("bigclam:") {
            let m = rest
                .strip_prefix("m=")
                .and_then(|k| k.parse::<usize>().ok())
                .filter(|&k| k > 0)
                .ok_or_else(|| Error::Config(format!("bad bigclam option '{rest}'")))?;
            return Ok(Strategy::BigClam(BigClamConfig {
                m,
                ..BigClamConfig::default()
            }));
        }
        Err(Error::Config(format!("unknown community strategy '{s}'")))
    }
}

pub fn detect(graph: &Graph, strategy: &Strategy) -> Result<Affiliations> {
    match strategy {
        Strategy::BigClam(cfg) => Ok(fit_bigclam(graph, cfg)?.affiliations),
        Strategy::Import(path) => Affiliations::import(path, graph),
        Strategy::ConnectedComponents => Ok(connected_components(graph)),
    }
}
