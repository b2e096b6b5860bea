//! Node classification (one-vs-rest logistic regression, micro/macro F1) and
//! network reconstruction (MAP over embedding-distance rankings).

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, LabelTable, NodeId};
use crate::rng;
use crate::trainer::EmbeddingMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegConfig {
    /// Inverse regularization strength: the loss is
    /// `c·Σ logloss + ½‖w‖²` (bias unpenalized).
    pub c: f64,
    pub max_iters: usize,
    /// Stop when the gradient max-norm falls below this.
    pub tol: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        LogRegConfig {
            c: 1.0,
            max_iters: 200,
            tol: 1e-6,
        }
    }
}

/// One binary logistic model per class; weights are `d` coefficients followed
/// by the bias. Classes without training examples have no model.
#[derive(Debug, Clone)]
pub struct ClassifierModel {
    pub weights: Vec<Option<Vec<f64>>>,
    pub config: LogRegConfig,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `ln(1 + e^x)`.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Newton's method with backtracking on the regularized binary log-loss.
fn fit_binary(x: &DMatrix<f64>, y: &[f64], cfg: &LogRegConfig) -> Vec<f64> {
    let (rows, cols) = x.shape();
    let d = cols - 1;
    let mut w = DVector::<f64>::zeros(cols);
    let loss = |w: &DVector<f64>| -> f64 {
        let z = x * w;
        let data: f64 = (0..rows).map(|r| softplus(-y[r] * z[r])).sum();
        cfg.c * data + 0.5 * w.rows(0, d).norm_squared()
    };
    let mut current = loss(&w);
    for _ in 0..cfg.max_iters {
        let z = x * &w;
        let mut coef = DVector::<f64>::zeros(rows);
        let mut curv = DVector::<f64>::zeros(rows);
        for r in 0..rows {
            let s = sigmoid(-y[r] * z[r]);
            coef[r] = -cfg.c * y[r] * s;
            curv[r] = cfg.c * s * (1.0 - s);
        }
        let mut grad = x.tr_mul(&coef);
        for k in 0..d {
            grad[k] += w[k];
        }
        if grad.amax() < cfg.tol {
            break;
        }
        let mut weighted = x.clone();
        for r in 0..rows {
            weighted.row_mut(r).scale_mut(curv[r]);
        }
        let mut hess = x.tr_mul(&weighted);
        for k in 0..d {
            hess[(k, k)] += 1.0;
        }
        hess[(d, d)] += 1e-10;
        let Some(chol) = hess.cholesky() else { break };
        let dir = -chol.solve(&grad);
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand = &w + &dir * step;
            let val = loss(&cand);
            if val <= current + 1e-4 * step * slope {
                w = cand;
                current = val;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    w.iter().copied().collect()
}

fn design_matrix(features: &EmbeddingMatrix, nodes: &[NodeId]) -> DMatrix<f64> {
    let d = features.dim();
    DMatrix::from_fn(nodes.len(), d + 1, |r, c| if c < d { features.row(nodes[r])[c] } else { 1.0 })
}

/// Fit one-vs-rest models on the rows `nodes` of `features`.
pub fn fit_logreg_ovr(
    features: &EmbeddingMatrix,
    nodes: &[NodeId],
    labels: &LabelTable,
    cfg: &LogRegConfig,
) -> Result<ClassifierModel> {
    let k = labels.num_classes();
    let mut present = vec![false; k];
    for &v in nodes {
        for &c in labels.classes_of(v) {
            present[c] = true;
        }
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::SingleClassSplit);
    }
    let x = design_matrix(features, nodes);
    let weights = (0..k)
        .into_par_iter()
        .map(|c| {
            present[c].then(|| {
                let y: Vec<f64> = nodes
                    .iter()
                    .map(|&v| if labels.classes_of(v).contains(&c) { 1.0 } else { -1.0 })
                    .collect();
                fit_binary(&x, &y, cfg)
            })
        })
        .collect();
    Ok(ClassifierModel {
        weights,
        config: *cfg,
    })
}

impl ClassifierModel {
    /// Decision value per class; `-∞` for classes without a model.
    pub fn scores(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .map(|w| match w {
                Some(w) => {
                    let d = w.len() - 1;
                    w[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[d]
                }
                None => f64::NEG_INFINITY,
            })
            .collect()
    }

    /// The `top` highest-scoring classes, ties to the lower class index.
    pub fn predict_top(&self, x: &[f64], top: usize) -> Vec<usize> {
        let scores = self.scores(x);
        let mut order: Vec<usize> = (0..scores.len()).filter(|&c| self.weights[c].is_some()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        order.truncate(top);
        order.sort_unstable();
        order
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        self.predict_top(x, 1)[0]
    }
}

/// Micro and macro F1 of predicted label sets. Macro F1 averages over every
/// class that occurs in either the truth or the predictions; a class with no
/// true positives scores 0.
pub fn f1_scores(truth: &[Vec<usize>], predicted: &[Vec<usize>], num_classes: usize) -> (f64, f64) {
    assert_eq!(truth.len(), predicted.len());
    let mut tp = vec![0u64; num_classes];
    let mut fp = vec![0u64; num_classes];
    let mut fne = vec![0u64; num_classes];
    for (t, p) in truth.iter().zip(predicted) {
        for &c in p {
            if t.contains(&c) {
                tp[c] += 1;
            } else {
                fp[c] += 1;
            }
        }
        for &c in t {
            if !p.contains(&c) {
                fne[c] += 1;
            }
        }
    }
    let f1 = |tp: u64, fp: u64, fne: u64| {
        if tp == 0 {
            0.0
        } else {
            2.0 * tp as f64 / (2 * tp + fp + fne) as f64
        }
    };
    let (stp, sfp, sfn) = (tp.iter().sum(), fp.iter().sum(), fne.iter().sum());
    let micro = f1(stp, sfp, sfn);
    let active: Vec<usize> = (0..num_classes).filter(|&c| tp[c] + fp[c] + fne[c] > 0).collect();
    let macro_f1 = if active.is_empty() {
        0.0
    } else {
        active.iter().map(|&c| f1(tp[c], fp[c], fne[c])).sum::<f64>() / active.len() as f64
    };
    (micro, macro_f1)
}

/// Scores of one (train ratio, repetition) cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyCell {
    pub ratio: f64,
    pub repetition: usize,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Ordered by ratio, then repetition.
    pub cells: Vec<ClassifyCell>,
    /// Splits that fell back to unstratified sampling.
    pub unstratified_splits: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub ratio: f64,
    pub micro_mean: f64,
    pub micro_std: f64,
    pub macro_mean: f64,
    pub macro_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn ratios(&self) -> Vec<f64> {
        let mut r: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !r.contains(&c.ratio) {
                r.push(c.ratio);
            }
        }
        r
    }

    pub fn summary(&self, ratio: f64) -> Option<Summary> {
        let cells: Vec<_> = self.cells.iter().filter(|c| c.ratio == ratio).collect();
        if cells.is_empty() {
            return None;
        }
        let (micro_mean, micro_std) = mean_std(&cells.iter().map(|c| c.micro_f1).collect::<Vec<_>>());
        let (macro_mean, macro_std) = mean_std(&cells.iter().map(|c| c.macro_f1).collect::<Vec<_>>());
        Some(Summary {
            ratio,
            micro_mean,
            micro_std,
            macro_mean,
            macro_std,
        })
    }

    pub fn summaries(&self) -> Vec<Summary> {
        self.ratios().into_iter().filter_map(|r| self.summary(r)).collect()
    }
}

/// Train/test partition of labelled nodes. Stratified by each node's first
/// class when every class has at least two members.
fn split(labels: &LabelTable, ratio: f64, r: &mut rng::Rng) -> (Vec<NodeId>, Vec<NodeId>, bool) {
    let nodes = labels.labeled_nodes();
    let mut groups: Vec<Vec<NodeId>> = vec![Vec::new(); labels.num_classes()];
    for &v in &nodes {
        groups[labels.classes_of(v)[0]].push(v);
    }
    let stratifiable = groups.iter().all(|g| g.is_empty() || g.len() >= 2);
    let (mut train, mut test) = (Vec::new(), Vec::new());
    if stratifiable {
        for mut g in groups.into_iter().filter(|g| !g.is_empty()) {
            g.shuffle(r);
            let take = ((ratio * g.len() as f64).round() as usize).clamp(1, g.len() - 1);
            test.extend_from_slice(&g[take..]);
            g.truncate(take);
            train.extend(g);
        }
    } else {
        let mut all = nodes;
        all.shuffle(r);
        let take = ((ratio * all.len() as f64).round() as usize).clamp(1, all.len() - 1);
        test = all.split_off(take);
        train = all;
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test, stratifiable)
}

/// For every ratio and repetition: split, fit, predict the held-out nodes
/// (top-L classes, L = the node's true label count) and score.
pub fn classify_and_score(
    u: &EmbeddingMatrix,
    labels: &LabelTable,
    ratios: &[f64],
    repetitions: usize,
    seed: u64,
    cfg: &LogRegConfig,
) -> Result<EvalReport> {
    if repetitions == 0 {
        return Err(Error::Config("eval.repetitions must be >= 1".into()));
    }
    if let Some(r) = ratios.iter().find(|&&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::Config(format!("train ratio {r} not in (0, 1)")));
    }
    if labels.labeled_nodes().len() < 2 {
        return Err(Error::SingleClassSplit);
    }
    let jobs: Vec<(usize, f64, usize)> = ratios
        .iter()
        .enumerate()
        .flat_map(|(ri, &ratio)| (0..repetitions).map(move |rep| (ri, ratio, rep)))
        .collect();
    let results: Vec<Result<(ClassifyCell, bool)>> = jobs
        .par_iter()
        .map(|&(ri, ratio, rep)| {
            let mut r = rng::seeded(seed, &[ri as u64, rep as u64]);
            let (train, test, stratified) = split(labels, ratio, &mut r);
            let model = fit_logreg_ovr(u, &train, labels, cfg)?;
            let truth: Vec<Vec<usize>> = test.iter().map(|&v| labels.classes_of(v).to_vec()).collect();
            let predicted: Vec<Vec<usize>> = test
                .iter()
                .map(|&v| model.predict_top(u.row(v), labels.classes_of(v).len()))
                .collect();
            let (micro_f1, macro_f1) = f1_scores(&truth, &predicted, labels.num_classes());
            Ok((
                ClassifyCell {
                    ratio,
                    repetition: rep,
                    micro_f1,
                    macro_f1,
                },
                stratified,
            ))
        })
        .collect();
    let mut cells = Vec::with_capacity(results.len());
    let mut unstratified_splits = 0;
    for res in results {
        let (cell, stratified) = res?;
        if !stratified {
            unstratified_splits += 1;
        }
        cells.push(cell);
    }
    if unstratified_splits > 0 {
        log::warn!("{unstratified_splits} splits fell back to unstratified sampling");
    }
    Ok(EvalReport {
        cells,
        unstratified_splits,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionReport {
    pub map: f64,
    pub scored_nodes: usize,
    pub skipped_isolated: usize,
}

/// Average precision of node `v`'s neighbors among its `degree(v)` nearest
/// nodes by Euclidean distance (ties to the lower index): the mean of
/// precision-at-rank over the hits, 0 without hits.
pub fn average_precision(u: &EmbeddingMatrix, graph: &Graph, v: NodeId) -> f64 {
    let k = graph.degree(v);
    let n = graph.num_nodes();
    let x = u.row(v);
    let mut cand: Vec<(f64, NodeId)> = (0..n)
        .filter(|&w| w != v)
        .map(|w| {
            let d: f64 = x.iter().zip(u.row(w)).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, w)
        })
        .collect();
    let cmp = |a: &(f64, NodeId), b: &(f64, NodeId)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, cmp);
        cand.truncate(k);
    }
    cand.sort_unstable_by(cmp);
    let (mut hits, mut sum) = (0usize, 0.0);
    for (rank, &(_, w)) in cand.iter().enumerate() {
        if graph.has_edge(v, w) {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    if hits == 0 {
        0.0
    } else {
        sum / hits as f64
    }
}

pub fn reconstruct_and_score(u: &EmbeddingMatrix, graph: &Graph) -> Result<ReconstructionReport> {
    if u.num_nodes() != graph.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} embeddings for {} nodes",
            u.num_nodes(),
            graph.num_nodes()
        )));
    }
    let scored: Vec<NodeId> = (0..graph.num_nodes()).filter(|&v| graph.degree(v) > 0).collect();
    let skipped_isolated = graph.num_nodes() - scored.len();
    let aps: Vec<f64> = scored.par_iter().map(|&v| average_precision(u, graph, v)).collect();
    let map = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };
    Ok(ReconstructionReport {
        map,
        scored_nodes: scored.len(),
        skipped_isolated,
    })
}
