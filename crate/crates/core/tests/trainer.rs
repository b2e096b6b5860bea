use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use structembed::community::connected_components;
use structembed::structure::{
    compute_community_overlap, compute_triad_matrix, merge_pair_weights, PairCounts, DEFAULT_PAIR_BUDGET,
};
use structembed::trainer::*;
use structembed::walker::{count_cooccurrences, generate_walks, WalkConfig};
use structembed::Graph;

const KARATE: &[(usize, usize)] = &[
    (1, 2), (1, 3), (1, 4), (1, 5), (1, 6), (1, 7), (1, 8), (1, 9), (1, 11), (1, 12), (1, 13), (1, 14),
    (1, 18), (1, 20), (1, 22), (1, 32), (2, 3), (2, 4), (2, 8), (2, 14), (2, 18), (2, 20), (2, 22),
    (2, 31), (3, 4), (3, 8), (3, 9), (3, 10), (3, 14), (3, 28), (3, 29), (3, 33), (4, 8), (4, 13),
    (4, 14), (5, 7), (5, 11), (6, 7), (6, 11), (6, 17), (7, 17), (9, 31), (9, 33), (9, 34), (10, 34),
    (14, 34), (15, 33), (15, 34), (16, 33), (16, 34), (19, 33), (19, 34), (20, 34), (21, 33), (21, 34),
    (23, 33), (23, 34), (24, 26), (24, 28), (24, 30), (24, 33), (24, 34), (25, 26), (25, 28), (25, 32),
    (26, 32), (27, 30), (27, 34), (28, 34), (29, 32), (29, 34), (30, 33), (30, 34), (31, 33), (31, 34),
    (32, 33), (32, 34), (33, 34),
];

fn karate() -> Graph {
    let edges: Vec<_> = KARATE.iter().map(|&(a, b)| (a - 1, b - 1)).collect();
    Graph::from_edges(34, &edges)
}

fn pipeline_pairs(g: &Graph, seed: u64) -> (PairCounts, PairCounts, PairCounts) {
    let t = compute_triad_matrix(g);
    let h = compute_community_overlap(&connected_components(g), DEFAULT_PAIR_BUDGET).unwrap();
    let walks = generate_walks(
        g,
        &WalkConfig {
            walks_per_node: 5,
            walk_length: 20,
            seed,
            ..Default::default()
        },
    );
    (t, h, count_cooccurrences(&walks, 3))
}

#[test]
fn karate_has_45_triangles() {
    let g = karate();
    assert_eq!(g.num_edges(), 78);
    assert_eq!(structembed::structure::triangle_count(&compute_triad_matrix(&g)), 45);
}

#[test]
fn reduction_ignores_triads_and_communities() {
    let g = karate();
    let (t, h, w) = pipeline_pairs(&g, 3);
    for mode in [PositiveMode::Sampled, PositiveMode::Weighted] {
        let cfg = TrainConfig {
            dim: 16,
            alpha: 0.0,
            beta: 0.0,
            epochs: 2,
            mode,
            max_weight: Some(3.0),
            seed: 11,
            ..Default::default()
        };
        let base = train(&g, &merge_pair_weights(&t, &h, &w), &cfg).unwrap();

        let t2 = PairCounts::from_triples(t.iter().map(|(i, j, c)| (i, j, c * 7 + 1)).chain([(0, 33, 9)]));
        let h2 = PairCounts::from_triples((0..34).flat_map(|i| ((i + 1)..34).map(move |j| (i, j, 1 + (i * j) as u64 % 4))));
        let mutated = train(&g, &merge_pair_weights(&t2, &h2, &w), &cfg).unwrap();
        assert_eq!(base.as_slice(), mutated.as_slice());

        let empty = PairCounts::default();
        let no_th = train(&g, &merge_pair_weights(&empty, &empty, &w), &cfg).unwrap();
        assert_eq!(base.as_slice(), no_th.as_slice());
    }
}

#[test]
fn step_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(8);
    let (n, d) = (6, 4);
    let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-0.8..0.8)).collect()).collect();
    let u0 = EmbeddingMatrix::from_rows(rows);
    let cases = [(0, 1, 3.0, vec![2, 3, 4]), (5, 2, 1.0, vec![0, 0, 1]), (3, 4, 0.5, vec![])];
    let clip = 6.0;
    for (i, j, w, negs) in cases {
        let sample = vec![FrozenSample {
            i,
            j,
            weight: w,
            negatives: negs.clone(),
        }];
        let lr = 1e-3;
        let mut u = u0.clone();
        sgd_step(&mut u, i, j, w, &negs, lr, clip);
        let h = 1e-6;
        for v in 0..n {
            for x in 0..d {
                let analytic = -(u.row(v)[x] - u0.row(v)[x]) / lr;
                let shifted = |delta: f64| {
                    let mut rows: Vec<Vec<f64>> = (0..n).map(|k| u0.row(k).to_vec()).collect();
                    rows[v][x] += delta;
                    objective(&EmbeddingMatrix::from_rows(rows), &sample, clip)
                };
                let numeric = (shifted(h) - shifted(-h)) / (2.0 * h);
                let scale = analytic.abs().max(numeric.abs());
                if scale < 1e-9 {
                    continue;
                }
                let rel = (analytic - numeric).abs() / scale;
                assert!(rel < 1e-4, "node {v} coord {x}: analytic {analytic} numeric {numeric}");
            }
        }
        // a small step along the negative gradient lowers the objective
        assert!(objective(&u, &sample, clip) < objective(&u0, &sample, clip));
    }
}

#[test]
fn disjoint_triangles_separate() {
    let g = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]);
    let (t, h, w) = pipeline_pairs(&g, 5);
    let cfg = TrainConfig {
        dim: 2,
        epochs: 20,
        seed: 2,
        ..Default::default()
    };
    let u = train(&g, &merge_pair_weights(&t, &h, &w), &cfg).unwrap();
    let (mut within, mut across) = (vec![], vec![]);
    for a in 0..6 {
        for b in (a + 1)..6 {
            let s = pair_similarity(&u, a, b, cfg.sigmoid_clip);
            if (a < 3) == (b < 3) {
                within.push(s);
            } else {
                across.push(s);
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let margin = mean(&within) - mean(&across);
    assert!(margin > 0.2, "margin {margin}");
}

#[test]
fn objective_decreases_on_karate() {
    let g = karate();
    let (t, h, w) = pipeline_pairs(&g, 9);
    let table = merge_pair_weights(&t, &h, &w);
    for mode in [PositiveMode::Sampled, PositiveMode::Weighted] {
        let cfg = TrainConfig {
            dim: 16,
            epochs: 5,
            mode,
            // raw counts scale the weighted step, so it needs a smaller rate
            lr_init: if mode == PositiveMode::Weighted { 0.005 } else { 0.025 },
            seed: 4,
            ..Default::default()
        };
        // the evaluation sample is one extra epoch of the same stream with frozen negatives
        let noise = build_noise_sampler(&g);
        let mut r = ChaCha8Rng::seed_from_u64(77);
        let frozen: Vec<FrozenSample> = positive_sample_stream(&table, &cfg)
            .unwrap()
            .epoch(1000)
            .into_iter()
            .map(|s| {
                let mut negatives = Vec::new();
                draw_negatives(&noise, s.i, s.j, cfg.negatives, &mut r, &mut negatives);
                FrozenSample {
                    i: s.i,
                    j: s.j,
                    weight: s.weight,
                    negatives,
                }
            })
            .collect();
        let mut per_epoch = vec![objective(&EmbeddingMatrix::random(34, cfg.dim, cfg.seed), &frozen, 6.0)];
        let u = train_with(&g, &table, &cfg, |u, _| per_epoch.push(objective(u, &frozen, 6.0))).unwrap();
        assert!(u.is_finite());
        assert_eq!(per_epoch.len(), 6);
        assert!(per_epoch[5] < per_epoch[0], "{mode:?}: {per_epoch:?}");
    }
}

#[test]
fn noise_sampler_chi_square() {
    // heavy-tailed degrees via a preferential-attachment-like construction
    let mut r = ChaCha8Rng::seed_from_u64(5);
    let n = 1500;
    let mut edges = Vec::new();
    let mut ends: Vec<usize> = vec![0, 1];
    edges.push((0, 1));
    for v in 2..n {
        for _ in 0..r.gen_range(1..=3) {
            let u = ends[r.gen_range(0..ends.len())];
            if u != v {
                edges.push((u, v));
                ends.extend([u, v]);
            }
        }
    }
    let g = Graph::from_edges(n, &edges);
    let noise = build_noise_sampler(&g);
    let draws = 1_000_000;
    let mut counts = vec![0u64; n];
    let mut r = ChaCha8Rng::seed_from_u64(6);
    for _ in 0..draws {
        counts[noise.sample(&mut r)] += 1;
    }
    let mass: Vec<f64> = (0..n).map(|v| (g.degree(v) as f64).powf(0.75)).collect();
    let total: f64 = mass.iter().sum();
    let stat: f64 = (0..n)
        .map(|v| {
            let e = draws as f64 * mass[v] / total;
            (counts[v] as f64 - e).powi(2) / e
        })
        .sum();
    let critical = ChiSquared::new((n - 1) as f64).unwrap().inverse_cdf(0.999);
    assert!(stat < critical, "chi2 {stat} >= {critical}");
}

#[test]
fn support_size_matches_recount() {
    let g = karate();
    let (t, h, w) = pipeline_pairs(&g, 1);
    let table = merge_pair_weights(&t, &h, &w);
    for (alpha, beta) in [(1.0, 1.0), (0.0, 0.0), (0.0, 2.0), (0.5, 0.0)] {
        let mut combined: HashMap<(usize, usize), f64> = HashMap::new();
        for (i, j, c) in t.iter() {
            *combined.entry((i, j)).or_default() += alpha * c as f64;
        }
        for (i, j, c) in h.iter() {
            *combined.entry((i, j)).or_default() += beta * c as f64;
        }
        for (i, j, c) in w.iter() {
            *combined.entry((i, j)).or_default() += c as f64;
        }
        let expected = combined.values().filter(|&&x| x > 0.0).count();
        let cfg = TrainConfig {
            alpha,
            beta,
            ..Default::default()
        };
        let stream = positive_sample_stream(&table, &cfg).unwrap();
        assert_eq!(stream.support_size(), expected);
        let total: f64 = combined.values().sum();
        assert!((stream.total_weight() - total).abs() < 1e-9 * total);
    }
}
