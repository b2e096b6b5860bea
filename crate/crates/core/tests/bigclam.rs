use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structembed::community::{fit_bigclam, log_likelihood, row_gradient, BigClamConfig, FactorMatrix};
use structembed::Graph;

fn random_graph(n: usize, p: f64, r: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for a in 0..n {
        for b in (a + 1)..n {
            if r.gen_bool(p) {
                edges.push((a, b));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// Two cliques of the given sizes joined by one bridge edge when `bridge`.
fn two_cliques(a: usize, b: usize, bridge: bool) -> Graph {
    let mut edges = Vec::new();
    for (lo, hi) in [(0, a), (a, a + b)] {
        for x in lo..hi {
            for y in (x + 1)..hi {
                edges.push((x, y));
            }
        }
    }
    if bridge {
        edges.push((0, a));
    }
    Graph::from_edges(a + b, &edges)
}

#[test]
fn gradient_matches_finite_differences() {
    let mut r = ChaCha8Rng::seed_from_u64(21);
    for case in 0..6 {
        let n = 6 + case % 5;
        let m = 2 + case % 3;
        let g = random_graph(n, 0.4, &mut r);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..m).map(|_| r.gen_range(0.1..1.0)).collect()).collect();
        let f = FactorMatrix::from_rows(&rows);
        let h = 1e-5;
        for v in 0..n {
            let grad = row_gradient(&g, &f, v);
            for c in 0..m {
                let at = |delta: f64| {
                    let mut rows = rows.clone();
                    rows[v][c] += delta;
                    log_likelihood(&g, &FactorMatrix::from_rows(&rows)).value
                };
                let numeric = (at(h) - at(-h)) / (2.0 * h);
                let rel = (grad[c] - numeric).abs() / grad[c].abs().max(numeric.abs()).max(1e-8);
                assert!(rel < 1e-5, "case {case} node {v} col {c}: {} vs {numeric}", grad[c]);
            }
        }
    }
}

#[test]
fn traces_are_monotone() {
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for seed in 0..20u64 {
        let n = r.gen_range(10..=50);
        let p = [0.05, 0.1, 0.3][seed as usize % 3];
        let g = random_graph(n, p, &mut r);
        if g.num_edges() == 0 {
            continue;
        }
        for parallel in [false, true] {
            let cfg = BigClamConfig {
                m: 1 + seed as usize % 4,
                seed,
                parallel,
                threshold: Some(0.0),
                ..Default::default()
            };
            let fit = fit_bigclam(&g, &cfg).unwrap();
            assert!(
                fit.trace.windows(2).all(|w| w[1] >= w[0]),
                "seed {seed} parallel {parallel}: {:?}",
                fit.trace
            );
        }
    }
}

#[test]
fn planted_cliques_are_recovered() {
    let mut r = ChaCha8Rng::seed_from_u64(9);
    let mut recovered = 0;
    for seed in 0..20u64 {
        let (a, b) = (r.gen_range(5..=9), r.gen_range(5..=9));
        let g = two_cliques(a, b, true);
        let fit = fit_bigclam(&g, &BigClamConfig { m: 2, seed, ..Default::default() }).unwrap();
        let mut found: Vec<Vec<usize>> = fit.affiliations.communities().to_vec();
        found.sort();
        let planted = vec![(0..a).collect::<Vec<_>>(), (a..a + b).collect()];
        if found == planted {
            recovered += 1;
        }
    }
    assert!(recovered >= 18, "recovered {recovered}/20");
}
