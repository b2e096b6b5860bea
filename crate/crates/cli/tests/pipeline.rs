use std::fs;
use std::path::Path;
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use structembed_cli::config::{PipelineConfig, RawConfig};
use structembed_cli::pipeline::{self, EvalOutcome};
use structembed_cli::CliError;

const TWO_TRIANGLES: &str = "a b\nb c\nc a\nd e\ne f\nf d\n";

fn config(pairs: &[(&str, &str)]) -> PipelineConfig {
    let mut raw = RawConfig::default();
    for (k, v) in pairs {
        raw.set(k, v).unwrap();
    }
    raw.resolve().unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn small(dir: &Path, edges: &str) -> Vec<(&'static str, String)> {
    vec![
        ("edges", edges.to_string()),
        ("output_dir", dir.join("out").display().to_string()),
        ("train.dim", "8".into()),
        ("walk.walks_per_node", "4".into()),
        ("walk.walk_length", "20".into()),
        ("threads", "1".into()),
    ]
}

fn cfg_of(pairs: &[(&'static str, String)]) -> PipelineConfig {
    config(&pairs.iter().map(|(k, v)| (*k, v.as_str())).collect::<Vec<_>>())
}

#[test]
fn embed_two_triangles() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let out = pipeline::cmd_embed(&cfg_of(&small(dir.path(), &edges))).unwrap();
    let text = fs::read_to_string(&out.embedding).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("6 8"));
    assert!(lines.all(|l| l.split_whitespace().count() == 9));
    let manifest = fs::read_to_string(&out.manifest).unwrap();
    assert!(manifest.lines().any(|l| l == "stats.triangles=2"));
    assert!(manifest.lines().any(|l| l == "stats.edges=6"));
    assert!(manifest.lines().any(|l| l.starts_with("sha256.edges=") && l.len() == "sha256.edges=".len() + 64));
    assert!(manifest.lines().any(|l| l.starts_with("stats.positive_pairs=")));
}

#[test]
fn binary_output_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let mut args = small(dir.path(), &edges);
    args.push(("output.format", "binary".into()));
    let out = pipeline::cmd_embed(&cfg_of(&args)).unwrap();
    let back = pipeline::read_embedding(&out.embedding).unwrap();
    assert_eq!(back.matrix, out.matrix);
    assert_eq!(back.labels, ["a", "b", "c", "d", "e", "f"]);
}

#[test]
fn missing_edge_file_fails_in_load() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = cfg_of(&small(dir.path(), &dir.path().join("none.txt").display().to_string()));
    let err = pipeline::cmd_embed(&cfg).err().unwrap();
    assert_eq!(err.stage(), Some("load"));
    assert_eq!(err.exit_code(), 3);
    assert!(err.to_string().starts_with("stage=load"));
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_structembed");
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let out = dir.path().join("o").display().to_string();
    let run = |args: &[&str]| {
        Command::new(exe)
            .args(args)
            .env("RUST_LOG", "off")
            .output()
            .unwrap()
    };
    let ok = run(&["embed", "--edges", &edges, "--out", &out, "--train.dim=4", "--walk.walks_per_node", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", String::from_utf8_lossy(&ok.stderr));

    let missing = run(&["embed", "--edges", "/nonexistent/edges.txt"]);
    assert_eq!(missing.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("stage=load"));

    assert_eq!(run(&["embed", "--no.such.key", "1"]).status.code(), Some(2));
    assert_eq!(run(&["embed", "--edges", &edges, "--walk.p", "-1"]).status.code(), Some(2));
    let cfg_path = write(dir.path(), "bad.cfg", "walk.p\n");
    assert_eq!(run(&["embed", "-c", &cfg_path]).status.code(), Some(2));

    let diverge = run(&[
        "embed", "--edges", &edges, "--out", &out, "--train.dim=4", "--train.mode=weighted",
        "--train.lr_init=5", "--train.lr_final=4", "--train.sigmoid_clip=1e9", "--train.epochs=20",
    ]);
    assert_eq!(diverge.status.code(), Some(4), "{}", String::from_utf8_lossy(&diverge.stderr));
}

#[test]
fn communities_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let mut args = small(dir.path(), &edges);
    args.push(("community.strategy", "cc".into()));
    let path = pipeline::cmd_communities(&cfg_of(&args)).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), "a b c\nd e f\n");

    // canonical import file re-exports byte for byte
    let canonical = "b c\na b c d\nf\n";
    let aff = write(dir.path(), "aff.txt", canonical);
    let mut args = small(dir.path(), &edges);
    args.push(("community.strategy", format!("import:{aff}")));
    let path = pipeline::cmd_communities(&cfg_of(&args)).unwrap();
    assert_eq!(fs::read(&path).unwrap(), canonical.as_bytes());

    let bad = write(dir.path(), "bad.txt", "a zz\n");
    let mut args = small(dir.path(), &edges);
    args.push(("community.strategy", "import".into()));
    args.push(("affiliations", bad));
    let err = pipeline::cmd_communities(&cfg_of(&args)).err().unwrap();
    assert_eq!((err.stage(), err.exit_code()), (Some("communities"), 3));
}

/// Two dense blocks joined by a single edge.
fn planted_blocks(dir: &Path, size: usize, seed: u64) -> String {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let mut text = String::new();
    for block in 0..2 {
        for a in 0..size {
            for b in (a + 1)..size {
                if r.gen_bool(0.7) {
                    text.push_str(&format!("n{} n{}\n", block * size + a, block * size + b));
                }
            }
        }
    }
    text.push_str(&format!("n0 n{size}\n"));
    write(dir, "blocks.txt", &text)
}

#[test]
fn bigclam_finds_planted_blocks() {
    let dir = tempfile::tempdir().unwrap();
    let edges = planted_blocks(dir.path(), 10, 3);
    let mut args = small(dir.path(), &edges);
    args.push(("community.strategy", "bigclam:m=2".into()));
    let path = pipeline::cmd_communities(&cfg_of(&args)).unwrap();
    let text = fs::read_to_string(path).unwrap();
    let mut found: Vec<Vec<usize>> = text
        .lines()
        .map(|l| {
            let mut v: Vec<usize> = l.split(' ').map(|t| t[1..].parse().unwrap()).collect();
            v.sort_unstable();
            v
        })
        .collect();
    found.sort();
    assert_eq!(found, vec![(0..10).collect::<Vec<_>>(), (10..20).collect()]);
}

#[test]
fn classify_one_hot_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let labels = write(dir.path(), "l.txt", "a x\nb x\nc x\nd y\ne y\nf y\n");
    let emb = write(dir.path(), "u.txt", "6 2\na 1 0\nb 1 0\nc 1 0\nd 0 1\ne 0 1\nf 0 1\n");
    let mut args = small(dir.path(), &edges);
    args.extend([("labels", labels), ("eval.embedding", emb), ("train.dim", "2".into())]);
    let files = pipeline::cmd_eval(&cfg_of(&args)).unwrap();
    let EvalOutcome::Classify(report) = files.outcome else {
        panic!("wrong task")
    };
    assert_eq!(report.cells.len(), 9 * 5);
    assert!(report.cells.iter().all(|c| c.micro_f1 == 1.0 && c.macro_f1 == 1.0));
    let records = fs::read_to_string(files.records).unwrap();
    let mut lines = records.lines();
    assert_eq!(lines.next(), Some("task\tratio\trepetition\tmetric\tvalue"));
    assert_eq!(lines.count(), 9 * 5 * 2);
    let table = fs::read_to_string(files.table).unwrap();
    assert_eq!(table.lines().count(), 10);
}

#[test]
fn eval_errors() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let emb = write(dir.path(), "u.txt", "5 2\na 1 0\nb 1 0\nc 1 0\nd 0 1\ne 0 1\n");
    let mut args = small(dir.path(), &edges);
    args.extend([("eval.embedding", emb), ("train.dim", "2".into()), ("eval.task", "reconstruct".into())]);
    let err = pipeline::cmd_eval(&cfg_of(&args)).err().unwrap();
    assert!(matches!(&err, CliError::Stage { source: structembed::Error::MissingNode(n), .. } if n == "f"));

    let emb = write(dir.path(), "u3.txt", "1 3\na 1 0 0\n");
    let mut args = small(dir.path(), &edges);
    args.extend([("eval.embedding", emb), ("train.dim", "2".into())]);
    let err = pipeline::cmd_eval(&cfg_of(&args)).err().unwrap();
    assert!(matches!(&err, CliError::Stage { source: structembed::Error::DimensionMismatch(_), .. }));
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn reconstruct_nearest_neighbors() {
    let dir = tempfile::tempdir().unwrap();
    let edges = write(dir.path(), "e.txt", TWO_TRIANGLES);
    let emb = write(dir.path(), "u.txt", "6 2\na 0 0\nb 0 1\nc 1 0\nd 9 9\ne 9 10\nf 10 9\n");
    let mut args = small(dir.path(), &edges);
    args.extend([("eval.embedding", emb), ("train.dim", "2".into()), ("eval.task", "reconstruct".into())]);
    let files = pipeline::cmd_eval(&cfg_of(&args)).unwrap();
    let EvalOutcome::Reconstruct(r) = files.outcome else {
        panic!("wrong task")
    };
    assert_eq!(r.map, 1.0);
    assert_eq!(fs::read_to_string(files.records).unwrap().lines().nth(1), Some("reconstruct\t\t0\tmap\t1"));
}

#[test]
fn runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let edges = planted_blocks(dir.path(), 12, 8);
    let labels: String = (0..24).map(|v| format!("n{v} {}\n", v / 12)).collect();
    let labels = write(dir.path(), "labels.txt", &labels);
    let mut outputs = Vec::new();
    for run in 0..2 {
        let out = dir.path().join(format!("run{run}"));
        let args = [
            ("edges", edges.clone()),
            ("labels", labels.clone()),
            ("output_dir", out.display().to_string()),
            ("train.dim", "8".into()),
            ("walk.walks_per_node", "3".into()),
            ("threads", "1".into()),
            ("eval.repetitions", "2".into()),
        ];
        let cfg = cfg_of(&args);
        pipeline::cmd_embed(&cfg).unwrap();
        let files = pipeline::cmd_eval(&cfg).unwrap();
        // the manifest records the output directory, which differs by design
        let manifest: String = fs::read_to_string(out.join("manifest.txt"))
            .unwrap()
            .lines()
            .filter(|l| !l.starts_with("output_dir="))
            .collect();
        outputs.push([
            fs::read(out.join("embedding.txt")).unwrap(),
            manifest.into_bytes(),
            fs::read(files.table).unwrap(),
            fs::read(files.records).unwrap(),
        ]);
    }
    for (k, (a, b)) in outputs[0].iter().zip(&outputs[1]).enumerate() {
        assert!(a == b, "output {k} differs");
    }
}

/// Degree-heterogeneous graph with four planted classes; most edges stay
/// inside a class.
fn planted_partition(dir: &Path, n: usize, edges_target: usize, seed: u64) -> (String, String) {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let class: Vec<usize> = (0..n).map(|v| v % 4).collect();
    let mut set = std::collections::BTreeSet::new();
    while set.len() < edges_target {
        let a = r.gen_range(0..n);
        let b = if r.gen_bool(0.85) {
            4 * r.gen_range(0..n / 4) + class[a]
        } else {
            r.gen_range(0..n)
        };
        if a != b {
            set.insert((a.min(b), a.max(b)));
        }
    }
    let edges: String = set.iter().map(|(a, b)| format!("{a} {b}\n")).collect();
    let labels: String = (0..n).map(|v| format!("{v} c{}\n", class[v])).collect();
    (write(dir, "pp.txt", &edges), write(dir, "pp_labels.txt", &labels))
}

#[test]
fn planted_partition_is_learned() {
    let dir = tempfile::tempdir().unwrap();
    let (edges, labels) = planted_partition(dir.path(), 400, 1200, 5);
    let args = [
        ("edges", edges),
        ("labels", labels),
        ("output_dir", dir.path().join("out").display().to_string()),
        ("train.dim", "32".into()),
        ("walk.walks_per_node", "5".into()),
        ("walk.walk_length", "40".into()),
        ("eval.ratios", "0.5".into()),
        ("eval.repetitions", "3".into()),
    ];
    let cfg = cfg_of(&args);
    pipeline::cmd_embed(&cfg).unwrap();
    let files = pipeline::cmd_eval(&cfg).unwrap();
    let EvalOutcome::Classify(report) = files.outcome else {
        panic!("wrong task")
    };
    let s = report.summary(0.5).unwrap();
    assert!(s.micro_mean > 0.8, "micro {}", s.micro_mean);
    let rec = pipeline::cmd_eval(&cfg_of(&[args.to_vec(), vec![("eval.task", "reconstruct".into())]].concat())).unwrap();
    let EvalOutcome::Reconstruct(r) = rec.outcome else {
        panic!("wrong task")
    };
    assert!(r.map > 0.3, "map {}", r.map);
}
