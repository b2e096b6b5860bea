//! The end-to-end stages behind each subcommand.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};
use structembed::community::{self, fit_bigclam, BigClamConfig};
use structembed::eval::{classify_and_score, reconstruct_and_score, EvalReport, ReconstructionReport};
use structembed::graph::{load_edge_list, load_labels};
use structembed::io::{read_binary, read_text, write_binary, write_text};
use structembed::structure::{
    compute_community_overlap, compute_triad_matrix, merge_pair_weights, triangle_count, Affiliations, PairCounts,
    PairWeightTable,
};
use structembed::trainer::{positive_sample_stream, train_with, EmbeddingMatrix};
use structembed::walker::{count_cooccurrences, dump_walks, generate_walks, Walk};
use structembed::{Graph, LabelTable};

use crate::config::{Format, PipelineConfig, StrategyChoice, Task};
use crate::CliError;

fn stage<T>(name: &'static str, r: structembed::Result<T>) -> Result<T, CliError> {
    r.map_err(|source| CliError::Stage { stage: name, source })
}

fn io_err(name: &'static str, path: &Path, e: std::io::Error) -> CliError {
    CliError::Stage {
        stage: name,
        source: structembed::Error::Io {
            path: path.to_path_buf(),
            source: e,
        },
    }
}

/// Run `f` on a pool sized by `cfg.threads`.
pub fn with_threads<T: Send>(cfg: &PipelineConfig, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Config(format!("threads: {e}")))?;
    Ok(pool.install(f))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let digest = Sha256::digest(fs::read(path)?);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Loaded graph and optional labels, with input checksums.
pub struct Inputs {
    pub graph: Graph,
    pub labels: Option<LabelTable>,
    pub checksums: Vec<(String, String)>,
}

pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs, CliError> {
    let edges = cfg.edges_path()?;
    let graph = stage("load", load_edge_list(edges, cfg.load))?;
    let mut checksums = vec![("edges".to_string(), sha256_file(edges).map_err(|e| io_err("load", edges, e))?)];
    let labels = match &cfg.labels {
        Some(path) => {
            let table = stage("load", load_labels(path, &graph, cfg.allow_unknown_labels))?;
            if !table.skipped.is_empty() {
                log::warn!("{} label lines name nodes outside the graph", table.skipped.len());
            }
            checksums.push(("labels".into(), sha256_file(path).map_err(|e| io_err("load", path, e))?));
            Some(table)
        }
        None => None,
    };
    if let StrategyChoice::Import(path) = &cfg.strategy {
        checksums.push(("affiliations".into(), sha256_file(path).map_err(|e| io_err("load", path, e))?));
    }
    log::info!("loaded {} nodes, {} edges", graph.num_nodes(), graph.num_edges());
    Ok(Inputs {
        graph,
        labels,
        checksums,
    })
}

/// Community count used when `bigclam.m=auto`.
pub fn auto_community_count(graph: &Graph, labels: Option<&LabelTable>) -> usize {
    match labels {
        Some(l) if l.num_classes() > 0 => l.num_classes(),
        _ => (graph.num_nodes() as f64).sqrt().ceil().max(1.0) as usize,
    }
}

/// Communities plus a short description for the manifest.
pub struct CommunityOutcome {
    pub affiliations: Affiliations,
    pub stats: Vec<(String, String)>,
}

pub fn detect_communities(cfg: &PipelineConfig, inputs: &Inputs) -> Result<CommunityOutcome, CliError> {
    let graph = &inputs.graph;
    match &cfg.strategy {
        StrategyChoice::BigClam(m) => {
            let m = m.unwrap_or_else(|| auto_community_count(graph, inputs.labels.as_ref()));
            let bc = BigClamConfig { m, ..cfg.bigclam.clone() };
            let fit = stage("communities", fit_bigclam(graph, &bc))?;
            log::info!(
                "bigclam: m={m}, {} sweeps, converged={}, {} communities kept",
                fit.trace.len() - 1,
                fit.converged,
                fit.affiliations.num_communities()
            );
            let stats = vec![
                ("bigclam.m".into(), m.to_string()),
                ("bigclam.sweeps".into(), (fit.trace.len() - 1).to_string()),
                ("bigclam.converged".into(), fit.converged.to_string()),
                ("bigclam.threshold".into(), fit.threshold.to_string()),
                ("bigclam.dropped".into(), fit.dropped.to_string()),
                ("bigclam.log_likelihood".into(), fit.trace.last().unwrap().to_string()),
            ];
            Ok(CommunityOutcome {
                affiliations: fit.affiliations,
                stats,
            })
        }
        StrategyChoice::ConnectedComponents => Ok(CommunityOutcome {
            affiliations: community::connected_components(graph),
            stats: Vec::new(),
        }),
        StrategyChoice::Import(path) => Ok(CommunityOutcome {
            affiliations: stage("communities", Affiliations::import(path, graph))?,
            stats: Vec::new(),
        }),
    }
}

pub fn walks(cfg: &PipelineConfig, graph: &Graph) -> Vec<Walk> {
    generate_walks(graph, &cfg.walk)
}

/// T, H and W merged, with the intermediate counts.
pub struct Pairs {
    pub triads: PairCounts,
    pub overlap: PairCounts,
    pub cooccurrence: PairCounts,
    pub table: PairWeightTable,
}

pub fn build_pairs(cfg: &PipelineConfig, graph: &Graph, aff: &Affiliations, walks: &[Walk]) -> Result<Pairs, CliError> {
    let triads = compute_triad_matrix(graph);
    let overlap = stage("communities", compute_community_overlap(aff, cfg.pair_budget))?;
    let mut cooccurrence = count_cooccurrences(walks, cfg.walk.window);
    if cfg.binary_cooccurrence {
        cooccurrence = cooccurrence.to_binary();
    }
    let table = merge_pair_weights(&triads, &overlap, &cooccurrence);
    Ok(Pairs {
        triads,
        overlap,
        cooccurrence,
        table,
    })
}

pub fn embedding_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join(match cfg.format {
        Format::Text => "embedding.txt",
        Format::Binary => "embedding.bin",
    })
}

pub fn manifest_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("manifest.txt")
}

fn ensure_output_dir(cfg: &PipelineConfig, stage_name: &'static str) -> Result<(), CliError> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| io_err(stage_name, &cfg.output_dir, e))
}

/// What `embed` produced.
pub struct EmbedOutcome {
    pub embedding: PathBuf,
    pub manifest: PathBuf,
    pub matrix: EmbeddingMatrix,
    pub stats: Vec<(String, String)>,
}

/// load, triads, communities, walks, merge, train, write.
pub fn cmd_embed(cfg: &PipelineConfig) -> Result<EmbedOutcome, CliError> {
    with_threads(cfg, || embed_inner(cfg))?
}

fn embed_inner(cfg: &PipelineConfig) -> Result<EmbedOutcome, CliError> {
    let inputs = load_inputs(cfg)?;
    let graph = &inputs.graph;
    let clock = Instant::now();
    let communities = detect_communities(cfg, &inputs)?;
    log::info!("communities done in {:.2?}", clock.elapsed());
    let walk_set = walks(cfg, graph);
    let pairs = build_pairs(cfg, graph, &communities.affiliations, &walk_set)?;
    log::info!(
        "pairs: {} triad, {} community, {} co-occurrence, {} merged ({:.2?})",
        pairs.triads.len(),
        pairs.overlap.len(),
        pairs.cooccurrence.len(),
        pairs.table.len(),
        clock.elapsed()
    );
    let stream = stage("train", positive_sample_stream(&pairs.table, &cfg.train))?;
    let matrix = stage(
        "train",
        train_with(graph, &pairs.table, &cfg.train, |_, s| {
            log::info!("epoch {}: {} samples, max norm {:.3}", s.epoch + 1, s.samples, s.max_norm)
        }),
    )?;
    log::info!("training done in {:.2?}", clock.elapsed());

    ensure_output_dir(cfg, "write")?;
    let embedding = embedding_path(cfg);
    stage(
        "write",
        match cfg.format {
            Format::Text => write_text(&embedding, graph, &matrix),
            Format::Binary => write_binary(&embedding, graph, &matrix),
        },
    )?;

    let mut stats: Vec<(String, String)> = vec![
        ("nodes".into(), graph.num_nodes().to_string()),
        ("edges".into(), graph.num_edges().to_string()),
        ("mean_degree".into(), graph.mean_degree().to_string()),
        ("edges_per_node".into(), (graph.num_edges() as f64 / graph.num_nodes() as f64).to_string()),
        ("triangles".into(), triangle_count(&pairs.triads).to_string()),
        ("communities".into(), communities.affiliations.num_communities().to_string()),
        ("triad_pairs".into(), pairs.triads.len().to_string()),
        ("community_pairs".into(), pairs.overlap.len().to_string()),
        ("cooccurrence_pairs".into(), pairs.cooccurrence.len().to_string()),
        ("walks".into(), walk_set.len().to_string()),
        ("positive_pairs".into(), stream.support_size().to_string()),
        ("positive_weight".into(), stream.total_weight().to_string()),
        ("samples_per_epoch".into(), stream.samples_per_epoch().to_string()),
    ];
    stats.extend(communities.stats.iter().map(|(k, v)| (format!("community.{k}"), v.clone())));
    if let Some(l) = &inputs.labels {
        stats.push(("label_classes".into(), l.num_classes().to_string()));
        stats.push(("labels_skipped".into(), l.skipped.len().to_string()));
    }
    let manifest = manifest_path(cfg);
    write_manifest(&manifest, "embed", cfg, &inputs.checksums, &stats)?;
    Ok(EmbedOutcome {
        embedding,
        manifest,
        matrix,
        stats,
    })
}

/// Manifest text: resolved config, derived seeds, input checksums and stats,
/// all as `key=value` lines.
pub fn render_manifest(
    command: &str,
    cfg: &PipelineConfig,
    checksums: &[(String, String)],
    stats: &[(String, String)],
) -> String {
    let mut out = String::new();
    writeln!(out, "# structembed {} {command}", env!("CARGO_PKG_VERSION")).unwrap();
    writeln!(out, "# config").unwrap();
    for (k, v) in &cfg.resolved {
        writeln!(out, "{k}={v}").unwrap();
    }
    writeln!(out, "# derived seeds").unwrap();
    for (k, v) in cfg.derived_seeds() {
        writeln!(out, "seed.{k}={v}").unwrap();
    }
    writeln!(out, "# inputs").unwrap();
    for (k, v) in checksums {
        writeln!(out, "sha256.{k}={v}").unwrap();
    }
    writeln!(out, "# stats").unwrap();
    for (k, v) in stats {
        writeln!(out, "stats.{k}={v}").unwrap();
    }
    out
}

fn write_manifest(
    path: &Path,
    command: &str,
    cfg: &PipelineConfig,
    checksums: &[(String, String)],
    stats: &[(String, String)],
) -> Result<(), CliError> {
    fs::write(path, render_manifest(command, cfg, checksums, stats)).map_err(|e| io_err("write", path, e))
}

pub fn affiliations_path(cfg: &PipelineConfig) -> PathBuf {
    cfg.output_dir.join("affiliations.txt")
}

pub fn cmd_communities(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    with_threads(cfg, || {
        let inputs = load_inputs(cfg)?;
        let outcome = detect_communities(cfg, &inputs)?;
        ensure_output_dir(cfg, "write")?;
        let path = affiliations_path(cfg);
        stage("write", outcome.affiliations.export(&path, &inputs.graph))?;
        Ok(path)
    })?
}

pub fn cmd_dump_pairs(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    with_threads(cfg, || {
        let inputs = load_inputs(cfg)?;
        let communities = detect_communities(cfg, &inputs)?;
        let walk_set = walks(cfg, &inputs.graph);
        let pairs = build_pairs(cfg, &inputs.graph, &communities.affiliations, &walk_set)?;
        ensure_output_dir(cfg, "write")?;
        let path = cfg.output_dir.join("pairs.txt");
        stage("write", pairs.table.dump(&path, &inputs.graph))?;
        Ok(path)
    })?
}

pub fn cmd_dump_walks(cfg: &PipelineConfig) -> Result<PathBuf, CliError> {
    with_threads(cfg, || {
        let inputs = load_inputs(cfg)?;
        let walk_set = walks(cfg, &inputs.graph);
        ensure_output_dir(cfg, "write")?;
        let path = cfg.output_dir.join("walks.txt");
        stage("write", dump_walks(&walk_set, &inputs.graph, &path))?;
        Ok(path)
    })?
}

/// Either evaluation result.
#[derive(Debug, Clone)]
pub enum EvalOutcome {
    Classify(EvalReport),
    Reconstruct(ReconstructionReport),
}

/// Paths of the two report files and the result they hold.
pub struct EvalFiles {
    pub table: PathBuf,
    pub records: PathBuf,
    pub outcome: EvalOutcome,
}

/// Read an embedding file, binary when a `.hdr` sidecar is present.
pub fn read_embedding(path: &Path) -> structembed::Result<structembed::io::LabeledEmbeddings> {
    let mut hdr = path.as_os_str().to_owned();
    hdr.push(".hdr");
    if Path::new(&hdr).exists() {
        read_binary(path)
    } else {
        read_text(path)
    }
}

pub fn cmd_eval(cfg: &PipelineConfig) -> Result<EvalFiles, CliError> {
    with_threads(cfg, || eval_inner(cfg))?
}

fn eval_inner(cfg: &PipelineConfig) -> Result<EvalFiles, CliError> {
    let inputs = load_inputs(cfg)?;
    let path = cfg.eval.embedding.clone().unwrap_or_else(|| embedding_path(cfg));
    let file = stage("eval", read_embedding(&path))?;
    if file.matrix.dim() != cfg.train.dim {
        return Err(CliError::Stage {
            stage: "eval",
            source: structembed::Error::DimensionMismatch(format!(
                "{} has {} columns, train.dim is {}",
                path.display(),
                file.matrix.dim(),
                cfg.train.dim
            )),
        });
    }
    let u = stage("eval", file.align_to(&inputs.graph))?;
    let outcome = match cfg.eval.task {
        Task::Classify => {
            let labels = inputs
                .labels
                .as_ref()
                .ok_or_else(|| CliError::Config("classification needs a label file (set labels)".into()))?;
            let report = stage(
                "eval",
                classify_and_score(&u, labels, &cfg.eval.ratios, cfg.eval.repetitions, cfg.eval.seed, &cfg.eval.logreg),
            )?;
            if report.unstratified_splits > 0 {
                log::warn!("{} splits fell back to unstratified sampling", report.unstratified_splits);
            }
            EvalOutcome::Classify(report)
        }
        Task::Reconstruct => EvalOutcome::Reconstruct(stage("eval", reconstruct_and_score(&u, &inputs.graph))?),
    };
    ensure_output_dir(cfg, "write")?;
    let (name, table, records) = render_report(&outcome);
    let table_path = cfg.output_dir.join(format!("report.{name}.txt"));
    let records_path = cfg.output_dir.join(format!("report.{name}.tsv"));
    fs::write(&table_path, table).map_err(|e| io_err("write", &table_path, e))?;
    fs::write(&records_path, records).map_err(|e| io_err("write", &records_path, e))?;
    Ok(EvalFiles {
        table: table_path,
        records: records_path,
        outcome,
    })
}

/// Task name, tabular text and tab-separated records
/// (`task ratio repetition metric value`).
pub fn render_report(outcome: &EvalOutcome) -> (&'static str, String, String) {
    let mut table = String::new();
    let mut records = String::from("task\tratio\trepetition\tmetric\tvalue\n");
    match outcome {
        EvalOutcome::Classify(report) => {
            writeln!(table, "{:>6}  {:>10}  {:>9}  {:>10}  {:>9}", "ratio", "micro_f1", "micro_sd", "macro_f1", "macro_sd")
                .unwrap();
            for s in report.summaries() {
                writeln!(
                    table,
                    "{:>6.2}  {:>10.4}  {:>9.4}  {:>10.4}  {:>9.4}",
                    s.ratio, s.micro_mean, s.micro_std, s.macro_mean, s.macro_std
                )
                .unwrap();
            }
            if report.unstratified_splits > 0 {
                writeln!(table, "unstratified splits: {}", report.unstratified_splits).unwrap();
            }
            for c in &report.cells {
                writeln!(records, "classify\t{}\t{}\tmicro_f1\t{}", c.ratio, c.repetition, c.micro_f1).unwrap();
                writeln!(records, "classify\t{}\t{}\tmacro_f1\t{}", c.ratio, c.repetition, c.macro_f1).unwrap();
            }
            ("classify", table, records)
        }
        EvalOutcome::Reconstruct(r) => {
            writeln!(table, "map               {:.4}", r.map).unwrap();
            writeln!(table, "scored_nodes      {}", r.scored_nodes).unwrap();
            writeln!(table, "skipped_isolated  {}", r.skipped_isolated).unwrap();
            writeln!(records, "reconstruct\t\t0\tmap\t{}", r.map).unwrap();
            ("reconstruct", table, records)
        }
    }
}
