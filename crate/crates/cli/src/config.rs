//! Flat `key=value` pipeline configuration.
//!
//! Values are layered: built-in defaults, then the config file, then
//! command-line overrides. Every key must be known; the resolved map is what
//! the run manifest records.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use structembed::community::BigClamConfig;
use structembed::eval::LogRegConfig;
use structembed::graph::LoadOptions;
use structembed::rng;
use structembed::trainer::{PositiveMode, TrainConfig};
use structembed::walker::WalkConfig;

use crate::CliError;

/// `(key, default, description)` for every recognized key.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("edges", "", "edge list file"),
    ("labels", "", "node label file, optional for embed"),
    ("affiliations", "", "affiliation file for community.strategy=import"),
    ("output_dir", "out", "directory for all outputs"),
    ("seed", "1", "global seed; stage seeds are derived from it"),
    ("threads", "0", "worker threads, 0 = all cores, 1 = deterministic"),
    ("load.deduplicate", "true", "drop repeated edges instead of failing"),
    ("load.drop_self_loops", "true", "drop self-loops instead of failing"),
    ("load.allow_unknown_labels", "true", "skip label lines naming unknown nodes"),
    ("community.strategy", "bigclam", "bigclam, bigclam:m=K, cc, import or import:PATH"),
    ("community.pair_budget", "100000000", "maximum member pairs expanded for H"),
    ("bigclam.m", "auto", "community count; auto = label classes, else ceil(sqrt(n))"),
    ("bigclam.max_iters", "500", "maximum sweeps"),
    ("bigclam.tol", "1e-4", "relative likelihood gain that ends the fit"),
    ("bigclam.step_init", "1", "initial line-search step"),
    ("bigclam.step_backtrack", "0.5", "line-search shrink factor"),
    ("bigclam.max_backtracks", "20", "line-search attempts per row"),
    ("bigclam.threshold", "auto", "membership cutoff; auto = sqrt(-ln(1 - 1/n))"),
    ("bigclam.parallel", "false", "propose row updates in parallel blocks"),
    ("walk.walks_per_node", "10", "walks started from every node"),
    ("walk.walk_length", "80", "nodes per walk"),
    ("walk.window", "5", "co-occurrence window radius"),
    ("walk.p", "1", "return parameter"),
    ("walk.q", "1", "in-out parameter"),
    ("walk.binary", "false", "count each co-occurring pair once"),
    ("train.dim", "128", "embedding dimension"),
    ("train.alpha", "1", "triad weight"),
    ("train.beta", "1", "community weight"),
    ("train.epochs", "5", "passes over the positive samples"),
    ("train.negatives", "5", "negatives per positive sample"),
    ("train.lr_init", "0.025", "initial learning rate"),
    ("train.lr_final", "0.0001", "final learning rate"),
    ("train.sigmoid_clip", "6", "clamp on inner products inside the sigmoid"),
    ("train.mode", "sampled", "sampled (draw pairs by weight) or weighted (weight scales the step)"),
    ("train.samples_per_epoch", "auto", "draws per epoch in sampled mode; auto = total weight"),
    ("train.max_weight", "none", "cap on a single pair's combined weight"),
    ("train.hogwild", "false", "lock-free parallel updates; ignored when threads=1"),
    ("eval.task", "classify", "classify or reconstruct"),
    ("eval.embedding", "", "embedding to evaluate; default is the embed output"),
    ("eval.ratios", "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9", "training ratios"),
    ("eval.repetitions", "5", "random splits per ratio"),
    ("eval.c", "1", "inverse regularization strength"),
    ("eval.max_iters", "200", "Newton iterations per binary model"),
    ("eval.tol", "1e-6", "gradient tolerance"),
    ("output.format", "text", "embedding file format, text or binary"),
];

/// Short flag names accepted on the command line.
const ALIASES: &[(&str, &str)] = &[
    ("task", "eval.task"),
    ("embedding", "eval.embedding"),
    ("out", "output_dir"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Classify,
    Reconstruct,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Binary,
}

/// Community source before the graph is known.
#[derive(Debug, Clone, PartialEq)]
pub enum StrategyChoice {
    /// BIGCLAM with an explicit community count, or auto when `None`.
    BigClam(Option<usize>),
    ConnectedComponents,
    Import(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSettings {
    pub task: Task,
    pub embedding: Option<PathBuf>,
    pub ratios: Vec<f64>,
    pub repetitions: usize,
    pub logreg: LogRegConfig,
    pub seed: u64,
}

/// Fully typed configuration. Stage seeds are derived from `seed`.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub edges: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    /// Used by the bare `import` strategy.
    pub affiliations: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub seed: u64,
    pub threads: usize,
    pub load: LoadOptions,
    pub allow_unknown_labels: bool,
    pub strategy: StrategyChoice,
    pub pair_budget: u64,
    /// `m` is a placeholder until the graph is loaded.
    pub bigclam: BigClamConfig,
    pub walk: WalkConfig,
    pub binary_cooccurrence: bool,
    pub train: TrainConfig,
    pub eval: EvalSettings,
    pub format: Format,
    /// Every key with its resolved string value.
    pub resolved: BTreeMap<String, String>,
}

/// Layered raw values.
#[derive(Debug, Clone)]
pub struct RawConfig {
    values: BTreeMap<String, String>,
}

impl Default for RawConfig {
    fn default() -> Self {
        RawConfig {
            values: KEYS.iter().map(|(k, v, _)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

impl RawConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key, |(_, k)| k);
        if !known(key) {
            return Err(CliError::Config(format!("unknown key '{key}'")));
        }
        self.values.insert(key.to_string(), value.trim().to_string());
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        &self.values[key]
    }

    /// Apply `key=value` lines. Blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (k, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("{origin}:{}: expected key=value", k + 1)))?;
            self.set(key.trim(), value)
                .map_err(|e| CliError::Config(format!("{origin}:{}: {e}", k + 1)))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Apply `--key value` and `--key=value` arguments.
    pub fn apply_flags(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let flag = arg
                .strip_prefix("--")
                .ok_or_else(|| CliError::Config(format!("expected --key, found '{arg}'")))?;
            match flag.split_once('=') {
                Some((key, value)) => self.set(key, value)?,
                None => {
                    let value = it
                        .next()
                        .ok_or_else(|| CliError::Config(format!("--{flag} needs a value")))?;
                    self.set(flag, value)?;
                }
            }
        }
        Ok(())
    }

    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        PipelineConfig::from_raw(self)
    }
}

fn parse<T: FromStr>(raw: &RawConfig, key: &str) -> Result<T, CliError> {
    let v = raw.get(key);
    v.parse()
        .map_err(|_| CliError::Config(format!("{key}: cannot parse '{v}'")))
}

fn parse_bool(raw: &RawConfig, key: &str) -> Result<bool, CliError> {
    match raw.get(key) {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        v => Err(CliError::Config(format!("{key}: expected true or false, found '{v}'"))),
    }
}

fn parse_path(raw: &RawConfig, key: &str) -> Option<PathBuf> {
    Some(raw.get(key)).filter(|v| !v.is_empty()).map(PathBuf::from)
}

/// `None` when the value is one of the `auto` spellings.
fn parse_auto<T: FromStr>(raw: &RawConfig, key: &str, auto: &str) -> Result<Option<T>, CliError> {
    if raw.get(key) == auto {
        Ok(None)
    } else {
        parse(raw, key).map(Some)
    }
}

fn parse_strategy(raw: &RawConfig) -> Result<StrategyChoice, CliError> {
    let s = raw.get("community.strategy");
    let m: Option<usize> = parse_auto(raw, "bigclam.m", "auto")?;
    let bad = || CliError::Config(format!("community.strategy: unknown value '{s}'"));
    Ok(match s {
        "bigclam" => StrategyChoice::BigClam(m),
        "cc" => StrategyChoice::ConnectedComponents,
        "import" => StrategyChoice::Import(
            parse_path(raw, "affiliations")
                .ok_or_else(|| CliError::Config("community.strategy=import needs affiliations".into()))?,
        ),
        _ => {
            if let Some(path) = s.strip_prefix("import:").filter(|p| !p.is_empty()) {
                StrategyChoice::Import(PathBuf::from(path))
            } else if let Some(k) = s.strip_prefix("bigclam:m=") {
                StrategyChoice::BigClam(Some(k.parse().map_err(|_| bad())?))
            } else {
                return Err(bad());
            }
        }
    })
}

impl PipelineConfig {
    fn from_raw(raw: &RawConfig) -> Result<Self, CliError> {
        let seed: u64 = parse(raw, "seed")?;
        let threads: usize = parse(raw, "threads")?;
        let strategy = parse_strategy(raw)?;
        if matches!(strategy, StrategyChoice::BigClam(Some(0))) {
            return Err(CliError::Config("bigclam.m must be >= 1".into()));
        }
        let bigclam = BigClamConfig {
            m: 1,
            max_iters: parse(raw, "bigclam.max_iters")?,
            step_init: parse(raw, "bigclam.step_init")?,
            step_backtrack: parse(raw, "bigclam.step_backtrack")?,
            max_backtracks: parse(raw, "bigclam.max_backtracks")?,
            tol: parse(raw, "bigclam.tol")?,
            threshold: parse_auto(raw, "bigclam.threshold", "auto")?,
            seed: rng::derive(seed, &[2]),
            parallel: parse_bool(raw, "bigclam.parallel")?,
        };
        let walk = WalkConfig {
            walks_per_node: parse(raw, "walk.walks_per_node")?,
            walk_length: parse(raw, "walk.walk_length")?,
            window: parse(raw, "walk.window")?,
            p: parse(raw, "walk.p")?,
            q: parse(raw, "walk.q")?,
            seed: rng::derive(seed, &[1]),
        };
        let mode = match raw.get("train.mode") {
            "sampled" => PositiveMode::Sampled,
            "weighted" => PositiveMode::Weighted,
            v => return Err(CliError::Config(format!("train.mode: expected sampled or weighted, found '{v}'"))),
        };
        let train = TrainConfig {
            dim: parse(raw, "train.dim")?,
            alpha: parse(raw, "train.alpha")?,
            beta: parse(raw, "train.beta")?,
            epochs: parse(raw, "train.epochs")?,
            negatives: parse(raw, "train.negatives")?,
            lr_init: parse(raw, "train.lr_init")?,
            lr_final: parse(raw, "train.lr_final")?,
            sigmoid_clip: parse(raw, "train.sigmoid_clip")?,
            mode,
            samples_per_epoch: parse_auto(raw, "train.samples_per_epoch", "auto")?,
            max_weight: parse_auto(raw, "train.max_weight", "none")?,
            parallel: parse_bool(raw, "train.hogwild")? && threads != 1,
            seed: rng::derive(seed, &[3]),
        };
        let task = match raw.get("eval.task") {
            "classify" => Task::Classify,
            "reconstruct" => Task::Reconstruct,
            v => return Err(CliError::Config(format!("eval.task: expected classify or reconstruct, found '{v}'"))),
        };
        let ratios = raw
            .get("eval.ratios")
            .split(',')
            .map(|r| {
                r.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| *x > 0.0 && *x < 1.0)
                    .ok_or_else(|| CliError::Config(format!("eval.ratios: '{r}' is not a fraction in (0, 1)")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let eval = EvalSettings {
            task,
            embedding: parse_path(raw, "eval.embedding"),
            ratios,
            repetitions: parse(raw, "eval.repetitions")?,
            logreg: LogRegConfig {
                c: parse(raw, "eval.c")?,
                max_iters: parse(raw, "eval.max_iters")?,
                tol: parse(raw, "eval.tol")?,
            },
            seed: rng::derive(seed, &[4]),
        };
        let format = match raw.get("output.format") {
            "text" => Format::Text,
            "binary" => Format::Binary,
            v => return Err(CliError::Config(format!("output.format: expected text or binary, found '{v}'"))),
        };
        let cfg = PipelineConfig {
            edges: parse_path(raw, "edges"),
            labels: parse_path(raw, "labels"),
            affiliations: parse_path(raw, "affiliations"),
            output_dir: PathBuf::from(raw.get("output_dir")),
            seed,
            threads,
            load: LoadOptions {
                deduplicate: parse_bool(raw, "load.deduplicate")?,
                drop_self_loops: parse_bool(raw, "load.drop_self_loops")?,
            },
            allow_unknown_labels: parse_bool(raw, "load.allow_unknown_labels")?,
            strategy,
            pair_budget: parse(raw, "community.pair_budget")?,
            bigclam,
            walk,
            binary_cooccurrence: parse_bool(raw, "walk.binary")?,
            train,
            eval,
            format,
            resolved: raw.values.clone(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let core = |e: structembed::Error| CliError::Config(e.to_string());
        self.walk.validate().map_err(core)?;
        self.train.validate().map_err(core)?;
        let probe = BigClamConfig { m: 1, ..self.bigclam.clone() };
        probe.validate().map_err(core)?;
        if self.eval.repetitions == 0 {
            return Err(CliError::Config("eval.repetitions must be >= 1".into()));
        }
        Ok(())
    }

    /// The edge list path, which every subcommand needs.
    pub fn edges_path(&self) -> Result<&Path, CliError> {
        self.edges
            .as_deref()
            .ok_or_else(|| CliError::Config("no edge list given (set edges)".into()))
    }

    /// Derived stage seeds, for the manifest.
    pub fn derived_seeds(&self) -> [(&'static str, u64); 4] {
        [
            ("walk", self.walk.seed),
            ("bigclam", self.bigclam.seed),
            ("train", self.train.seed),
            ("eval", self.eval.seed),
        ]
    }
}

/// Defaults, then the optional config file, then flags.
pub fn load(config: Option<&Path>, flags: &[String]) -> Result<PipelineConfig, CliError> {
    let mut raw = RawConfig::default();
    if let Some(path) = config {
        raw.apply_file(path)?;
    }
    raw.apply_flags(flags)?;
    raw.resolve()
}
