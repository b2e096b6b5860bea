//! Undirected simple graphs in CSR layout with a stable label ↔ index map.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Dense internal node index in `[0, n)`.
pub type NodeId = usize;

/// Cleaning applied by [`load_edge_list`]. With a flag off, the corresponding
/// defect is reported as a parse error instead of being removed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LoadOptions {
    pub deduplicate: bool,
    pub drop_self_loops: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            deduplicate: true,
            drop_self_loops: true,
        }
    }
}

/// Immutable undirected simple graph.
///
/// Neighbor lists are sorted, duplicate-free and contain no self-loops, and
/// `j ∈ neighbors(i)` iff `i ∈ neighbors(j)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<NodeId>,
    labels: Vec<String>,
    index: HashMap<String, NodeId>,
}

impl Graph {
    /// Build from labelled nodes and undirected edges over their indices.
    /// Edges are symmetrized, deduplicated and self-loops dropped.
    pub fn from_parts(labels: Vec<String>, edges: &[(NodeId, NodeId)]) -> Self {
        let n = labels.len();
        let mut deg = vec![0usize; n];
        for &(a, b) in edges {
            assert!(a < n && b < n, "edge ({a}, {b}) out of range for n = {n}");
            if a != b {
                deg[a] += 1;
                deg[b] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for d in &deg {
            offsets.push(offsets.last().unwrap() + d);
        }
        let mut fill = offsets[..n].to_vec();
        let mut targets = vec![0; offsets[n]];
        for &(a, b) in edges {
            if a != b {
                targets[fill[a]] = b;
                fill[a] += 1;
                targets[fill[b]] = a;
                fill[b] += 1;
            }
        }
        // sort + dedup each row, then compact
        let mut compact = Vec::with_capacity(targets.len());
        let mut new_offsets = Vec::with_capacity(n + 1);
        new_offsets.push(0);
        for v in 0..n {
            let row = &mut targets[offsets[v]..offsets[v + 1]];
            row.sort_unstable();
            let start = compact.len();
            for &t in row.iter() {
                if compact.len() == start || *compact.last().unwrap() != t {
                    compact.push(t);
                }
            }
            new_offsets.push(compact.len());
        }
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        Graph {
            offsets: new_offsets,
            targets: compact,
            labels,
            index,
        }
    }

    /// Graph over nodes labelled `"0"`, `"1"`, … `"n-1"`.
    pub fn from_edges(n: usize, edges: &[(NodeId, NodeId)]) -> Self {
        Self::from_parts((0..n).map(|i| i.to_string()).collect(), edges)
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.targets.len() / 2
    }

    #[inline]
    pub fn neighbors(&self, v: NodeId) -> &[NodeId] {
        &self.targets[self.offsets[v]..self.offsets[v + 1]]
    }

    #[inline]
    pub fn degree(&self, v: NodeId) -> usize {
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|v| self.degree(v)).collect()
    }

    #[inline]
    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors(a).binary_search(&b).is_ok()
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`, in ascending order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |a| {
            self.neighbors(a)
                .iter()
                .copied()
                .filter(move |&b| b > a)
                .map(move |b| (a, b))
        })
    }

    pub fn label(&self, v: NodeId) -> &str {
        &self.labels[v]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<NodeId> {
        self.index.get(label).copied()
    }

    /// `2|E| / n`.
    pub fn mean_degree(&self) -> f64 {
        self.targets.len() as f64 / self.num_nodes() as f64
    }

    /// Write one line per undirected edge, using external labels.
    pub fn write_edge_list(&self, path: &Path) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for (a, b) in self.edges() {
            writeln!(out, "{} {}", self.labels[a], self.labels[b]).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

fn is_comment(line: &str) -> bool {
    line.starts_with('#') || line.starts_with('%')
}

/// Read a whitespace-separated edge list. Node labels are arbitrary strings,
/// indexed in first-seen order; tokens after the first two are ignored.
pub fn load_edge_list(path: &Path, options: LoadOptions) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels: Vec<String> = Vec::new();
    let mut index: HashMap<String, NodeId> = HashMap::new();
    let mut edges = Vec::new();
    let mut seen = std::collections::HashSet::new();

    let mut intern = |tok: &str, labels: &mut Vec<String>| -> NodeId {
        if let Some(&i) = index.get(tok) {
            return i;
        }
        let i = labels.len();
        labels.push(tok.to_string());
        index.insert(tok.to_string(), i);
        i
    };

    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || is_comment(line) {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (Some(s), Some(t)) = (toks.next(), toks.next()) else {
            return Err(Error::parse(path, lineno + 1, "expected 'source target'"));
        };
        let a = intern(s, &mut labels);
        let b = intern(t, &mut labels);
        if a == b {
            if options.drop_self_loops {
                continue;
            }
            return Err(Error::parse(path, lineno + 1, format!("self-loop on '{s}'")));
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            if options.deduplicate {
                continue;
            }
            return Err(Error::parse(path, lineno + 1, format!("duplicate edge '{s} {t}'")));
        }
        edges.push(key);
    }
    if edges.is_empty() {
        return Err(Error::EmptyGraph);
    }
    // nodes that only ever appeared in self-loops carry no edges; keep indices
    // dense by re-interning endpoints in first-seen edge order
    let mut used = vec![false; labels.len()];
    for &(a, b) in &edges {
        used[a] = true;
        used[b] = true;
    }
    if used.iter().all(|&u| u) {
        return Ok(Graph::from_parts(labels, &edges));
    }
    let mut remap = vec![usize::MAX; labels.len()];
    let mut kept = Vec::new();
    for (old, label) in labels.into_iter().enumerate() {
        if used[old] {
            remap[old] = kept.len();
            kept.push(label);
        }
    }
    let edges: Vec<_> = edges.iter().map(|&(a, b)| (remap[a], remap[b])).collect();
    Ok(Graph::from_parts(kept, &edges))
}

/// Histogram degree → number of nodes with that degree.
pub fn degree_distribution(graph: &Graph) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for v in 0..graph.num_nodes() {
        *hist.entry(graph.degree(v)).or_insert(0) += 1;
    }
    hist
}

/// Class labels per node. Multi-label nodes are allowed; unlabeled nodes have
/// an empty label set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    labels: Vec<Vec<usize>>,
    class_names: Vec<String>,
    /// Node labels from the file that are not in the graph (only populated
    /// when loading with `allow_unknown`).
    pub skipped: Vec<String>,
}

impl LabelTable {
    /// `labels[v]` holds class indices of node `v`.
    pub fn new(labels: Vec<Vec<usize>>, class_names: Vec<String>) -> Self {
        let mut labels = labels;
        for set in &mut labels {
            set.sort_unstable();
            set.dedup();
            assert!(set.iter().all(|&c| c < class_names.len()));
        }
        LabelTable {
            labels,
            class_names,
            skipped: Vec::new(),
        }
    }

    /// Single-label table from one class per node (`None` = unlabeled).
    pub fn from_classes(classes: &[Option<usize>], num_classes: usize) -> Self {
        Self::new(
            classes.iter().map(|c| c.iter().copied().collect()).collect(),
            (0..num_classes).map(|c| c.to_string()).collect(),
        )
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn classes_of(&self, v: NodeId) -> &[usize] {
        &self.labels[v]
    }

    pub fn class_name(&self, c: usize) -> &str {
        &self.class_names[c]
    }

    /// Indices of nodes with at least one label, ascending.
    pub fn labeled_nodes(&self) -> Vec<NodeId> {
        (0..self.labels.len())
            .filter(|&v| !self.labels[v].is_empty())
            .collect()
    }

    pub fn is_multi_label(&self) -> bool {
        self.labels.iter().any(|l| l.len() > 1)
    }
}

/// Read a `node class` file. Classes are indexed in first-seen order. With
/// `allow_unknown` nodes missing from the graph are collected in
/// [`LabelTable::skipped`]; otherwise they are an error.
pub fn load_labels(path: &Path, graph: &Graph, allow_unknown: bool) -> Result<LabelTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut class_index: HashMap<String, usize> = HashMap::new();
    let mut class_names = Vec::new();
    let mut labels = vec![Vec::new(); graph.num_nodes()];
    let mut skipped = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || is_comment(line) {
            continue;
        }
        let mut toks = line.split_whitespace();
        let (Some(node), Some(class)) = (toks.next(), toks.next()) else {
            return Err(Error::parse(path, lineno + 1, "expected 'node class'"));
        };
        let Some(v) = graph.index_of(node) else {
            if allow_unknown {
                skipped.push(node.to_string());
                continue;
            }
            return Err(Error::UnknownNode(node.to_string()));
        };
        let c = *class_index.entry(class.to_string()).or_insert_with(|| {
            class_names.push(class.to_string());
            class_names.len() - 1
        });
        labels[v].push(c);
    }
    if !skipped.is_empty() {
        log::warn!(
            "{}: {} labelled nodes have no edges and were skipped",
            path.display(),
            skipped.len()
        );
    }
    let mut table = LabelTable::new(labels, class_names);
    table.skipped = skipped;
    Ok(table)
}
