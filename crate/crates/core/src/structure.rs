//! Pairwise structural signals: shared triads (T), shared communities (H) and
//! per-community neighbor involvement (S), plus the merged pair table that
//! feeds the trainer.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

/// Sparse symmetric non-negative integer matrix with an empty diagonal,
/// stored once per unordered pair `(i, j)`, `i < j`, sorted.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairCounts {
    entries: Vec<(NodeId, NodeId, u64)>,
}

impl PairCounts {
    /// Build from `(i, j, count)` triples in either orientation. Repeated pairs
    /// are summed, zero counts and self-pairs dropped.
    pub fn from_triples(triples: impl IntoIterator<Item = (NodeId, NodeId, u64)>) -> Self {
        let mut acc: HashMap<(NodeId, NodeId), u64> = HashMap::new();
        for (i, j, c) in triples {
            if i != j && c > 0 {
                *acc.entry((i.min(j), i.max(j))).or_insert(0) += c;
            }
        }
        Self::from_map(acc)
    }

    pub(crate) fn from_map(acc: HashMap<(NodeId, NodeId), u64>) -> Self {
        let mut entries: Vec<_> = acc
            .into_iter()
            .filter(|&(_, c)| c > 0)
            .map(|((i, j), c)| (i, j, c))
            .collect();
        entries.par_sort_unstable();
        PairCounts { entries }
    }

    /// Entries must already be canonical (`i < j`, sorted, unique, non-zero).
    pub(crate) fn from_sorted(entries: Vec<(NodeId, NodeId, u64)>) -> Self {
        debug_assert!(entries.windows(2).all(|w| (w[0].0, w[0].1) < (w[1].0, w[1].1)));
        debug_assert!(entries.iter().all(|&(i, j, c)| i < j && c > 0));
        PairCounts { entries }
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> u64 {
        let key = (i.min(j), i.max(j));
        self.entries
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|k| self.entries[k].2)
            .unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId, u64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn total(&self) -> u64 {
        self.entries.iter().map(|e| e.2).sum()
    }

    /// Same support with every count replaced by 1.
    pub fn to_binary(&self) -> Self {
        PairCounts {
            entries: self.entries.iter().map(|&(i, j, _)| (i, j, 1)).collect(),
        }
    }
}

/// Shared-triad counts `T = A ⊙ A²`: for every edge, the number of common
/// neighbors of its endpoints. Counted by sorted-list intersection per edge.
pub fn compute_triad_matrix(graph: &Graph) -> PairCounts {
    let entries: Vec<_> = (0..graph.num_nodes())
        .into_par_iter()
        .flat_map_iter(|a| {
            let na = graph.neighbors(a);
            na.iter().filter(move |&&b| b > a).filter_map(move |&b| {
                let t = intersection_size(na, graph.neighbors(b));
                (t > 0).then_some((a, b, t as u64))
            })
        })
        .collect();
    PairCounts::from_sorted(entries)
}

/// Size of the intersection of two ascending, duplicate-free slices.
pub fn intersection_size(a: &[NodeId], b: &[NodeId]) -> usize {
    let (mut x, mut y, mut n) = (0, 0, 0);
    while x < a.len() && y < b.len() {
        match a[x].cmp(&b[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                x += 1;
                y += 1;
            }
        }
    }
    n
}

/// Total number of triangles, `Σ_edges T / 3`.
pub fn triangle_count(triads: &PairCounts) -> u64 {
    triads.total() / 3
}

/// Binary node × community membership (the affiliation matrix R).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Affiliations {
    num_nodes: usize,
    communities: Vec<Vec<NodeId>>,
}

impl Affiliations {
    /// Members are sorted and deduplicated. Every community must be non-empty
    /// and every member `< num_nodes`.
    pub fn new(num_nodes: usize, communities: Vec<Vec<NodeId>>) -> Result<Self> {
        let mut communities = communities;
        for (c, members) in communities.iter_mut().enumerate() {
            members.sort_unstable();
            members.dedup();
            if members.is_empty() {
                return Err(Error::DimensionMismatch(format!("community {c} is empty")));
            }
            if let Some(&v) = members.iter().find(|&&v| v >= num_nodes) {
                return Err(Error::DimensionMismatch(format!(
                    "community {c} lists node {v} but the graph has {num_nodes} nodes"
                )));
            }
        }
        Ok(Affiliations {
            num_nodes,
            communities,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    /// Community count m.
    pub fn num_communities(&self) -> usize {
        self.communities.len()
    }

    pub fn members(&self, c: usize) -> &[NodeId] {
        &self.communities[c]
    }

    pub fn communities(&self) -> &[Vec<NodeId>] {
        &self.communities
    }

    /// Communities of each node, ascending.
    pub fn memberships(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes];
        for (c, members) in self.communities.iter().enumerate() {
            for &v in members {
                out[v].push(c);
            }
        }
        out
    }

    /// Read one community per line, members given by external node labels.
    pub fn import(path: &Path, graph: &Graph) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut communities = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with('%') {
                continue;
            }
            let members = line
                .split_whitespace()
                .map(|tok| {
                    graph.index_of(tok).ok_or_else(|| Error::ImportFormat {
                        path: path.to_path_buf(),
                        line: lineno + 1,
                        msg: format!("unknown node '{tok}'"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            communities.push(members);
        }
        Affiliations::new(graph.num_nodes(), communities)
    }

    /// Canonical form: one line per community in stored order, members by
    /// ascending internal index, single-space separated.
    pub fn export(&self, path: &Path, graph: &Graph) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for members in &self.communities {
            let line: Vec<&str> = members.iter().map(|&v| graph.label(v)).collect();
            writeln!(out, "{}", line.join(" ")).map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

/// `S = A·R`: entry `(j, c)` counts the neighbors of node `j` inside community
/// `c`. Stored row-sparse.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvolvementMatrix {
    num_communities: usize,
    rows: Vec<Vec<(usize, u64)>>,
}

impl InvolvementMatrix {
    pub fn get(&self, node: NodeId, community: usize) -> u64 {
        let row = &self.rows[node];
        row.binary_search_by_key(&community, |e| e.0)
            .map(|k| row[k].1)
            .unwrap_or(0)
    }

    /// Non-zero `(community, count)` entries of a node, ascending by community.
    pub fn row(&self, node: NodeId) -> &[(usize, u64)] {
        &self.rows[node]
    }

    pub fn num_nodes(&self) -> usize {
        self.rows.len()
    }

    pub fn num_communities(&self) -> usize {
        self.num_communities
    }

    /// Build from explicit rows; entries are sorted and zero entries dropped.
    pub fn from_rows(num_communities: usize, rows: Vec<Vec<(usize, u64)>>) -> Self {
        let rows = rows
            .into_iter()
            .map(|mut r| {
                r.retain(|e| e.1 > 0);
                r.sort_unstable();
                assert!(r.iter().all(|e| e.0 < num_communities));
                r
            })
            .collect();
        InvolvementMatrix {
            num_communities,
            rows,
        }
    }
}

pub fn compute_involvement(graph: &Graph, aff: &Affiliations) -> Result<InvolvementMatrix> {
    if aff.num_nodes() != graph.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "affiliations cover {} nodes, graph has {}",
            aff.num_nodes(),
            graph.num_nodes()
        )));
    }
    let memberships = aff.memberships();
    let rows = (0..graph.num_nodes())
        .into_par_iter()
        .map(|j| {
            let mut counts: Vec<usize> = graph
                .neighbors(j)
                .iter()
                .flat_map(|&u| memberships[u].iter().copied())
                .collect();
            counts.sort_unstable();
            let mut row: Vec<(usize, u64)> = Vec::new();
            for c in counts {
                match row.last_mut() {
                    Some(last) if last.0 == c => last.1 += 1,
                    _ => row.push((c, 1)),
                }
            }
            row
        })
        .collect();
    Ok(InvolvementMatrix {
        num_communities: aff.num_communities(),
        rows,
    })
}

/// Empirical node-given-community and community-given-node distributions
/// obtained by normalizing S by column and by row. Diagnostic only.
#[derive(Debug, Clone)]
pub struct Conditionals {
    /// Per community, `(node, S[node,c] / Σ_k S[k,c])`.
    pub node_given_community: Vec<Vec<(NodeId, f64)>>,
    /// Per node, `(community, S[node,c] / Σ_k S[node,k])`.
    pub community_given_node: Vec<Vec<(usize, f64)>>,
    /// Communities whose column of S is all zero.
    pub empty_columns: usize,
    /// Nodes whose row of S is all zero.
    pub empty_rows: usize,
}

pub fn empirical_conditionals(s: &InvolvementMatrix) -> Conditionals {
    let m = s.num_communities();
    let mut col_sums = vec![0u64; m];
    let mut columns: Vec<Vec<(NodeId, f64)>> = vec![Vec::new(); m];
    for v in 0..s.num_nodes() {
        for &(c, x) in s.row(v) {
            col_sums[c] += x;
            columns[c].push((v, x as f64));
        }
    }
    for (col, &sum) in columns.iter_mut().zip(&col_sums) {
        for e in col.iter_mut() {
            e.1 /= sum as f64;
        }
    }
    let mut empty_rows = 0;
    let rows = (0..s.num_nodes())
        .map(|v| {
            let row = s.row(v);
            let sum: u64 = row.iter().map(|e| e.1).sum();
            if sum == 0 {
                empty_rows += 1;
            }
            row.iter().map(|&(c, x)| (c, x as f64 / sum as f64)).collect()
        })
        .collect();
    let empty_columns = col_sums.iter().filter(|&&s| s == 0).count();
    if empty_columns + empty_rows > 0 {
        log::warn!(
            "involvement matrix has {empty_columns} empty columns and {empty_rows} empty rows"
        );
    }
    Conditionals {
        node_given_community: columns,
        community_given_node: rows,
        empty_columns,
        empty_rows,
    }
}

/// Default pair budget for [`compute_community_overlap`].
pub const DEFAULT_PAIR_BUDGET: u64 = 100_000_000;

/// `H = R·Rᵀ` off the diagonal: for each pair of nodes, the number of
/// communities they share. Expanded community by community.
pub fn compute_community_overlap(aff: &Affiliations, pair_budget: u64) -> Result<PairCounts> {
    for (c, members) in aff.communities().iter().enumerate() {
        let k = members.len() as u64;
        let pairs = k * k.saturating_sub(1) / 2;
        if pairs > pair_budget {
            return Err(Error::CommunityTooLarge {
                community: c,
                pairs,
                budget: pair_budget,
            });
        }
    }
    let mut acc: HashMap<(NodeId, NodeId), u64> = HashMap::new();
    for members in aff.communities() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                *acc.entry((i, j)).or_insert(0) += 1;
            }
        }
    }
    Ok(PairCounts::from_map(acc))
}

/// Triad, community and co-occurrence counts of one node pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PairWeight {
    pub t: u64,
    pub h: u64,
    pub w: u64,
}

/// Union of T, H and W over unordered pairs, sorted by `(i, j)`, `i < j`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairWeightTable {
    entries: Vec<(NodeId, NodeId, PairWeight)>,
}

impl PairWeightTable {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, NodeId, PairWeight)> + '_ {
        self.entries.iter().copied()
    }

    pub fn get(&self, i: NodeId, j: NodeId) -> PairWeight {
        let key = (i.min(j), i.max(j));
        self.entries
            .binary_search_by(|&(a, b, _)| (a, b).cmp(&key))
            .map(|k| self.entries[k].2)
            .unwrap_or_default()
    }

    /// Write `i j t h w` lines using external node labels.
    pub fn dump(&self, path: &Path, graph: &Graph) -> Result<()> {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        for &(i, j, pw) in &self.entries {
            writeln!(
                out,
                "{} {} {} {} {}",
                graph.label(i),
                graph.label(j),
                pw.t,
                pw.h,
                pw.w
            )
            .map_err(|e| Error::io(path, e))?;
        }
        out.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn merge_pair_weights(t: &PairCounts, h: &PairCounts, w: &PairCounts) -> PairWeightTable {
    // three-way merge of sorted lists
    let mut entries: Vec<(NodeId, NodeId, PairWeight)> =
        Vec::with_capacity(t.len().max(h.len()).max(w.len()));
    let (mut a, mut b, mut c) = (t.iter().peekable(), h.iter().peekable(), w.iter().peekable());
    loop {
        let next = [a.peek(), b.peek(), c.peek()]
            .into_iter()
            .flatten()
            .map(|&(i, j, _)| (i, j))
            .min();
        let Some(key) = next else { break };
        let mut pw = PairWeight::default();
        if let Some(&(i, j, x)) = a.peek() {
            if (i, j) == key {
                pw.t = x;
                a.next();
            }
        }
        if let Some(&(i, j, x)) = b.peek() {
            if (i, j) == key {
                pw.h = x;
                b.next();
            }
        }
        if let Some(&(i, j, x)) = c.peek() {
            if (i, j) == key {
                pw.w = x;
                c.next();
            }
        }
        entries.push((key.0, key.1, pw));
    }
    PairWeightTable { entries }
}
