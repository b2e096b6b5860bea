//! Embedding files.
//!
//! Text: a header line `n d`, then one line per node, `label v1 … vd`.
//! Binary: a raw little-endian `f64` row-major matrix plus a sidecar
//! `<path>.hdr` holding the shape and the row labels.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::trainer::EmbeddingMatrix;

/// Node labels aligned with the rows of an embedding matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledEmbeddings {
    pub labels: Vec<String>,
    pub matrix: EmbeddingMatrix,
}

impl LabeledEmbeddings {
    /// Rows reordered to the graph's node indices. Every graph node must be
    /// present; extra rows are ignored.
    pub fn align_to(&self, graph: &Graph) -> Result<EmbeddingMatrix> {
        let mut pos = vec![usize::MAX; graph.num_nodes()];
        for (row, label) in self.labels.iter().enumerate() {
            if let Some(v) = graph.index_of(label) {
                pos[v] = row;
            }
        }
        let rows = (0..graph.num_nodes())
            .map(|v| match pos[v] {
                usize::MAX => Err(Error::MissingNode(graph.label(v).to_string())),
                row => Ok(self.matrix.row(row).to_vec()),
            })
            .collect::<Result<Vec<_>>>()?;
        let mut m = EmbeddingMatrix::from_rows(rows);
        if graph.num_nodes() == 0 {
            m = EmbeddingMatrix::zeros(0, self.matrix.dim());
        }
        Ok(m)
    }
}

pub fn write_text(path: &Path, graph: &Graph, u: &EmbeddingMatrix) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(out, "{} {}", u.num_nodes(), u.dim()).map_err(io)?;
    for v in 0..u.num_nodes() {
        write!(out, "{}", graph.label(v)).map_err(io)?;
        for x in u.row(v) {
            write!(out, " {x}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_text(path: &Path) -> Result<LabeledEmbeddings> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (n, d) = match lines.next() {
        Some((_, line)) => {
            let line = line.map_err(|e| Error::io(path, e))?;
            let mut toks = line.split_whitespace().map(str::parse::<usize>);
            match (toks.next(), toks.next(), toks.next()) {
                (Some(Ok(n)), Some(Ok(d)), None) => (n, d),
                _ => return Err(Error::parse(path, 1, "expected header 'n d'")),
            }
        }
        None => return Err(Error::parse(path, 1, "empty embedding file")),
    };
    let mut labels = Vec::with_capacity(n);
    let mut rows = Vec::with_capacity(n);
    for (k, line) in lines {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label = toks.next().unwrap().to_string();
        let row = toks
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, k + 1, format!("bad number '{t}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if row.len() != d {
            return Err(Error::parse(path, k + 1, format!("expected {d} values, found {}", row.len())));
        }
        labels.push(label);
        rows.push(row);
    }
    if rows.len() != n {
        return Err(Error::parse(path, 1, format!("header says {n} rows, found {}", rows.len())));
    }
    let matrix = if n == 0 {
        EmbeddingMatrix::zeros(0, d)
    } else {
        EmbeddingMatrix::from_rows(rows)
    };
    Ok(LabeledEmbeddings { labels, matrix })
}

fn header_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".hdr");
    PathBuf::from(p)
}

pub fn write_binary(path: &Path, graph: &Graph, u: &EmbeddingMatrix) -> Result<()> {
    let bytes: Vec<u8> = u.as_slice().iter().flat_map(|x| x.to_le_bytes()).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))?;
    let hdr = header_path(path);
    let mut text = format!("rows {}\ncols {}\ndtype f64\nendian little\nlabels\n", u.num_nodes(), u.dim());
    for v in 0..u.num_nodes() {
        text.push_str(graph.label(v));
        text.push('\n');
    }
    fs::write(&hdr, text).map_err(|e| Error::io(&hdr, e))
}

pub fn read_binary(path: &Path) -> Result<LabeledEmbeddings> {
    let hdr = header_path(path);
    let text = fs::read_to_string(&hdr).map_err(|e| Error::io(&hdr, e))?;
    let mut lines = text.lines();
    let mut field = |name: &str, line: usize| -> Result<String> {
        lines
            .next()
            .and_then(|l| l.strip_prefix(name))
            .map(|v| v.trim().to_string())
            .ok_or_else(|| Error::parse(&hdr, line, format!("expected '{name}'")))
    };
    let n: usize = field("rows", 1)?.parse().map_err(|_| Error::parse(&hdr, 1, "bad row count"))?;
    let d: usize = field("cols", 2)?.parse().map_err(|_| Error::parse(&hdr, 2, "bad column count"))?;
    if field("dtype", 3)? != "f64" || field("endian", 4)? != "little" || !field("labels", 5)?.is_empty() {
        return Err(Error::parse(&hdr, 3, "unsupported layout"));
    }
    let labels: Vec<String> = lines.map(str::to_string).collect();
    if labels.len() != n {
        return Err(Error::parse(&hdr, 6, format!("expected {n} labels, found {}", labels.len())));
    }
    let mut bytes = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() != n * d * 8 {
        return Err(Error::DimensionMismatch(format!(
            "{} holds {} bytes, header implies {}",
            path.display(),
            bytes.len(),
            n * d * 8
        )));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let matrix = if n == 0 {
        EmbeddingMatrix::zeros(0, d)
    } else {
        EmbeddingMatrix::from_rows(values.chunks(d).map(<[f64]>::to_vec).collect())
    };
    Ok(LabeledEmbeddings { labels, matrix })
}
