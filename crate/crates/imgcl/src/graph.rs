//! Sparse undirected graphs with dense node features.
//!
//! Graphs are immutable after construction: adjacency lives in symmetric CSR
//! form (both directions stored, neighbor lists sorted, no self-loops), node
//! features are a dense row-major `N x d` matrix, and labels are optional.
//! Self-loops enter only through [`Graph::normalized_adjacency`], which builds
//! the renormalized operator `D^{-1/2} (A + I) D^{-1/2}`.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Immutable undirected graph: CSR adjacency, features, optional labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    num_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    features: Array2<f64>,
    labels: Option<Vec<usize>>,
    num_classes: Option<usize>,
}

/// Boolean node selection over a graph with a fixed node count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeMask {
    bits: Vec<bool>,
    count: usize,
}

impl NodeMask {
    pub fn new(bits: Vec<bool>) -> Self {
        let count = bits.iter().filter(|b| **b).count();
        NodeMask { bits, count }
    }

    pub fn full(n: usize) -> Self {
        NodeMask {
            bits: vec![true; n],
            count: n,
        }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; n];
        for &i in indices {
            if i >= n {
                return Err(Error::invalid(format!("mask index {i} out of range for {n} nodes")));
            }
            bits[i] = true;
        }
        Ok(NodeMask::new(bits))
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn is_set(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Selected node ids in increasing order.
    pub fn indices(&self) -> Vec<usize> {
        (0..self.bits.len()).filter(|&i| self.bits[i]).collect()
    }

    pub fn and(&self, other: &NodeMask) -> NodeMask {
        assert_eq!(self.len(), other.len(), "mask length mismatch");
        NodeMask::new(
            self.bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        )
    }
}

/// Sparse symmetric operator in CSR form, as produced by
/// [`Graph::normalized_adjacency`].
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Entries of row `i` as `(column, value)` pairs in column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i)
            .find(|&(c, _)| c == j)
            .map(|(_, v)| v)
            .unwrap_or(0.0)
    }

    /// Dense product `self * rhs`; rows are accumulated in neighbor order so
    /// the result is deterministic for a fixed matrix.
    pub fn mul_dense(&self, rhs: &ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(self.n, rhs.nrows(), "operand row count mismatch");
        let mut out = Array2::<f64>::zeros((self.n, rhs.ncols()));
        for i in 0..self.n {
            let mut row = out.row_mut(i);
            for (j, w) in self.row(i) {
                row.scaled_add(w, &rhs.row(j));
            }
        }
        out
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out[[i, j]] = v;
            }
        }
        out
    }
}

impl Graph {
    /// Builds a graph from an undirected edge list.
    ///
    /// Duplicate edges, reversed duplicates, and self-loops are dropped;
    /// neighbor lists come out sorted. Labels, when given, must cover every
    /// class in `[0, num_classes)` at least once.
    pub fn build(
        num_nodes: usize,
        edges: &[(usize, usize)],
        features: Array2<f64>,
        labels: Option<(Vec<usize>, usize)>,
    ) -> Result<Graph> {
        if features.nrows() != num_nodes {
            return Err(Error::invalid(format!(
                "feature matrix has {} rows, expected {num_nodes}",
                features.nrows()
            )));
        }
        let mut unique: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(Error::invalid(format!(
                    "edge ({u},{v}) endpoint out of range for {num_nodes} nodes"
                )));
            }
            if u == v {
                continue; // self-loops are never stored
            }
            unique.insert((u.min(v), u.max(v)));
        }
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); num_nodes];
        for &(u, v) in &unique {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut row_ptr = Vec::with_capacity(num_nodes + 1);
        let mut col_idx = Vec::with_capacity(2 * unique.len());
        row_ptr.push(0);
        for mut neighbors in adj {
            neighbors.sort_unstable();
            col_idx.extend_from_slice(&neighbors);
            row_ptr.push(col_idx.len());
        }

        let (labels, num_classes) = match labels {
            Some((labels, k)) => {
                Self::validate_labels(&labels, num_nodes, k, true)?;
                (Some(labels), Some(k))
            }
            None => (None, None),
        };

        Ok(Graph {
            num_nodes,
            row_ptr,
            col_idx,
            features,
            labels,
            num_classes,
        })
    }

    fn validate_labels(labels: &[usize], num_nodes: usize, k: usize, require_all: bool) -> Result<()> {
        if labels.len() != num_nodes {
            return Err(Error::invalid(format!(
                "{} labels for {num_nodes} nodes",
                labels.len()
            )));
        }
        if k == 0 {
            return Err(Error::invalid("num_classes must be positive"));
        }
        let mut seen = vec![false; k];
        for &y in labels {
            if y >= k {
                return Err(Error::invalid(format!("label {y} out of range [0, {k})")));
            }
            seen[y] = true;
        }
        if require_all {
            if let Some(missing) = seen.iter().position(|s| !s) {
                return Err(Error::invalid(format!(
                    "class {missing} has no nodes in the full graph"
                )));
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.col_idx.len() / 2
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.num_classes
    }

    pub fn degree(&self, u: usize) -> usize {
        self.row_ptr[u + 1] - self.row_ptr[u]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes).map(|u| self.degree(u)).collect()
    }

    pub fn neighbors(&self, u: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[u]..self.row_ptr[u + 1]]
    }

    /// Undirected edges, each reported once with `u < v`, in sorted order.
    pub fn edge_list(&self) -> Vec<(usize, usize)> {
        let mut edges = Vec::with_capacity(self.num_edges());
        for u in 0..self.num_nodes {
            for &v in self.neighbors(u) {
                if u < v {
                    edges.push((u, v));
                }
            }
        }
        edges
    }

    /// Renormalized adjacency `D^{-1/2} (A + I) D^{-1/2}` where `D` is the
    /// degree matrix of `A + I`. Isolated nodes get a plain unit diagonal.
    pub fn normalized_adjacency(&self) -> SparseMatrix {
        let inv_sqrt: Vec<f64> = (0..self.num_nodes)
            .map(|u| 1.0 / ((self.degree(u) + 1) as f64).sqrt())
            .collect();
        let mut row_ptr = Vec::with_capacity(self.num_nodes + 1);
        let mut col_idx = Vec::with_capacity(self.col_idx.len() + self.num_nodes);
        let mut values = Vec::with_capacity(self.col_idx.len() + self.num_nodes);
        row_ptr.push(0);
        for u in 0..self.num_nodes {
            let mut placed_diag = false;
            for &v in self.neighbors(u) {
                if !placed_diag && v > u {
                    col_idx.push(u);
                    values.push(inv_sqrt[u] * inv_sqrt[u]);
                    placed_diag = true;
                }
                col_idx.push(v);
                values.push(inv_sqrt[u] * inv_sqrt[v]);
            }
            if !placed_diag {
                col_idx.push(u);
                values.push(inv_sqrt[u] * inv_sqrt[u]);
            }
            row_ptr.push(col_idx.len());
        }
        SparseMatrix {
            n: self.num_nodes,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Subgraph induced by the selected nodes. Nodes are reindexed densely in
    /// original order; the returned vector maps new ids to old ids. Labels are
    /// sliced as-is, so a subgraph may lose classes that the full graph had.
    pub fn induced_subgraph(&self, mask: &NodeMask) -> Result<(Graph, Vec<usize>)> {
        if mask.len() != self.num_nodes {
            return Err(Error::invalid(format!(
                "mask length {} does not match {} nodes",
                mask.len(),
                self.num_nodes
            )));
        }
        if mask.count() == 0 {
            return Err(Error::invalid("empty mask"));
        }
        let kept = mask.indices();
        let mut new_id = vec![usize::MAX; self.num_nodes];
        for (new, &old) in kept.iter().enumerate() {
            new_id[old] = new;
        }

        let mut row_ptr = Vec::with_capacity(kept.len() + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for &old in &kept {
            for &v in self.neighbors(old) {
                if new_id[v] != usize::MAX {
                    col_idx.push(new_id[v]);
                }
            }
            row_ptr.push(col_idx.len());
        }

        let mut features = Array2::<f64>::zeros((kept.len(), self.feature_dim()));
        for (new, &old) in kept.iter().enumerate() {
            features.row_mut(new).assign(&self.features.row(old));
        }
        let labels = self
            .labels
            .as_ref()
            .map(|ls| kept.iter().map(|&old| ls[old]).collect());

        Ok((
            Graph {
                num_nodes: kept.len(),
                row_ptr,
                col_idx,
                features,
                labels,
                num_classes: self.num_classes,
            },
            kept,
        ))
    }

    /// Replaces the feature matrix, keeping everything else.
    pub fn with_features(&self, features: Array2<f64>) -> Result<Graph> {
        if features.nrows() != self.num_nodes {
            return Err(Error::invalid("feature row count mismatch"));
        }
        Ok(Graph {
            features,
            ..self.clone()
        })
    }

    /// Rebuilds the graph keeping only the given undirected edges.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Graph> {
        Graph::build(
            self.num_nodes,
            edges,
            self.features.clone(),
            self.labels
                .clone()
                .map(|ls| (ls, self.num_classes.unwrap_or(0))),
        )
    }

    /// Per-class node counts, in class-index order.
    pub fn label_counts(&self) -> Option<Vec<usize>> {
        let labels = self.labels.as_ref()?;
        let k = self.num_classes?;
        let mut counts = vec![0usize; k];
        for &y in labels {
            counts[y] += 1;
        }
        Some(counts)
    }
}

impl fmt::Display for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "graph with {} nodes, {} edges, {}-dim features",
            self.num_nodes,
            self.num_edges(),
            self.feature_dim()
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    num_nodes: usize,
    feature_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
}

/// Writes a graph as a directory: `edges.tsv`, `features.tsv`, optional
/// `labels.tsv`, and `meta.json`.
pub fn save_graph_dir(graph: &Graph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;

    let mut edges = String::new();
    for (u, v) in graph.edge_list() {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    fs::write(dir.join("edges.tsv"), edges)?;

    let mut feats = String::new();
    for (i, row) in graph.features().rows().into_iter().enumerate() {
        feats.push_str(&i.to_string());
        for x in row.iter() {
            feats.push('\t');
            feats.push_str(&format!("{x}"));
        }
        feats.push('\n');
    }
    fs::write(dir.join("features.tsv"), feats)?;

    if let Some(labels) = graph.labels() {
        let mut out = String::new();
        for (i, y) in labels.iter().enumerate() {
            out.push_str(&format!("{i}\t{y}\n"));
        }
        fs::write(dir.join("labels.tsv"), out)?;
    }

    let meta = Meta {
        num_nodes: graph.num_nodes(),
        feature_dim: graph.feature_dim(),
        num_classes: graph.num_classes(),
    };
    let mut f = fs::File::create(dir.join("meta.json"))?;
    serde_json::to_writer_pretty(&mut f, &meta)?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Loads a graph directory written by [`save_graph_dir`], rejecting files
/// that disagree with `meta.json`.
pub fn load_graph_dir(dir: &Path) -> Result<Graph> {
    let meta_path = dir.join("meta.json");
    let meta: Meta = serde_json::from_reader(fs::File::open(&meta_path)?)?;

    let edges_path = dir.join("edges.tsv");
    let mut edges = Vec::new();
    for (lineno, line) in BufReader::new(fs::File::open(&edges_path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let parse = |s: Option<&str>| -> Result<usize> {
            s.and_then(|s| s.parse().ok()).ok_or_else(|| {
                Error::format(
                    edges_path.display().to_string(),
                    format!("line {}: expected \"u<TAB>v\"", lineno + 1),
                )
            })
        };
        let u = parse(parts.next())?;
        let v = parse(parts.next())?;
        edges.push((u, v));
    }

    let feat_path = dir.join("features.tsv");
    let mut rows: Vec<Vec<f64>> = vec![Vec::new(); meta.num_nodes];
    let mut seen = vec![false; meta.num_nodes];
    for (lineno, line) in BufReader::new(fs::File::open(&feat_path)?).lines().enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let id: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| {
                Error::format(
                    feat_path.display().to_string(),
                    format!("line {}: missing node id", lineno + 1),
                )
            })?;
        if id >= meta.num_nodes {
            return Err(Error::format(
                feat_path.display().to_string(),
                format!("node id {id} out of range"),
            ));
        }
        let values: Vec<f64> = parts
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| {
                Error::format(
                    feat_path.display().to_string(),
                    format!("line {}: {e}", lineno + 1),
                )
            })?;
        if values.len() != meta.feature_dim {
            return Err(Error::format(
                feat_path.display().to_string(),
                format!(
                    "line {}: {} values, meta says feature_dim={}",
                    lineno + 1,
                    values.len(),
                    meta.feature_dim
                ),
            ));
        }
        rows[id] = values;
        seen[id] = true;
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::format(
            feat_path.display().to_string(),
            format!("no feature row for node {missing}"),
        ));
    }
    let mut features = Array2::<f64>::zeros((meta.num_nodes, meta.feature_dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, &x) in row.iter().enumerate() {
            features[[i, j]] = x;
        }
    }

    let labels_path = dir.join("labels.tsv");
    let labels = if labels_path.exists() {
        let k = meta.num_classes.ok_or_else(|| {
            Error::format(
                meta_path.display().to_string(),
                "labels.tsv present but meta.json lacks num_classes",
            )
        })?;
        let mut labels = vec![usize::MAX; meta.num_nodes];
        for (lineno, line) in BufReader::new(fs::File::open(&labels_path)?).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split('\t');
            let bad = || {
                Error::format(
                    labels_path.display().to_string(),
                    format!("line {}: expected \"id<TAB>label\"", lineno + 1),
                )
            };
            let id: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let y: usize = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            if id >= meta.num_nodes {
                return Err(Error::format(
                    labels_path.display().to_string(),
                    format!("node id {id} out of range"),
                ));
            }
            labels[id] = y;
        }
        if let Some(missing) = labels.iter().position(|&y| y == usize::MAX) {
            return Err(Error::format(
                labels_path.display().to_string(),
                format!("no label for node {missing}"),
            ));
        }
        Some((labels, k))
    } else {
        None
    };

    Graph::build(meta.num_nodes, &edges, features, labels)
}
