//! Undirected simple graphs in CSR form, plus node features and labels.
//!
//! All text formats are headerless and UTF-8:
//!
//! * edge list: one `u v` pair of non-negative integer ids per line,
//!   separated by whitespace; lines starting with `#` and blank lines are
//!   skipped. Arcs are symmetrized, self-loops and repeated edges dropped.
//!   The node id space is `0..=max_id`, so a self-loop on the largest id is
//!   the way to declare trailing isolated nodes.
//! * features: `node_id,v_1,...,v_f`, exactly one row per node.
//! * labels: `node_id,class_id`, exactly one row per node.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub type NodeId = u32;

/// Immutable undirected graph without self-loops or parallel edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graph {
    offsets: Vec<usize>,
    neighbors: Vec<NodeId>,
}

impl Graph {
    /// Builds a simple undirected graph from arbitrary `(u, v)` pairs.
    ///
    /// Every pair is added in both directions; self-loops and duplicates
    /// are discarded. Panics if an endpoint is `>= num_nodes`.
    pub fn from_edges<I>(num_nodes: usize, edges: I) -> Self
    where
        I: IntoIterator<Item = (NodeId, NodeId)>,
    {
        let mut arcs: Vec<(NodeId, NodeId)> = Vec::new();
        for (u, v) in edges {
            assert!(
                (u as usize) < num_nodes && (v as usize) < num_nodes,
                "edge ({u}, {v}) out of range for {num_nodes} nodes"
            );
            if u != v {
                arcs.push((u, v));
                arcs.push((v, u));
            }
        }
        arcs.sort_unstable();
        arcs.dedup();

        let mut offsets = vec![0usize; num_nodes + 1];
        for &(u, _) in &arcs {
            offsets[u as usize + 1] += 1;
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let neighbors = arcs.into_iter().map(|(_, v)| v).collect();
        Graph { offsets, neighbors }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of undirected edges.
    pub fn num_edges(&self) -> usize {
        self.neighbors.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.num_nodes() == 0
    }

    #[inline]
    pub fn degree(&self, node: usize) -> usize {
        self.offsets[node + 1] - self.offsets[node]
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|i| self.degree(i)).collect()
    }

    /// Sorted neighbor list of `node`.
    #[inline]
    pub fn neighbors(&self, node: usize) -> &[NodeId] {
        &self.neighbors[self.offsets[node]..self.offsets[node + 1]]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.neighbors(u).binary_search(&(v as NodeId)).is_ok()
    }

    /// Each undirected edge once, as `(u, v)` with `u < v`, in CSR order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        (0..self.num_nodes()).flat_map(move |u| {
            self.neighbors(u)
                .iter()
                .filter(move |&&v| (v as usize) > u)
                .map(move |&v| (u as NodeId, v))
        })
    }

    pub(crate) fn check_node(&self, node: usize) -> Result<()> {
        if node < self.num_nodes() {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange {
                node,
                num_nodes: self.num_nodes(),
            })
        }
    }

    /// Full scan of the structural invariants: strictly increasing
    /// neighbor lists, no self-loops, symmetric adjacency.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.num_nodes();
        if self.offsets[0] != 0 || self.offsets[n] != self.neighbors.len() {
            return Err("offsets do not span the neighbor array".into());
        }
        for u in 0..n {
            let nbrs = self.neighbors(u);
            for w in nbrs.windows(2) {
                if w[0] >= w[1] {
                    return Err(format!("neighbor list of {u} is not strictly increasing"));
                }
            }
            for &v in nbrs {
                let v = v as usize;
                if v >= n {
                    return Err(format!("neighbor {v} of {u} out of range"));
                }
                if v == u {
                    return Err(format!("self-loop at {u}"));
                }
                if !self.has_edge(v, u) {
                    return Err(format!("edge {u}-{v} has no reverse"));
                }
            }
        }
        if !self.neighbors.len().is_multiple_of(2) {
            return Err("odd degree sum".into());
        }
        Ok(())
    }

    /// Writes the graph in edge-list format such that
    /// [`load_edge_list`] reproduces it exactly.
    pub fn write_edge_list(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let n = self.num_nodes();
        let write = |out: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(out, "# {} nodes, {} undirected edges", n, self.num_edges())?;
            for (u, v) in self.edges() {
                writeln!(out, "{u} {v}")?;
            }
            // Declares the id space when the largest id has no edge.
            if n > 0 && self.degree(n - 1) == 0 {
                writeln!(out, "{} {}", n - 1, n - 1)?;
            }
            out.flush()
        };
        write(&mut out).map_err(|e| Error::io(path, e))
    }
}

/// Loads an edge list. With `directed_input`, each line is an arc and a
/// reciprocal pair collapses into one undirected edge; otherwise each line
/// is already an undirected edge. The resulting graph is the same either
/// way, only the load statistics logged at debug level differ.
pub fn load_edge_list(path: impl AsRef<Path>, directed_input: bool) -> Result<Graph> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);

    let mut edges: Vec<(NodeId, NodeId)> = Vec::new();
    let mut max_id: Option<NodeId> = None;
    let mut self_loops = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let (Some(a), Some(b), None) = (tokens.next(), tokens.next(), tokens.next()) else {
            return Err(Error::Parse {
                path: path.into(),
                line: line_no,
                message: format!("expected two node ids, got {trimmed:?}"),
            });
        };
        let u = parse_node_id(path, line_no, a)?;
        let v = parse_node_id(path, line_no, b)?;
        if u == v {
            self_loops += 1;
        }
        max_id = Some(max_id.map_or(u.max(v), |m| m.max(u).max(v)));
        edges.push((u, v));
    }

    let num_nodes = max_id.map_or(0, |m| m as usize + 1);
    let lines = edges.len();
    let graph = Graph::from_edges(num_nodes, edges);
    let collapsed = lines - self_loops - graph.num_edges();
    if directed_input {
        log::debug!(
            "{}: {lines} arcs, {self_loops} self-loops dropped, {collapsed} reciprocal or repeated arcs merged",
            path.display()
        );
    } else {
        log::debug!(
            "{}: {lines} edges, {self_loops} self-loops dropped, {collapsed} duplicates dropped",
            path.display()
        );
    }
    Ok(graph)
}

fn parse_node_id(path: &Path, line: usize, token: &str) -> Result<NodeId> {
    if token.is_empty() || !token.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Parse {
            path: path.into(),
            line,
            message: format!("{token:?} is not a non-negative integer node id"),
        });
    }
    // u32::MAX itself is excluded so that `max_id + 1` nodes stay indexable.
    match token.parse::<u64>() {
        Ok(v) if v < NodeId::MAX as u64 => Ok(v as NodeId),
        _ => Err(Error::IdOverflow {
            path: path.into(),
            line,
            value: token.to_string(),
        }),
    }
}

/// Dense row-major `num_nodes x dim` feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    num_nodes: usize,
    dim: usize,
    data: Vec<f64>,
}

impl NodeFeatures {
    /// Panics if `data.len() != num_nodes * dim` or a value is not finite.
    pub fn new(num_nodes: usize, dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), num_nodes * dim, "feature matrix shape");
        assert!(data.iter().all(|x| x.is_finite()), "non-finite feature");
        NodeFeatures {
            num_nodes,
            dim,
            data,
        }
    }

    pub fn zeros(num_nodes: usize, dim: usize) -> Self {
        Self::new(num_nodes, dim, vec![0.0; num_nodes * dim])
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn row(&self, node: usize) -> &[f64] {
        &self.data[node * self.dim..(node + 1) * self.dim]
    }

    #[inline]
    pub fn row_mut(&mut self, node: usize) -> &mut [f64] {
        &mut self.data[node * self.dim..(node + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.dim];
        for i in 0..self.num_nodes {
            for (s, x) in sums.iter_mut().zip(self.row(i)) {
                *s += x;
            }
        }
        sums
    }

    /// Scales every nonzero row to unit Euclidean norm.
    pub fn l2_normalize_rows(&mut self) {
        for i in 0..self.num_nodes {
            let row = self.row_mut(i);
            let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
    }

    /// Keeps the rows of the nodes retained by `mapping`, in new-id order.
    pub fn restrict(&self, mapping: &ComponentMapping) -> Self {
        let mut data = Vec::with_capacity(mapping.new_to_old.len() * self.dim);
        for &old in &mapping.new_to_old {
            data.extend_from_slice(self.row(old as usize));
        }
        Self::new(mapping.new_to_old.len(), self.dim, data)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeLabels {
    labels: Vec<u32>,
    num_classes: usize,
}

impl NodeLabels {
    /// `num_classes` is one more than the largest label.
    pub fn new(labels: Vec<u32>) -> Self {
        let num_classes = labels.iter().max().map_or(0, |&m| m as usize + 1);
        NodeLabels {
            labels,
            num_classes,
        }
    }

    pub fn with_num_classes(labels: Vec<u32>, num_classes: usize) -> Self {
        assert!(labels.iter().all(|&c| (c as usize) < num_classes));
        NodeLabels {
            labels,
            num_classes,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.labels
    }

    #[inline]
    pub fn get(&self, node: usize) -> usize {
        self.labels[node] as usize
    }

    pub fn restrict(&self, mapping: &ComponentMapping) -> Self {
        let labels = mapping
            .new_to_old
            .iter()
            .map(|&old| self.labels[old as usize])
            .collect();
        NodeLabels {
            labels,
            num_classes: self.num_classes,
        }
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file))
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map_or(0, |p| p.line() as usize);
    Error::Parse {
        path: path.into(),
        line,
        message: err.to_string(),
    }
}

fn parse_csv_node(path: &Path, line: usize, field: &str, num_nodes: usize) -> Result<usize> {
    let id: u64 = field.parse().map_err(|_| Error::Parse {
        path: path.into(),
        line,
        message: format!("{field:?} is not a node id"),
    })?;
    if id as usize >= num_nodes || id > usize::MAX as u64 {
        return Err(Error::UnknownNode {
            path: path.into(),
            line,
            id,
            num_nodes,
        });
    }
    Ok(id as usize)
}

/// Loads a headerless `node_id,v_1,...,v_f` CSV with one row per node.
pub fn load_features(path: impl AsRef<Path>, graph: &Graph) -> Result<NodeFeatures> {
    let path = path.as_ref();
    let n = graph.num_nodes();
    let mut reader = csv_reader(path)?;
    let mut dim: Option<usize> = None;
    let mut data: Vec<f64> = Vec::new();
    let mut seen = vec![false; n];
    let mut rows = 0usize;

    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        let id = parse_csv_node(path, line, &record[0], n)?;
        let row_dim = record.len() - 1;
        let dim = *dim.get_or_insert_with(|| {
            data = vec![0.0; n * row_dim];
            row_dim
        });
        if row_dim != dim {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected {dim} feature values, found {row_dim}"),
            });
        }
        if std::mem::replace(&mut seen[id], true) {
            return Err(Error::DuplicateNode {
                path: path.into(),
                line,
                id: id as u64,
            });
        }
        for (col, field) in record.iter().skip(1).enumerate() {
            let value: f64 = field.parse().map_err(|_| Error::Parse {
                path: path.into(),
                line,
                message: format!("{field:?} is not a number"),
            })?;
            if !value.is_finite() {
                return Err(Error::NonFinite {
                    path: path.into(),
                    line,
                    column: col + 2,
                });
            }
            data[id * dim + col] = value;
        }
        rows += 1;
    }

    if rows != n {
        return Err(Error::RowCount {
            path: path.into(),
            expected: n,
            found: rows,
        });
    }
    Ok(NodeFeatures::new(n, dim.unwrap_or(0), data))
}

/// Loads a headerless `node_id,class_id` CSV with one row per node.
pub fn load_labels(path: impl AsRef<Path>, graph: &Graph) -> Result<NodeLabels> {
    let path = path.as_ref();
    let n = graph.num_nodes();
    let mut reader = csv_reader(path)?;
    let mut labels: Vec<Option<u32>> = vec![None; n];

    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 2 {
            return Err(Error::Parse {
                path: path.into(),
                line,
                message: format!("expected node_id,class_id, found {} fields", record.len()),
            });
        }
        let id = parse_csv_node(path, line, &record[0], n)?;
        let class: i64 = record[1].parse().map_err(|_| Error::Parse {
            path: path.into(),
            line,
            message: format!("{:?} is not a class id", &record[1]),
        })?;
        if class < 0 {
            return Err(Error::NegativeClass {
                path: path.into(),
                line,
                value: class,
            });
        }
        let class = u32::try_from(class).map_err(|_| Error::Parse {
            path: path.into(),
            line,
            message: format!("class id {class} too large"),
        })?;
        if labels[id].replace(class).is_some() {
            return Err(Error::DuplicateNode {
                path: path.into(),
                line,
                id: id as u64,
            });
        }
    }

    let labels = labels
        .into_iter()
        .enumerate()
        .map(|(id, l)| {
            l.ok_or(Error::MissingNode {
                path: path.into(),
                id,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(NodeLabels::new(labels))
}

/// Correspondence between original node ids and the compacted ids of an
/// extracted subgraph. New ids follow ascending original id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMapping {
    pub new_to_old: Vec<NodeId>,
    pub old_to_new: Vec<Option<NodeId>>,
}

/// Connected component labels, numbered in order of their smallest node.
pub fn connected_components(graph: &Graph) -> Vec<usize> {
    let n = graph.num_nodes();
    let mut component = vec![usize::MAX; n];
    let mut queue = VecDeque::new();
    let mut next = 0;
    for start in 0..n {
        if component[start] != usize::MAX {
            continue;
        }
        component[start] = next;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in graph.neighbors(u) {
                let v = v as usize;
                if component[v] == usize::MAX {
                    component[v] = next;
                    queue.push_back(v);
                }
            }
        }
        next += 1;
    }
    component
}

/// Extracts the component with the most nodes; among equally large ones the
/// component holding the smallest original id wins.
pub fn largest_connected_component(graph: &Graph) -> Result<(Graph, ComponentMapping)> {
    if graph.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let component = connected_components(graph);
    let count = component.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; count];
    for &c in &component {
        sizes[c] += 1;
    }
    // Components are numbered by smallest member, so the first maximum wins ties.
    let best = (0..count).fold(0, |best, c| if sizes[c] > sizes[best] { c } else { best });

    let n = graph.num_nodes();
    let mut old_to_new = vec![None; n];
    let mut new_to_old = Vec::with_capacity(sizes[best]);
    for old in 0..n {
        if component[old] == best {
            old_to_new[old] = Some(new_to_old.len() as NodeId);
            new_to_old.push(old as NodeId);
        }
    }
    let edges = graph
        .edges()
        .filter_map(|(u, v)| Some((old_to_new[u as usize]?, old_to_new[v as usize]?)));
    let sub = Graph::from_edges(new_to_old.len(), edges);
    Ok((
        sub,
        ComponentMapping {
            new_to_old,
            old_to_new,
        },
    ))
}
