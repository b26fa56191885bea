//! Graph collections: TUDataset ingestion, anomaly labeling, stratified
//! folds, contamination and zero-padded batching.

mod batch;
mod folds;
mod tudataset;

pub use batch::{pad_batch, GraphBatch};
pub use folds::{folds_csv, inject_contamination, label_anomalies, make_folds, FoldSplit};
pub use tudataset::{parse_tudataset, resolve_dataset_dir, write_tudataset};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("missing file {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}:{line}: {message}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        message: String,
    },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One graph: binary symmetric adjacency without self-loops, a real
/// attribute matrix and an anomaly label (1 = anomalous).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    graph_id: usize,
    node_count: usize,
    adjacency: Vec<u8>,
    attributes: Vec<f64>,
    attribute_dim: usize,
    label: u8,
    raw_label: i64,
}

impl Graph {
    /// Builds a graph from a dense row-major adjacency and attribute matrix.
    pub fn new(
        graph_id: usize,
        adjacency: Vec<u8>,
        attributes: Vec<f64>,
        attribute_dim: usize,
        label: u8,
        raw_label: i64,
    ) -> Result<Self, GraphError> {
        let n = (adjacency.len() as f64).sqrt() as usize;
        if n == 0 || n * n != adjacency.len() {
            return Err(GraphError::Structural(format!(
                "graph {graph_id}: adjacency of length {} is not a nonempty square",
                adjacency.len()
            )));
        }
        if attribute_dim == 0 || attributes.len() != n * attribute_dim {
            return Err(GraphError::Structural(format!(
                "graph {graph_id}: expected {n}×{attribute_dim} attributes, got {} values",
                attributes.len()
            )));
        }
        if attributes.iter().any(|v| !v.is_finite()) {
            return Err(GraphError::Structural(format!(
                "graph {graph_id}: non-finite attribute"
            )));
        }
        if label > 1 {
            return Err(GraphError::Structural(format!(
                "graph {graph_id}: label {label} is not 0 or 1"
            )));
        }
        for i in 0..n {
            if adjacency[i * n + i] != 0 {
                return Err(GraphError::Structural(format!(
                    "graph {graph_id}: self-loop on node {i}"
                )));
            }
            for j in 0..n {
                let a = adjacency[i * n + j];
                if a > 1 || a != adjacency[j * n + i] {
                    return Err(GraphError::Structural(format!(
                        "graph {graph_id}: adjacency is not binary and symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self {
            graph_id,
            node_count: n,
            adjacency,
            attributes,
            attribute_dim,
            label,
            raw_label,
        })
    }

    /// Builds a graph from an undirected edge list (0-indexed). Duplicate
    /// and reversed edges collapse; attributes default to node degrees.
    pub fn from_edges(
        graph_id: usize,
        node_count: usize,
        edges: &[(usize, usize)],
        attributes: Option<(Vec<f64>, usize)>,
        label: u8,
    ) -> Result<Self, GraphError> {
        let n = node_count;
        let mut adjacency = vec![0u8; n * n];
        for &(i, j) in edges {
            if i >= n || j >= n {
                return Err(GraphError::Structural(format!(
                    "graph {graph_id}: edge ({i}, {j}) outside {n} nodes"
                )));
            }
            if i != j {
                adjacency[i * n + j] = 1;
                adjacency[j * n + i] = 1;
            }
        }
        let (attrs, d) = match attributes {
            Some(a) => a,
            None => (degrees(&adjacency, n), 1),
        };
        Self::new(graph_id, adjacency, attrs, d, label, i64::from(label))
    }

    pub fn graph_id(&self) -> usize {
        self.graph_id
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn attribute_dim(&self) -> usize {
        self.attribute_dim
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    /// Class value as read from the source file.
    pub fn raw_label(&self) -> i64 {
        self.raw_label
    }

    pub fn adjacency(&self) -> &[u8] {
        &self.adjacency
    }

    pub fn attributes(&self) -> &[f64] {
        &self.attributes
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.adjacency[i * self.node_count + j] == 1
    }

    /// Edges with `i < j`, row-major.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.node_count;
        let mut out = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if self.adjacency[i * n + j] == 1 {
                    out.push((i, j));
                }
            }
        }
        out
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(|&a| a as usize).sum::<usize>() / 2
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.label = label.min(1);
        self
    }

    /// Replaces the attribute matrix by the degree column.
    pub fn with_degree_features(mut self) -> Self {
        self.attributes = degree_features(&self);
        self.attribute_dim = 1;
        self
    }

    /// Relabels nodes: new node `i` is old node `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, GraphError> {
        let n = self.node_count;
        let mut seen = vec![false; n];
        if perm.len() != n
            || perm
                .iter()
                .any(|&p| p >= n || std::mem::replace(&mut seen[p], true))
        {
            return Err(GraphError::Structural("not a permutation".into()));
        }
        let d = self.attribute_dim;
        let mut adjacency = vec![0u8; n * n];
        let mut attributes = vec![0.0; n * d];
        for i in 0..n {
            for j in 0..n {
                adjacency[i * n + j] = self.adjacency[perm[i] * n + perm[j]];
            }
            attributes[i * d..(i + 1) * d].copy_from_slice(&self.attributes[perm[i] * d..(perm[i] + 1) * d]);
        }
        Self::new(
            self.graph_id,
            adjacency,
            attributes,
            d,
            self.label,
            self.raw_label,
        )
    }
}

fn degrees(adjacency: &[u8], n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| (0..n).map(|i| f64::from(adjacency[i * n + j])).sum())
        .collect()
}

/// Node degrees (column sums of the adjacency) as an N×1 matrix.
pub fn degree_features(graph: &Graph) -> Vec<f64> {
    degrees(&graph.adjacency, graph.node_count)
}

/// An ordered, immutable collection of graphs sharing one attribute width.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphDataset {
    name: String,
    graphs: Vec<Graph>,
    attribute_dim: usize,
    n_max: usize,
}

impl GraphDataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>) -> Result<Self, GraphError> {
        let name = name.into();
        let first = graphs
            .first()
            .ok_or_else(|| GraphError::Structural(format!("dataset {name} has no graphs")))?;
        let attribute_dim = first.attribute_dim;
        if let Some(g) = graphs.iter().find(|g| g.attribute_dim != attribute_dim) {
            return Err(GraphError::Structural(format!(
                "graph {} has {} attribute columns, dataset has {attribute_dim}",
                g.graph_id, g.attribute_dim
            )));
        }
        let n_max = graphs.iter().map(|g| g.node_count).max().unwrap_or(0);
        Ok(Self {
            name,
            graphs,
            attribute_dim,
            n_max,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn attribute_dim(&self) -> usize {
        self.attribute_dim
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn anomaly_count(&self) -> usize {
        self.graphs.iter().filter(|g| g.label == 1).count()
    }
}
