use super::{Graph, GraphError};

/// Graphs zero-padded to a common node count.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBatch {
    pub n_max: usize,
    pub attribute_dim: usize,
    /// B × n_max × n_max, row-major.
    pub adjacency_padded: Vec<f64>,
    /// B × n_max × d, row-major.
    pub attributes_padded: Vec<f64>,
    /// B × n_max.
    pub node_mask: Vec<u8>,
    pub node_counts: Vec<usize>,
    pub labels: Vec<u8>,
    pub graph_ids: Vec<usize>,
}

impl GraphBatch {
    pub fn len(&self) -> usize {
        self.node_counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.node_counts.is_empty()
    }

    pub fn adjacency(&self, b: usize) -> &[f64] {
        let s = self.n_max * self.n_max;
        &self.adjacency_padded[b * s..(b + 1) * s]
    }

    pub fn attributes(&self, b: usize) -> &[f64] {
        let s = self.n_max * self.attribute_dim;
        &self.attributes_padded[b * s..(b + 1) * s]
    }

    pub fn mask(&self, b: usize) -> &[u8] {
        &self.node_mask[b * self.n_max..(b + 1) * self.n_max]
    }

    /// The mask-true submatrices of graph `b`: adjacency and attributes.
    pub fn unpadded(&self, b: usize) -> (Vec<u8>, Vec<f64>) {
        let (n, m, d) = (self.node_counts[b], self.n_max, self.attribute_dim);
        let adj = self.adjacency(b);
        let attrs = self.attributes(b);
        let mut a = Vec::with_capacity(n * n);
        let mut x = Vec::with_capacity(n * d);
        for i in 0..n {
            a.extend(adj[i * m..i * m + n].iter().map(|&v| v as u8));
            x.extend_from_slice(&attrs[i * d..(i + 1) * d]);
        }
        (a, x)
    }
}

/// Zero-pads `graphs` (in order) to `n_max` nodes.
pub fn pad_batch(graphs: &[Graph], n_max: usize) -> Result<GraphBatch, GraphError> {
    let d = graphs.first().map_or(1, Graph::attribute_dim);
    let b = graphs.len();
    let mut batch = GraphBatch {
        n_max,
        attribute_dim: d,
        adjacency_padded: vec![0.0; b * n_max * n_max],
        attributes_padded: vec![0.0; b * n_max * d],
        node_mask: vec![0; b * n_max],
        node_counts: Vec::with_capacity(b),
        labels: Vec::with_capacity(b),
        graph_ids: Vec::with_capacity(b),
    };
    for (idx, g) in graphs.iter().enumerate() {
        let n = g.node_count();
        if n > n_max {
            return Err(GraphError::Structural(format!(
                "graph {} has {n} nodes, more than n_max = {n_max}",
                g.graph_id()
            )));
        }
        if g.attribute_dim() != d {
            return Err(GraphError::Structural(format!(
                "graph {} has {} attribute columns, batch has {d}",
                g.graph_id(),
                g.attribute_dim()
            )));
        }
        let a_off = idx * n_max * n_max;
        let x_off = idx * n_max * d;
        for i in 0..n {
            for j in 0..n {
                batch.adjacency_padded[a_off + i * n_max + j] = f64::from(g.adjacency()[i * n + j]);
            }
            batch.attributes_padded[x_off + i * d..x_off + (i + 1) * d]
                .copy_from_slice(&g.attributes()[i * d..(i + 1) * d]);
            batch.node_mask[idx * n_max + i] = 1;
        }
        batch.node_counts.push(n);
        batch.labels.push(g.label());
        batch.graph_ids.push(g.graph_id());
    }
    Ok(batch)
}
