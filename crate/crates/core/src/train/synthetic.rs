//! Erdős–Rényi graph collections with degree features.

use std::ops::RangeInclusive;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph_io::{Graph, GraphDataset};

/// G(n, p) with degree features.
pub fn random_graph(
    graph_id: usize,
    node_count: usize,
    edge_prob: f64,
    label: u8,
    rng: &mut impl Rng,
) -> Graph {
    let mut edges = Vec::new();
    for i in 0..node_count {
        for j in i + 1..node_count {
            if rng.gen_bool(edge_prob) {
                edges.push((i, j));
            }
        }
    }
    Graph::from_edges(graph_id, node_count, &edges, None, label).expect("edges within range")
}

/// `count` graphs with ids `first_id..`, node counts uniform in `nodes`.
pub fn random_graphs(
    count: usize,
    edge_prob: f64,
    nodes: RangeInclusive<usize>,
    label: u8,
    first_id: usize,
    seed: u64,
) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let n = rng.gen_range(nodes.clone());
            random_graph(first_id + i, n, edge_prob, label, &mut rng)
        })
        .collect()
}

/// Sparse normal graphs (p = 0.3) against dense anomalies (p = 0.7), 10 to
/// 14 nodes each.
pub fn density_dataset(normals: usize, anomalies: usize, seed: u64) -> GraphDataset {
    let mut graphs = random_graphs(normals, 0.3, 10..=14, 0, 0, seed);
    graphs.extend(random_graphs(
        anomalies,
        0.7,
        10..=14,
        1,
        normals,
        seed.wrapping_add(1),
    ));
    GraphDataset::new("synthetic-density", graphs).expect("nonempty, uniform width")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn density_dataset_shape() {
        let ds = density_dataset(40, 10, 5);
        assert_eq!(ds.len(), 50);
        assert_eq!(ds.anomaly_count(), 10);
        assert_eq!(ds.attribute_dim(), 1);
        assert!(ds.n_max() <= 14);
        let ids: Vec<usize> = ds.graphs().iter().map(Graph::graph_id).collect();
        assert_eq!(ids, (0..50).collect::<Vec<_>>());
        let density = |label: u8| {
            let gs: Vec<&Graph> = ds.graphs().iter().filter(|g| g.label() == label).collect();
            gs.iter()
                .map(|g| {
                    let n = g.node_count() as f64;
                    g.edge_count() as f64 / (n * (n - 1.0) / 2.0)
                })
                .sum::<f64>()
                / gs.len() as f64
        };
        assert!((density(0) - 0.3).abs() < 0.05);
        assert!((density(1) - 0.7).abs() < 0.08);
    }

    #[test]
    fn generator_is_seeded() {
        assert_eq!(
            random_graphs(5, 0.5, 3..=6, 0, 0, 1),
            random_graphs(5, 0.5, 3..=6, 0, 0, 1)
        );
        assert_ne!(
            random_graphs(5, 0.5, 3..=6, 0, 0, 1),
            random_graphs(5, 0.5, 3..=6, 0, 0, 2)
        );
    }
}
