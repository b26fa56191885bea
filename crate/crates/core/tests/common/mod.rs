#![allow(dead_code)]

use std::collections::HashSet;

use himnet::diffkernel::Tensor;
use himnet::graph_io::pad_batch;
use himnet::graph_io::{make_folds, Graph, GraphDataset};
use himnet::model::{
    decode_structure, encode, graph_memory_attend, node_memory_attend, ModelConfig, ModelParams,
};
use himnet::train::{run_cv, train, ExperimentConfig, TrainConfig};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

pub fn tensor(shape: Vec<usize>, bound: f64) -> impl Strategy<Value = Tensor<f64>> {
    let len: usize = shape.iter().product();
    prop::collection::vec(-bound..bound, len).prop_map(move |d| Tensor::new(shape.clone(), d).unwrap())
}

pub fn graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (1..=max_nodes)
        .prop_flat_map(|n| (Just(n), prop::collection::vec(any::<bool>(), n * n)))
        .prop_map(|(n, bits)| {
            let edges: Vec<(usize, usize)> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .filter(|&(i, j)| bits[i * n + j])
                .collect();
            Graph::from_edges(0, n, &edges, None, 0).unwrap()
        })
}

pub fn graph_with_perm(max_nodes: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    graph(max_nodes).prop_flat_map(|g| {
        let n = g.node_count();
        (Just(g), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
    })
}

fn simplex(w: &[f64]) -> Result<(), TestCaseError> {
    prop_assert!(w.iter().all(|&x| x >= 0.0), "negative weight in {:?}", w);
    prop_assert!((w.iter().sum::<f64>() - 1.0).abs() <= 1e-6, "weights {:?}", w);
    Ok(())
}

pub fn graph_attention_strategy() -> impl Strategy<Value = (Vec<f64>, Tensor<f64>, f64)> {
    (1usize..=6, 1usize..=8).prop_flat_map(|(q, d)| {
        (
            prop::collection::vec(-2.0..2.0, d),
            tensor(vec![q, d], 1.0),
            0.0..0.5,
        )
    })
}

/// Weights on the simplex; Ĥᵍ inside the per-coordinate hull of the blocks.
pub fn check_graph_attention((h, mem, lambda): (Vec<f64>, Tensor<f64>, f64)) -> Result<(), TestCaseError> {
    let att = graph_memory_attend(&h, &mem, lambda).unwrap();
    simplex(&att.weights)?;
    for c in 0..mem.cols() {
        let col: Vec<f64> = (0..mem.rows()).map(|r| mem.get(r, c)).collect();
        let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let v = att.approximation.data()[c];
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }
    Ok(())
}

pub fn node_attention_strategy() -> impl Strategy<Value = (Tensor<f64>, Tensor<f64>, Vec<bool>, f64)> {
    (1usize..=5, 1usize..=6, 1usize..=4).prop_flat_map(|(p, n, d)| {
        (
            tensor(vec![n, d], 1.0),
            tensor(vec![p, n, d], 1.0),
            (1..=n).prop_map(move |k| (0..n).map(|i| i < k).collect::<Vec<bool>>()),
            0.0..0.5,
        )
    })
}

pub fn check_node_attention(
    (h, mem, mask, lambda): (Tensor<f64>, Tensor<f64>, Vec<bool>, f64),
) -> Result<(), TestCaseError> {
    let att = node_memory_attend(&h, &mem, lambda, &mask).unwrap();
    simplex(&att.weights)?;
    let cols = h.cols();
    for (r, &m) in mask.iter().enumerate() {
        if !m {
            prop_assert!(att.approximation.data()[r * cols..(r + 1) * cols]
                .iter()
                .all(|&v| v == 0.0));
        }
    }
    Ok(())
}

pub fn structure_strategy() -> impl Strategy<Value = Tensor<f64>> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(n, d)| tensor(vec![n, d], 1.0))
}

pub fn check_structure(h: Tensor<f64>) -> Result<(), TestCaseError> {
    let a = decode_structure(&h).unwrap();
    let n = h.rows();
    for i in 0..n {
        for j in 0..n {
            prop_assert_eq!(a.get(i, j), a.get(j, i));
            prop_assert!(a.get(i, j) > 0.0 && a.get(i, j) < 1.0);
        }
    }
    Ok(())
}

/// Encoder at full width in single precision.
pub fn equivariance_params() -> ModelParams<f32> {
    ModelParams::init(ModelConfig::new(1, 10), 17).unwrap()
}

pub fn check_equivariance(
    params: &ModelParams<f32>,
    (g, perm): (Graph, Vec<usize>),
) -> Result<(), TestCaseError> {
    let pg = g.permuted(&perm).unwrap();
    let n_max = params.config.n_max;
    let h = encode(&pad_batch(&[g], n_max).unwrap(), params).unwrap();
    let hp = encode(&pad_batch(&[pg], n_max).unwrap(), params).unwrap();
    let d = params.config.latent_dim();
    for (i, &src) in perm.iter().enumerate() {
        let a = &hp.data()[i * d..(i + 1) * d];
        let b = &h.data()[src * d..(src + 1) * d];
        for (x, y) in a.iter().zip(b) {
            prop_assert!(
                (x - y).abs() <= 1e-5 * y.abs().max(1.0),
                "row {}: {} vs {}",
                i,
                x,
                y
            );
        }
    }
    Ok(())
}

pub fn fold_strategy() -> impl Strategy<Value = (usize, usize, usize, u64)> {
    (2usize..=6).prop_flat_map(|k| (Just(k), k..60usize, k..20usize, any::<u64>()))
}

pub fn labeled_dataset(normals: usize, anomalies: usize) -> GraphDataset {
    let graphs = (0..normals + anomalies)
        .map(|i| Graph::from_edges(i, 2, &[(0, 1)], None, u8::from(i >= normals)).unwrap())
        .collect();
    GraphDataset::new("prop", graphs).unwrap()
}

/// Test folds partition the dataset with balanced sizes; training splits
/// are normal-only and pools anomalous-only.
pub fn check_folds((k, normals, anomalies, seed): (usize, usize, usize, u64)) -> Result<(), TestCaseError> {
    let ds = labeled_dataset(normals, anomalies);
    let folds = make_folds(&ds, k, seed).unwrap();
    prop_assert_eq!(folds.len(), k);
    let mut seen = HashSet::new();
    let total = normals + anomalies;
    for f in &folds {
        prop_assert!(f.test_graphs.len() == total / k || f.test_graphs.len() == total.div_ceil(k));
        for g in &f.test_graphs {
            prop_assert!(
                seen.insert(g.graph_id()),
                "graph {} in two test folds",
                g.graph_id()
            );
        }
        prop_assert!(f.train_graphs.iter().all(|g| g.label() == 0));
        prop_assert!(f.anomaly_pool.iter().all(|g| g.label() == 1));
        prop_assert_eq!(
            f.train_graphs.len() + f.anomaly_pool.len() + f.test_graphs.len(),
            total
        );
        let test_anomalies = f.test_graphs.iter().filter(|g| g.label() == 1).count();
        prop_assert!(test_anomalies == anomalies / k || test_anomalies == anomalies.div_ceil(k));
    }
    prop_assert_eq!(seen.len(), total);
    Ok(())
}

pub fn tiny_train_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 3,
        batch_size: 4,
        encoder_dims: vec![8, 8, 4],
        decoder_hidden: 4,
        learning_rate: 1e-2,
        seed,
        ..TrainConfig::default()
    }
}

/// Same seed, same history, parameters and CV report.
pub fn check_reproducibility(seed: u64) -> Result<(), TestCaseError> {
    let ds = himnet::train::synthetic::density_dataset(12, 6, seed);
    let cfg = tiny_train_config(seed);
    let a = train::<f32>(ds.graphs(), ds.n_max(), &cfg).unwrap();
    let b = train::<f32>(ds.graphs(), ds.n_max(), &cfg).unwrap();
    prop_assert_eq!(&a.history, &b.history);
    prop_assert!(a.params == b.params);
    let exp = ExperimentConfig {
        folds: 3,
        seed,
        ..ExperimentConfig::default()
    };
    let r1 = run_cv(&ds, &cfg, &exp).unwrap();
    let r2 = run_cv(&ds, &cfg, &exp).unwrap();
    prop_assert!(r1.same_results(&r2));
    Ok(())
}
