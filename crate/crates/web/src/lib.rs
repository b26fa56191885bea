//! Browser bindings: memory attention explorer, ROC/AUC and a small
//! synthetic train-and-score run. Each export takes plain numbers and
//! returns a JSON string.

use himnet::diffkernel::Tensor;
use himnet::graph_io::Graph;
use himnet::model::graph_memory_attend;
use himnet::train::synthetic::random_graphs;
use himnet::train::{evaluate_auc, train, TrainConfig};
use serde::Serialize;
use wasm_bindgen::prelude::*;

const COSINE_EPS: f64 = 1e-8;

#[derive(Debug, Serialize)]
pub struct Attention {
    pub cosine: Vec<f64>,
    pub softmax: Vec<f64>,
    pub weights: Vec<f64>,
    pub approximation: Vec<f64>,
}

/// Addresses `blocks` memory rows (row-major in `memory`) with `query`.
pub fn memory_attention(
    query: &[f64],
    memory: &[f64],
    blocks: usize,
    lambda: f64,
) -> Result<Attention, String> {
    let d = query.len();
    if d == 0 || blocks == 0 || memory.len() != blocks * d {
        return Err(format!(
            "memory holds {} values, expected {blocks} blocks of width {d}",
            memory.len()
        ));
    }
    let mem = Tensor::new(vec![blocks, d], memory.to_vec()).map_err(|e| e.to_string())?;
    let att = graph_memory_attend(query, &mem, lambda).map_err(|e| e.to_string())?;
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let cosine: Vec<f64> = memory
        .chunks(d)
        .map(|m| {
            let dot: f64 = m.iter().zip(query).map(|(a, b)| a * b).sum();
            dot / (norm(m) * norm(query) + COSINE_EPS)
        })
        .collect();
    let top = cosine.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = cosine.iter().map(|c| (c - top).exp()).collect();
    let total: f64 = exp.iter().sum();
    Ok(Attention {
        softmax: exp.iter().map(|e| e / total).collect(),
        cosine,
        weights: att.weights,
        approximation: att.approximation.data().to_vec(),
    })
}

#[derive(Debug, Serialize)]
pub struct Roc {
    pub auc: f64,
    /// (false positive rate, true positive rate), from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
}

/// ROC curve with tied scores moving diagonally, and the exact AUC.
pub fn roc(scores: &[f64], labels: &[u8]) -> Result<Roc, String> {
    let auc = evaluate_auc(scores, labels).map_err(|e| e.to_string())?;
    let pos = labels.iter().filter(|&&l| l == 1).count() as f64;
    let neg = labels.len() as f64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        points.push((fp / neg, tp / pos));
    }
    Ok(Roc { auc, points })
}

#[derive(Debug, Serialize)]
pub struct DemoRun {
    pub auc: f64,
    pub roc: Vec<(f64, f64)>,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub losses: Vec<f64>,
    pub train_graphs: usize,
}

/// Parameters of [`train_and_score`].
#[derive(Clone, Debug)]
pub struct DemoSpec {
    pub normals: usize,
    pub anomalies: usize,
    pub normal_density: f64,
    pub anomaly_density: f64,
    pub epochs: usize,
    pub node_blocks: usize,
    pub graph_blocks: usize,
    pub seed: u64,
}

/// Trains a narrow model on 70% of the normal graphs and scores the
/// remaining normals against every anomaly.
pub fn train_and_score(demo: &DemoSpec) -> Result<DemoRun, String> {
    for p in [demo.normal_density, demo.anomaly_density] {
        if !(0.0..=1.0).contains(&p) {
            return Err(format!("edge probability {p} outside [0, 1]"));
        }
    }
    let held_out = demo.normals * 3 / 10;
    if demo.anomalies == 0 || held_out == 0 || held_out == demo.normals {
        return Err("need at least one anomaly and four normal graphs".into());
    }
    let normals = random_graphs(demo.normals, demo.normal_density, 8..=12, 0, 0, demo.seed);
    let anomalies = random_graphs(
        demo.anomalies,
        demo.anomaly_density,
        8..=12,
        1,
        demo.normals,
        demo.seed.wrapping_add(1),
    );
    let (test_normals, train_set) = normals.split_at(held_out);
    let test: Vec<Graph> = test_normals.iter().chain(&anomalies).cloned().collect();
    let n_max = normals
        .iter()
        .chain(&anomalies)
        .map(Graph::node_count)
        .max()
        .unwrap_or(1);
    let cfg = TrainConfig {
        epochs: demo.epochs,
        batch_size: 32,
        learning_rate: 5e-3,
        encoder_dims: vec![32, 32, 16],
        decoder_hidden: 16,
        node_blocks: demo.node_blocks,
        graph_blocks: demo.graph_blocks,
        seed: demo.seed,
        ..TrainConfig::default()
    };
    let out = train::<f32>(train_set, n_max, &cfg).map_err(|e| e.to_string())?;
    let scores = himnet::model::score_graphs(&test, &out.params).map_err(|e| e.to_string())?;
    let labels: Vec<u8> = test.iter().map(Graph::label).collect();
    let curve = roc(&scores, &labels)?;
    Ok(DemoRun {
        auc: curve.auc,
        roc: curve.points,
        scores,
        labels,
        losses: out.history.iter().map(|l| l.total).collect(),
        train_graphs: train_set.len(),
    })
}

fn to_js<T: Serialize>(result: Result<T, String>) -> Result<String, JsError> {
    result
        .map(|v| serde_json::to_string(&v).expect("serializable"))
        .map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = memoryAttention)]
pub fn memory_attention_js(
    query: &[f64],
    memory: &[f64],
    blocks: usize,
    lambda: f64,
) -> Result<String, JsError> {
    to_js(memory_attention(query, memory, blocks, lambda))
}

#[wasm_bindgen(js_name = rocCurve)]
pub fn roc_js(scores: &[f64], labels: &[u8]) -> Result<String, JsError> {
    to_js(roc(scores, labels))
}

#[wasm_bindgen(js_name = trainAndScore)]
#[allow(clippy::too_many_arguments)]
pub fn train_and_score_js(
    normals: usize,
    anomalies: usize,
    normal_density: f64,
    anomaly_density: f64,
    epochs: usize,
    node_blocks: usize,
    graph_blocks: usize,
    seed: u32,
) -> Result<String, JsError> {
    to_js(train_and_score(&DemoSpec {
        normals,
        anomalies,
        normal_density,
        anomaly_density,
        epochs,
        node_blocks,
        graph_blocks,
        seed: u64::from(seed),
    }))
}
