//! The memory-augmented graph autoencoder: encoder, readout, node and graph
//! memory addressing, decoders, losses and the anomaly score.

mod checkpoint;
mod forward;
mod gradcheck;
mod params;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use forward::{forward, forward_with, normalize_adjacency, Forward, GraphInput, InputVars, ParamVars};
pub use gradcheck::{check_model_gradients, toy_graph, toy_model_config, ModelGradCheck};
pub use params::{ModelConfig, ModelParams, Variant};

use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffkernel::{shrink_weights, KernelError, Real, Tape, Tensor};
use crate::graph_io::{Graph, GraphBatch, GraphError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("adjacency is not symmetric at ({0}, {1})")]
    Asymmetric(usize, usize),
    #[error("checkpoint {}: {message}", path.display())]
    Checkpoint { path: PathBuf, message: String },
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Attention weights over memory blocks and the resulting approximation.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryAttention<T> {
    pub weights: Vec<T>,
    pub approximation: Tensor<T>,
}

/// Per-graph loss terms.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rec_structure: f64,
    pub rec_attribute: f64,
    pub approximation: f64,
    pub entropy: f64,
    pub total: f64,
}

impl LossBreakdown {
    /// Reconstruction plus approximation; the entropy term is left out.
    pub fn score(&self) -> f64 {
        self.rec_structure + self.rec_attribute + self.approximation
    }

    fn read<T: Real>(tape: &Tape<'_, T>, f: &Forward) -> Self {
        let get = |v| tape.scalar(v).as_f64();
        Self {
            rec_structure: get(f.rec_structure),
            rec_attribute: get(f.rec_attribute),
            approximation: f.approximation.map_or(0.0, get),
            entropy: f.entropy.map_or(0.0, get),
            total: get(f.total),
        }
    }
}

/// Encoder output for every graph of a padded batch: B × n_max × D, with
/// padded rows zero.
pub fn encode<T: Real>(batch: &GraphBatch, params: &ModelParams<T>) -> Result<Tensor<T>, ModelError> {
    if batch.attribute_dim != params.config.input_dim {
        return Err(ModelError::Dimension(format!(
            "batch has {} attribute columns, model expects {}",
            batch.attribute_dim, params.config.input_dim
        )));
    }
    let (m, dim) = (batch.n_max, params.config.latent_dim());
    let mut out = Vec::with_capacity(batch.len() * m * dim);
    for b in 0..batch.len() {
        let input = GraphInput::<T>::from_batch(batch, b)?;
        let mut tape = Tape::new();
        let vars = ParamVars::bind(&mut tape, params);
        let adj = tape.leaf_ref(&input.norm_adjacency);
        let x = tape.leaf_ref(&input.attributes);
        let h = forward::encode_on(&mut tape, &vars, adj, x)?;
        let h = tape.mask_rows(h, &input.mask)?;
        out.extend_from_slice(tape.value(h).data());
    }
    Ok(Tensor::new(vec![batch.len(), m, dim], out)?)
}

/// Mean of the mask-true rows of `h`.
pub fn readout<T: Real>(h: &Tensor<T>, mask: &[bool]) -> Result<Vec<T>, ModelError> {
    let mut tape = Tape::new();
    let hv = tape.leaf_ref(h);
    let out = tape.masked_mean_rows(hv, mask)?;
    Ok(tape.value(out).data().to_vec())
}

/// Attention of a graph embedding over Q graph memory blocks (Q×D).
pub fn graph_memory_attend<T: Real>(
    h_graph: &[T],
    graph_memory: &Tensor<T>,
    lambda: f64,
) -> Result<MemoryAttention<T>, ModelError> {
    let target = Tensor::matrix(1, h_graph.len(), h_graph.to_vec())?;
    if graph_memory.cols() != h_graph.len() {
        return Err(ModelError::Dimension(format!(
            "graph memory {:?} against embedding of width {}",
            graph_memory.shape(),
            h_graph.len()
        )));
    }
    let mut tape = Tape::new();
    let t = tape.leaf_ref(&target);
    let mem = tape.leaf_ref(graph_memory);
    let (w, approx) = forward::graph_attend_on(&mut tape, t, mem, lambda)?;
    Ok(MemoryAttention {
        weights: tape.value(w).data().to_vec(),
        approximation: tape.value(approx).clone(),
    })
}

/// Attention of node embeddings (n_max×D) over P node memory blocks
/// (P×n_max×D). Similarity is the cosine of the mask-restricted flattened
/// matrices; padded rows of the approximation are zero.
pub fn node_memory_attend<T: Real>(
    h: &Tensor<T>,
    node_memory: &Tensor<T>,
    lambda: f64,
    mask: &[bool],
) -> Result<MemoryAttention<T>, ModelError> {
    let shape = node_memory.shape();
    if shape.len() != 3 || shape[1] != h.rows() || shape[2] != h.cols() {
        return Err(ModelError::Dimension(format!(
            "node memory {shape:?} against embeddings {:?}",
            h.shape()
        )));
    }
    let mut tape = Tape::new();
    let hv = tape.leaf_ref(h);
    let hv = tape.mask_rows(hv, mask)?;
    let mem = tape.leaf_ref(node_memory);
    let (w, approx) = forward::node_attend_on(&mut tape, hv, mem, mask, lambda)?;
    Ok(MemoryAttention {
        weights: tape.value(w).data().to_vec(),
        approximation: tape.value(approx).clone(),
    })
}

/// Zeroes weights below `lambda` and renormalizes the rest. If every weight
/// falls below `lambda`, the largest (lowest index on ties) is kept at 1.
pub fn hard_shrink<T: Real>(weights: &[T], lambda: f64) -> Result<Vec<T>, ModelError> {
    Ok(shrink_weights(weights, lambda)?.0)
}

/// σ(Ĥ Ĥᵀ).
pub fn decode_structure<T: Real>(h_hat: &Tensor<T>) -> Result<Tensor<T>, ModelError> {
    let mut tape = Tape::new();
    let hv = tape.leaf_ref(h_hat);
    let out = forward::decode_structure_on(&mut tape, hv)?;
    Ok(tape.value(out).clone())
}

/// Â · ReLU(Â Ĥ Θ¹) · Θ².
pub fn decode_attributes<T: Real>(
    h_hat: &Tensor<T>,
    norm_adjacency: &Tensor<T>,
    params: &ModelParams<T>,
) -> Result<Tensor<T>, ModelError> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params);
    let hv = tape.leaf_ref(h_hat);
    let adj = tape.leaf_ref(norm_adjacency);
    let out = forward::decode_attributes_on(&mut tape, &vars, adj, hv)?;
    Ok(tape.value(out).clone())
}

/// All loss terms for one graph.
pub fn compute_losses<T: Real>(graph: &Graph, params: &ModelParams<T>) -> Result<LossBreakdown, ModelError> {
    let input = GraphInput::for_model(graph, &params.config)?;
    compute_losses_prepared(&input, params)
}

pub fn compute_losses_prepared<T: Real>(
    input: &GraphInput<T>,
    params: &ModelParams<T>,
) -> Result<LossBreakdown, ModelError> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params);
    let f = forward(&mut tape, &vars, input, &params.config)?;
    Ok(LossBreakdown::read(&tape, &f))
}

/// Losses and the gradient of the training objective with respect to every
/// parameter tensor, in [`ModelParams::named`] order.
pub fn loss_and_gradients<T: Real>(
    input: &GraphInput<T>,
    params: &ModelParams<T>,
) -> Result<(LossBreakdown, Vec<Tensor<T>>), ModelError> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params);
    let f = forward(&mut tape, &vars, input, &params.config)?;
    let mut grads = tape.backward(f.total)?;
    let out = vars
        .all()
        .into_iter()
        .map(|v| {
            grads
                .take(v)
                .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
        })
        .collect();
    Ok((LossBreakdown::read(&tape, &f), out))
}

/// Reconstruction plus approximation error; higher is more anomalous.
pub fn anomaly_score<T: Real>(graph: &Graph, params: &ModelParams<T>) -> Result<f64, ModelError> {
    Ok(compute_losses(graph, params)?.score())
}

/// Scores graphs in parallel; output order follows `graphs`.
pub fn score_graphs<T: Real>(graphs: &[Graph], params: &ModelParams<T>) -> Result<Vec<f64>, ModelError> {
    graphs.par_iter().map(|g| anomaly_score(g, params)).collect()
}
