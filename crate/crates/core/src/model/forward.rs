use crate::diffkernel::{Real, Tape, Tensor, Var};
use crate::graph_io::{Graph, GraphBatch};

use super::{ModelConfig, ModelError, ModelParams};

/// Â = D̃^{-1/2} (A + I) D̃^{-1/2}, with self-loops only on mask-true nodes.
/// Padded rows and columns stay zero.
pub fn normalize_adjacency<T: Real>(adjacency: &Tensor<T>, mask: &[bool]) -> Result<Tensor<T>, ModelError> {
    let n = adjacency.rows();
    if adjacency.cols() != n || mask.len() != n {
        return Err(ModelError::Dimension(format!(
            "adjacency {:?} with mask of length {}",
            adjacency.shape(),
            mask.len()
        )));
    }
    for i in 0..n {
        for j in i + 1..n {
            if adjacency.get(i, j) != adjacency.get(j, i) {
                return Err(ModelError::Asymmetric(i, j));
            }
        }
    }
    let mut tilde = adjacency.clone();
    for (i, &m) in mask.iter().enumerate() {
        if m {
            tilde.set(i, i, tilde.get(i, i) + T::one());
        }
    }
    let inv_sqrt: Vec<T> = (0..n)
        .map(|i| {
            let d: T = tilde.row(i).iter().copied().sum();
            if d > T::zero() {
                T::one() / d.sqrt()
            } else {
                T::zero()
            }
        })
        .collect();
    let cols = n;
    for (i, row) in tilde.data_mut().chunks_mut(cols).enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    Ok(tilde)
}

/// One graph laid out for the forward pass, either at its real size or
/// zero-padded to `n_max` rows with a node mask.
#[derive(Clone, Debug)]
pub struct GraphInput<T> {
    pub adjacency: Tensor<T>,
    pub norm_adjacency: Tensor<T>,
    pub attributes: Tensor<T>,
    pub mask: Vec<bool>,
    pub node_count: usize,
}

impl<T: Real> GraphInput<T> {
    /// Lays `graph` out in `rows ≥ node_count` rows.
    pub fn from_graph(graph: &Graph, rows: usize) -> Result<Self, ModelError> {
        let n = graph.node_count();
        let d = graph.attribute_dim();
        if rows < n {
            return Err(ModelError::Dimension(format!(
                "graph {} has {n} nodes, more than n_max = {rows}",
                graph.graph_id()
            )));
        }
        let mut adjacency = Tensor::zeros(&[rows, rows]);
        let mut attributes = Tensor::zeros(&[rows, d]);
        for i in 0..n {
            for j in 0..n {
                adjacency.set(i, j, T::of_f64(f64::from(graph.adjacency()[i * n + j])));
            }
            for k in 0..d {
                attributes.set(i, k, T::of_f64(graph.attributes()[i * d + k]));
            }
        }
        let mask: Vec<bool> = (0..rows).map(|i| i < n).collect();
        let norm_adjacency = normalize_adjacency(&adjacency, &mask)?;
        Ok(Self {
            adjacency,
            norm_adjacency,
            attributes,
            mask,
            node_count: n,
        })
    }

    /// Graph `b` of a padded batch, at `n_max` rows.
    pub fn from_batch(batch: &GraphBatch, b: usize) -> Result<Self, ModelError> {
        let (m, d) = (batch.n_max, batch.attribute_dim);
        let adjacency = Tensor::new(
            vec![m, m],
            batch.adjacency(b).iter().map(|&v| T::of_f64(v)).collect(),
        )?;
        let attributes = Tensor::new(
            vec![m, d],
            batch.attributes(b).iter().map(|&v| T::of_f64(v)).collect(),
        )?;
        let mask: Vec<bool> = batch.mask(b).iter().map(|&v| v == 1).collect();
        let norm_adjacency = normalize_adjacency(&adjacency, &mask)?;
        Ok(Self {
            adjacency,
            norm_adjacency,
            attributes,
            mask,
            node_count: batch.node_counts[b],
        })
    }

    /// The layout the model trains on: real size, or `n_max` rows when
    /// losses run over padded matrices.
    pub fn for_model(graph: &Graph, config: &ModelConfig) -> Result<Self, ModelError> {
        if graph.node_count() > config.n_max {
            return Err(ModelError::Dimension(format!(
                "graph {} has {} nodes, more than n_max = {}",
                graph.graph_id(),
                graph.node_count(),
                config.n_max
            )));
        }
        let rows = if config.unmasked_losses {
            config.n_max
        } else {
            graph.node_count()
        };
        Self::from_graph(graph, rows)
    }

    pub fn rows(&self) -> usize {
        self.mask.len()
    }

    fn is_padded(&self) -> bool {
        self.node_count < self.rows()
    }
}

/// Parameter leaves on a tape, in [`ModelParams::named`] order.
pub struct ParamVars {
    pub encoder: Vec<Var>,
    pub attr_decoder: Vec<Var>,
    pub node_memory: Option<Var>,
    pub graph_memory: Option<Var>,
}

impl ParamVars {
    pub fn bind<'a, T: Real>(tape: &mut Tape<'a, T>, params: &'a ModelParams<T>) -> Self {
        Self {
            encoder: params.encoder.iter().map(|t| tape.leaf_ref(t)).collect(),
            attr_decoder: params.attr_decoder.iter().map(|t| tape.leaf_ref(t)).collect(),
            node_memory: params.node_memory.as_ref().map(|t| tape.leaf_ref(t)),
            graph_memory: params.graph_memory.as_ref().map(|t| tape.leaf_ref(t)),
        }
    }

    /// Inverse of [`ParamVars::all`].
    pub fn from_vars(vars: &[Var], config: &ModelConfig) -> Self {
        let n_enc = config.encoder_dims.len();
        let mut rest = vars[n_enc + 2..].iter().copied();
        Self {
            encoder: vars[..n_enc].to_vec(),
            attr_decoder: vars[n_enc..n_enc + 2].to_vec(),
            node_memory: config.variant.uses_node_memory().then(|| rest.next()).flatten(),
            graph_memory: config.variant.uses_graph_memory().then(|| rest.next()).flatten(),
        }
    }

    pub fn all(&self) -> Vec<Var> {
        let mut out = self.encoder.clone();
        out.extend(&self.attr_decoder);
        out.extend(self.node_memory);
        out.extend(self.graph_memory);
        out
    }
}

/// Tape handles for one forward pass.
pub struct Forward {
    pub h: Var,
    pub h_graph: Var,
    pub h_hat: Var,
    pub node_weights: Option<Var>,
    pub graph_weights: Option<Var>,
    pub h_graph_hat: Option<Var>,
    pub structure: Var,
    pub attributes: Var,
    pub rec_structure: Var,
    pub rec_attribute: Var,
    pub approximation: Option<Var>,
    pub entropy: Option<Var>,
    /// Reconstruction plus approximation.
    pub score: Var,
    /// Score plus α·entropy.
    pub total: Var,
}

/// `Â · X · W`, multiplied in whichever order is cheaper.
fn propagate<T: Real>(tape: &mut Tape<'_, T>, adj: Var, x: Var, w: Var) -> Result<Var, ModelError> {
    let (d_in, d_out) = {
        let wt = tape.value(w);
        (wt.rows(), wt.cols())
    };
    Ok(if d_in <= d_out {
        let ax = tape.matmul(adj, x)?;
        tape.matmul(ax, w)?
    } else {
        let xw = tape.matmul(x, w)?;
        tape.matmul(adj, xw)?
    })
}

pub(crate) fn encode_on<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &ParamVars,
    adj: Var,
    x: Var,
) -> Result<Var, ModelError> {
    let mut h = x;
    for &w in &vars.encoder {
        let z = propagate(tape, adj, h, w)?;
        h = tape.relu(z);
    }
    Ok(h)
}

/// Cosine → softmax → shrink → weighted sum of `blocks`.
fn attend_on<T: Real>(
    tape: &mut Tape<'_, T>,
    target: Var,
    blocks: &[Var],
    lambda: f64,
) -> Result<(Var, Var), ModelError> {
    let sims = blocks
        .iter()
        .map(|&b| tape.cosine(target, b))
        .collect::<Result<Vec<_>, _>>()?;
    let row = tape.concat(&sims)?;
    let soft = tape.row_softmax(row);
    let weights = tape.hard_shrink(soft, lambda)?;
    let approx = tape.weighted_sum(weights, blocks)?;
    Ok((weights, approx))
}

pub(crate) fn graph_attend_on<T: Real>(
    tape: &mut Tape<'_, T>,
    h_graph: Var,
    memory: Var,
    lambda: f64,
) -> Result<(Var, Var), ModelError> {
    let q = tape.value(memory).rows();
    let blocks = (0..q)
        .map(|i| tape.row_range(memory, i, 1))
        .collect::<Result<Vec<_>, _>>()?;
    attend_on(tape, h_graph, &blocks, lambda)
}

/// Node memory attention. `memory` is P×n_max×D; `h` has `rows ≤ n_max`
/// rows and each block contributes its first `rows` rows, zeroed outside
/// `mask`.
pub(crate) fn node_attend_on<T: Real>(
    tape: &mut Tape<'_, T>,
    h: Var,
    memory: Var,
    mask: &[bool],
    lambda: f64,
) -> Result<(Var, Var), ModelError> {
    let shape = tape.value(memory).shape().to_vec();
    let rows = tape.value(h).rows();
    if shape.len() != 3 || rows > shape[1] || mask.len() != rows {
        return Err(ModelError::Dimension(format!(
            "node memory {shape:?} cannot cover {rows} rows"
        )));
    }
    let padded = mask.iter().any(|&m| !m);
    let mut blocks = Vec::with_capacity(shape[0]);
    for p in 0..shape[0] {
        let b = tape.row_range(memory, p * shape[1], rows)?;
        blocks.push(if padded { tape.mask_rows(b, mask)? } else { b });
    }
    attend_on(tape, h, &blocks, lambda)
}

pub(crate) fn decode_structure_on<T: Real>(tape: &mut Tape<'_, T>, h_hat: Var) -> Result<Var, ModelError> {
    let ht = tape.transpose(h_hat);
    let logits = tape.matmul(h_hat, ht)?;
    Ok(tape.sigmoid(logits))
}

pub(crate) fn decode_attributes_on<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &ParamVars,
    adj: Var,
    h_hat: Var,
) -> Result<Var, ModelError> {
    let z1 = propagate(tape, adj, h_hat, vars.attr_decoder[0])?;
    let x1 = tape.relu(z1);
    propagate(tape, adj, x1, vars.attr_decoder[1])
}

fn pair_mask<T: Real>(mask: &[bool], cols: Option<usize>) -> Tensor<T> {
    let n = mask.len();
    let cols_n = cols.unwrap_or(n);
    let mut m = Tensor::zeros(&[n, cols_n]);
    for i in (0..n).filter(|&i| mask[i]) {
        for (j, &real) in mask
            .iter()
            .chain(std::iter::repeat(&false))
            .take(cols_n)
            .enumerate()
        {
            if cols.is_some() || real {
                m.set(i, j, T::one());
            }
        }
    }
    m
}

/// Runs the model on one graph and records every loss term.
pub fn forward<'a, T: Real>(
    tape: &mut Tape<'a, T>,
    vars: &ParamVars,
    input: &'a GraphInput<T>,
    config: &ModelConfig,
) -> Result<Forward, ModelError> {
    let leaves = InputVars {
        norm_adjacency: tape.leaf_ref(&input.norm_adjacency),
        adjacency: tape.leaf_ref(&input.adjacency),
        attributes: tape.leaf_ref(&input.attributes),
    };
    forward_with(tape, vars, leaves, input, config)
}

/// Graph tensors already on the tape.
#[derive(Clone, Copy, Debug)]
pub struct InputVars {
    pub norm_adjacency: Var,
    pub adjacency: Var,
    pub attributes: Var,
}

/// [`forward`] with the graph tensors supplied as tape variables; `input`
/// only provides the mask and node count.
pub fn forward_with<T: Real>(
    tape: &mut Tape<'_, T>,
    vars: &ParamVars,
    leaves: InputVars,
    input: &GraphInput<T>,
    config: &ModelConfig,
) -> Result<Forward, ModelError> {
    let d = input.attributes.cols();
    if d != config.input_dim {
        return Err(ModelError::Dimension(format!(
            "graph has {d} attribute columns, model expects {}",
            config.input_dim
        )));
    }
    let (adj, a, x) = (leaves.norm_adjacency, leaves.adjacency, leaves.attributes);
    let lambda = config.shrink_lambda;

    let h = encode_on(tape, vars, adj, x)?;
    let h_graph = tape.masked_mean_rows(h, &input.mask)?;

    let (node_weights, h_hat) = match vars.node_memory {
        Some(mem) => {
            let (w, approx) = node_attend_on(tape, h, mem, &input.mask, lambda)?;
            (Some(w), approx)
        }
        None => (None, h),
    };
    let (graph_weights, h_graph_hat) = match vars.graph_memory {
        Some(mem) => {
            let (w, approx) = graph_attend_on(tape, h_graph, mem, lambda)?;
            (Some(w), Some(approx))
        }
        None => (None, None),
    };

    let structure = decode_structure_on(tape, h_hat)?;
    let attributes = decode_attributes_on(tape, vars, adj, h_hat)?;

    let masked = input.is_padded() && !config.unmasked_losses;
    let (s_mask, x_mask) = if masked {
        (
            Some(pair_mask(&input.mask, None)),
            Some(pair_mask(&input.mask, Some(d))),
        )
    } else {
        (None, None)
    };
    let mut rec_structure = tape.frobenius_sq(a, structure, s_mask)?;
    let mut rec_attribute = tape.frobenius_sq(x, attributes, x_mask)?;
    let mut approximation = match h_graph_hat {
        Some(hat) => Some(tape.frobenius_sq(h_graph, hat, None)?),
        None => None,
    };
    if config.normalize_losses {
        let n = if masked { input.node_count } else { input.rows() } as f64;
        rec_structure = tape.scale(rec_structure, T::of_f64(1.0 / (n * n)));
        rec_attribute = tape.scale(rec_attribute, T::of_f64(1.0 / (n * d as f64)));
        approximation = approximation.map(|v| tape.scale(v, T::of_f64(1.0 / config.latent_dim() as f64)));
    }

    let mut score = tape.add(rec_structure, rec_attribute)?;
    if let Some(app) = approximation {
        score = tape.add(score, app)?;
    }

    let entropies: Vec<Var> = node_weights
        .iter()
        .chain(graph_weights.iter())
        .map(|&w| tape.entropy(w))
        .collect();
    let entropy = match entropies.as_slice() {
        [] => None,
        [e] => Some(*e),
        [e1, e2] => Some(tape.add(*e1, *e2)?),
        _ => unreachable!("at most two memory modules"),
    };
    let total = match entropy {
        Some(e) => {
            let weighted = tape.scale(e, T::of_f64(config.alpha));
            tape.add(score, weighted)?
        }
        None => score,
    };

    Ok(Forward {
        h,
        h_graph,
        h_hat,
        node_weights,
        graph_weights,
        h_graph_hat,
        structure,
        attributes,
        rec_structure,
        rec_attribute,
        approximation,
        entropy,
        score,
        total,
    })
}
