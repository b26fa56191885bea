//! Training, AUC evaluation and the cross-validation experiment drivers.

mod auc;
mod experiment;
mod report;
pub mod synthetic;

pub use auc::evaluate_auc;
pub use experiment::{
    memory_cells, run_ablation, run_contamination_sweep, run_cv, run_memory_sweep, ExperimentConfig,
    MemoryCell,
};
pub use report::{
    loss_history_csv, mean_std, summary_csv, EvalReport, FoldHistory, GraphScore, REPORT_SCHEMA_VERSION,
};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffkernel::{adam_step, AdamConfig, AdamState, Real, Tensor};
use crate::graph_io::{Graph, GraphError};
use crate::model::{loss_and_gradients, GraphInput, ModelConfig, ModelError, ModelParams, Variant};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("non-finite loss at epoch {epoch} on graph {graph_id}: {value}")]
    NonFiniteLoss {
        epoch: usize,
        graph_id: usize,
        value: f64,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("fold {fold}: {source}")]
    Fold {
        fold: usize,
        #[source]
        source: Box<TrainError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<crate::diffkernel::KernelError> for TrainError {
    fn from(e: crate::diffkernel::KernelError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Arithmetic used for training and scoring.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    #[default]
    Single,
    Double,
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::Single => "single",
            Precision::Double => "double",
        })
    }
}

impl FromStr for Precision {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" | "f32" => Ok(Precision::Single),
            "double" | "f64" => Ok(Precision::Double),
            other => Err(TrainError::Config(format!("unknown precision `{other}`"))),
        }
    }
}

/// Optimizer and architecture settings for one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Clamped to the training-set size.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub shrink_lambda: f64,
    pub node_blocks: usize,
    pub graph_blocks: usize,
    pub encoder_dims: Vec<usize>,
    pub decoder_hidden: usize,
    pub seed: u64,
    pub variant: Variant,
    pub unmasked_losses: bool,
    pub normalize_losses: bool,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let m = ModelConfig::new(1, 1);
        Self {
            epochs: 100,
            batch_size: 300,
            learning_rate: 1e-3,
            alpha: m.alpha,
            shrink_lambda: m.shrink_lambda,
            node_blocks: m.node_blocks,
            graph_blocks: m.graph_blocks,
            encoder_dims: m.encoder_dims,
            decoder_hidden: m.decoder_hidden,
            seed: 0,
            variant: Variant::Full,
            unmasked_losses: false,
            normalize_losses: false,
            precision: Precision::Single,
        }
    }
}

impl TrainConfig {
    pub fn model_config(&self, input_dim: usize, n_max: usize) -> ModelConfig {
        ModelConfig {
            input_dim,
            encoder_dims: self.encoder_dims.clone(),
            decoder_hidden: self.decoder_hidden,
            n_max,
            node_blocks: self.node_blocks,
            graph_blocks: self.graph_blocks,
            shrink_lambda: self.shrink_lambda,
            alpha: self.alpha,
            variant: self.variant,
            unmasked_losses: self.unmasked_losses,
            normalize_losses: self.normalize_losses,
        }
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        self.model_config(1, 1).validate()?;
        Ok(())
    }
}

/// Mean per-graph loss terms over one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub total: f64,
    pub rec_structure: f64,
    pub rec_attribute: f64,
    pub approximation: f64,
    pub entropy: f64,
}

pub struct TrainOutput<T> {
    pub params: ModelParams<T>,
    pub history: Vec<EpochLoss>,
}

/// Graphs per parallel gradient chunk. Fixed so the summation order, and
/// with it every bit of the result, does not depend on the thread count.
const CHUNK: usize = 8;

/// Minibatch Adam on the mean per-graph training objective.
///
/// Parameters are initialized from `config.seed`; minibatch order comes
/// from an independent stream of the same seed. Each recorded epoch loss
/// is the mean over all graphs of the loss under the parameters their
/// minibatch saw, before its update.
pub fn train<T: Real>(
    graphs: &[Graph],
    n_max: usize,
    config: &TrainConfig,
) -> Result<TrainOutput<T>, TrainError> {
    config.validate()?;
    let first = graphs.first().ok_or(TrainError::EmptyTrainingSet)?;
    let model = config.model_config(first.attribute_dim(), n_max);
    let mut params = ModelParams::<T>::init(model.clone(), config.seed)?;
    let inputs = graphs
        .iter()
        .map(|g| GraphInput::<T>::for_model(g, &model))
        .collect::<Result<Vec<_>, _>>()?;

    let adam = config.adam();
    let mut states = params
        .named()
        .iter()
        .map(|(_, t)| AdamState::new(t.shape(), adam))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(1);
    let batch = config.batch_size.min(graphs.len());
    let mut order: Vec<usize> = (0..graphs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut sums = EpochLoss {
            epoch,
            ..EpochLoss::default()
        };
        for idx in order.chunks(batch) {
            let chunk_results: Vec<_> = idx
                .par_chunks(CHUNK)
                .map(|part| -> Result<_, TrainError> {
                    let mut acc: Option<Vec<Tensor<T>>> = None;
                    let mut losses = Vec::with_capacity(part.len());
                    for &i in part {
                        let (loss, grads) = loss_and_gradients(&inputs[i], &params)?;
                        if !loss.total.is_finite() {
                            return Err(TrainError::NonFiniteLoss {
                                epoch,
                                graph_id: graphs[i].graph_id(),
                                value: loss.total,
                            });
                        }
                        losses.push(loss);
                        match &mut acc {
                            None => acc = Some(grads),
                            Some(a) => a.iter_mut().zip(&grads).for_each(|(s, g)| s.add_assign(g)),
                        }
                    }
                    Ok((losses, acc.expect("nonempty chunk")))
                })
                .collect();
            let mut total: Option<Vec<Tensor<T>>> = None;
            for r in chunk_results {
                let (losses, grads) = r?;
                for l in losses {
                    sums.total += l.total;
                    sums.rec_structure += l.rec_structure;
                    sums.rec_attribute += l.rec_attribute;
                    sums.approximation += l.approximation;
                    sums.entropy += l.entropy;
                }
                match &mut total {
                    None => total = Some(grads),
                    Some(a) => a.iter_mut().zip(&grads).for_each(|(s, g)| s.add_assign(g)),
                }
            }
            let mut grads = total.expect("nonempty batch");
            let inv = T::of_f64(1.0 / idx.len() as f64);
            for ((param, grad), state) in params.tensors_mut().into_iter().zip(&mut grads).zip(&mut states) {
                grad.scale(inv);
                adam_step(param, grad, state)?;
            }
        }
        let n = graphs.len() as f64;
        sums.total /= n;
        sums.rec_structure /= n;
        sums.rec_attribute /= n;
        sums.approximation /= n;
        sums.entropy /= n;
        history.push(sums);
    }
    if !params.all_finite() {
        return Err(TrainError::NonFiniteLoss {
            epoch: config.epochs,
            graph_id: first.graph_id(),
            value: f64::NAN,
        });
    }
    Ok(TrainOutput { params, history })
}
