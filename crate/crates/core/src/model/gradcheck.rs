use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{forward, forward_with, GraphInput, InputVars, ModelConfig, ModelError, ModelParams, ParamVars};
use crate::diffkernel::{grad_check_with_fault, suite::KINK_MARGIN, Primitive, Tape};
use crate::graph_io::Graph;

const MAX_DRAWS: u64 = 1000;

/// Worst relative error per parameter tensor over all seeds and layouts.
#[derive(Clone, Debug, Serialize)]
pub struct ModelGradCheck {
    pub tensors: Vec<(String, f64)>,
    pub max_relative_error: f64,
    pub seeds: usize,
}

/// A three-layer model small enough to difference every coordinate, with
/// both memories and a visible entropy term.
pub fn toy_model_config() -> ModelConfig {
    let mut cfg = ModelConfig::new(3, 7);
    cfg.encoder_dims = vec![8, 8, 6];
    cfg.decoder_hidden = 5;
    cfg.node_blocks = 2;
    cfg.graph_blocks = 3;
    cfg.alpha = 0.1;
    cfg
}

/// Random connected 6-node graph with 3 real attributes.
pub fn toy_graph(rng: &mut impl Rng) -> Graph {
    let mut edges: Vec<(usize, usize)> = (1..6).map(|i| (rng.gen_range(0..i), i)).collect();
    for i in 0..6 {
        for j in i + 1..6 {
            if rng.gen_bool(0.3) {
                edges.push((i, j));
            }
        }
    }
    let attrs = (0..18).map(|_| rng.gen_range(-1.0..1.0)).collect();
    Graph::from_edges(0, 6, &edges, Some((attrs, 3)), 0).expect("valid toy graph")
}

fn margins(params: &ModelParams<f64>, input: &GraphInput<f64>) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let vars = ParamVars::bind(&mut tape, params);
    forward(&mut tape, &vars, input, &params.config)?;
    Ok(tape.relu_margin().min(tape.shrink_margin()))
}

/// Differences the training objective on a 6-node toy graph with respect to
/// every parameter tensor, in both the exact-size and the padded layout.
/// Parameters are redrawn until no ReLU input or shrink weight lies within
/// the kink margin.
pub fn check_model_gradients(
    config: &ModelConfig,
    seeds: usize,
    eps: f64,
    fault: Option<Primitive>,
) -> Result<ModelGradCheck, ModelError> {
    let names: Vec<String> = ModelParams::<f64>::expected_shapes(config)
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    let mut worst = vec![0.0f64; names.len()];
    for seed in 0..seeds as u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let graph = toy_graph(&mut rng);
        for rows in [graph.node_count(), config.n_max] {
            let input = GraphInput::<f64>::from_graph(&graph, rows)?;
            let mut params = None;
            for draw in 0..MAX_DRAWS {
                let p = ModelParams::<f64>::init(config.clone(), seed * MAX_DRAWS + draw)?;
                if margins(&p, &input)? > KINK_MARGIN {
                    params = Some(p);
                    break;
                }
            }
            let params =
                params.ok_or_else(|| ModelError::Config(format!("seed {seed}: no draw clear of kinks")))?;
            let inputs: Vec<_> = params.named().into_iter().map(|(_, t)| t.clone()).collect();
            let report = grad_check_with_fault(
                |tape, vars| {
                    let pv = ParamVars::from_vars(vars, config);
                    let leaves = InputVars {
                        norm_adjacency: tape.leaf(input.norm_adjacency.clone()),
                        adjacency: tape.leaf(input.adjacency.clone()),
                        attributes: tape.leaf(input.attributes.clone()),
                    };
                    Ok::<_, ModelError>(forward_with(tape, &pv, leaves, &input, config)?.total)
                },
                &inputs,
                eps,
                fault,
            )?;
            for (w, e) in worst.iter_mut().zip(&report.per_input) {
                *w = w.max(*e);
            }
        }
    }
    Ok(ModelGradCheck {
        max_relative_error: worst.iter().copied().fold(0.0, f64::max),
        tensors: names.into_iter().zip(worst).collect(),
        seeds,
    })
}
