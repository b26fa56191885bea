use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::diffkernel::{Real, Tensor};

/// Which memory modules take part in the forward pass.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Node and graph memory.
    #[default]
    Full,
    /// Decoders read the encoder output directly.
    NoNode,
    /// No graph memory and no approximation term.
    NoGraph,
    /// Plain graph autoencoder.
    GaeOnly,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Full, Variant::NoNode, Variant::NoGraph, Variant::GaeOnly];

    pub fn uses_node_memory(self) -> bool {
        matches!(self, Variant::Full | Variant::NoGraph)
    }

    pub fn uses_graph_memory(self) -> bool {
        matches!(self, Variant::Full | Variant::NoNode)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::NoNode => "no_node",
            Variant::NoGraph => "no_graph",
            Variant::GaeOnly => "gae_only",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| ModelError::Config(format!("unknown variant `{s}`")))
    }
}

/// Architecture and loss settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    /// Output widths of the encoder GCN layers; the last one is the latent
    /// width D.
    pub encoder_dims: Vec<usize>,
    /// Width of the hidden attribute-decoder layer.
    pub decoder_hidden: usize,
    pub n_max: usize,
    /// P, number of node memory blocks.
    pub node_blocks: usize,
    /// Q, number of graph memory blocks.
    pub graph_blocks: usize,
    pub shrink_lambda: f64,
    /// Entropy weight.
    pub alpha: f64,
    pub variant: Variant,
    /// Losses over the full zero-padded matrices instead of the real nodes.
    pub unmasked_losses: bool,
    /// Divide each loss term by its entry count.
    pub normalize_losses: bool,
}

impl ModelConfig {
    pub fn new(input_dim: usize, n_max: usize) -> Self {
        Self {
            input_dim,
            encoder_dims: vec![512, 512, 256],
            decoder_hidden: 256,
            n_max,
            node_blocks: 2,
            graph_blocks: 2,
            shrink_lambda: 0.01,
            alpha: 0.01,
            variant: Variant::Full,
            unmasked_losses: false,
            normalize_losses: false,
        }
    }

    pub fn latent_dim(&self) -> usize {
        *self.encoder_dims.last().expect("validated nonempty")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let positive = [
            ("input_dim", self.input_dim),
            ("decoder_hidden", self.decoder_hidden),
            ("n_max", self.n_max),
            ("node_blocks", self.node_blocks),
            ("graph_blocks", self.graph_blocks),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ModelError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.encoder_dims.is_empty() || self.encoder_dims.contains(&0) {
            return Err(ModelError::Config(
                "encoder_dims must be nonempty and positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.shrink_lambda) {
            return Err(ModelError::Config(format!(
                "shrink_lambda must lie in [0, 1), got {}",
                self.shrink_lambda
            )));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(ModelError::Config(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Learnable tensors. Memory tensors exist only for variants that use them.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub config: ModelConfig,
    /// input_dim×e₁, e₁×e₂, …
    pub encoder: Vec<Tensor<T>>,
    /// D×hidden and hidden×input_dim.
    pub attr_decoder: Vec<Tensor<T>>,
    /// P × n_max × D.
    pub node_memory: Option<Tensor<T>>,
    /// Q × D.
    pub graph_memory: Option<Tensor<T>>,
}

fn glorot<T: Real>(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(rng, &[fan_in, fan_out], bound)
}

fn uniform<T: Real>(rng: &mut ChaCha8Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let len = shape.iter().product();
    let data = (0..len)
        .map(|_| T::of_f64(rng.gen_range(-bound..=bound)))
        .collect();
    Tensor::new(shape.to_vec(), data).expect("positive shape")
}

impl<T: Real> ModelParams<T> {
    /// Glorot-uniform GCN weights; memories uniform in ±1/√D.
    ///
    /// Tensors are drawn in a fixed order (encoder, decoder, node memory,
    /// graph memory) and memories are always drawn, so every variant with
    /// the same seed starts from the same encoder and decoder.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut dims = vec![config.input_dim];
        dims.extend(&config.encoder_dims);
        let encoder = dims.windows(2).map(|w| glorot(&mut rng, w[0], w[1])).collect();
        let d = config.latent_dim();
        let attr_decoder = vec![
            glorot(&mut rng, d, config.decoder_hidden),
            glorot(&mut rng, config.decoder_hidden, config.input_dim),
        ];
        let bound = 1.0 / (d as f64).sqrt();
        let node_memory = uniform(&mut rng, &[config.node_blocks, config.n_max, d], bound);
        let graph_memory = uniform(&mut rng, &[config.graph_blocks, d], bound);
        Ok(Self {
            node_memory: config.variant.uses_node_memory().then_some(node_memory),
            graph_memory: config.variant.uses_graph_memory().then_some(graph_memory),
            config,
            encoder,
            attr_decoder,
        })
    }

    /// Tensors with stable names, in a fixed order.
    pub fn named(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = Vec::new();
        for (i, t) in self.encoder.iter().enumerate() {
            out.push((format!("encoder.{i}"), t));
        }
        for (i, t) in self.attr_decoder.iter().enumerate() {
            out.push((format!("attr_decoder.{i}"), t));
        }
        if let Some(t) = &self.node_memory {
            out.push(("node_memory".into(), t));
        }
        if let Some(t) = &self.graph_memory {
            out.push(("graph_memory".into(), t));
        }
        out
    }

    /// Same order as [`ModelParams::named`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out: Vec<&mut Tensor<T>> = Vec::new();
        out.extend(self.encoder.iter_mut());
        out.extend(self.attr_decoder.iter_mut());
        out.extend(self.node_memory.iter_mut());
        out.extend(self.graph_memory.iter_mut());
        out
    }

    /// Expected shapes, in [`ModelParams::named`] order.
    pub fn expected_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
        let mut dims = vec![config.input_dim];
        dims.extend(&config.encoder_dims);
        let mut out: Vec<(String, Vec<usize>)> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| (format!("encoder.{i}"), vec![w[0], w[1]]))
            .collect();
        let d = config.latent_dim();
        out.push(("attr_decoder.0".into(), vec![d, config.decoder_hidden]));
        out.push((
            "attr_decoder.1".into(),
            vec![config.decoder_hidden, config.input_dim],
        ));
        if config.variant.uses_node_memory() {
            out.push(("node_memory".into(), vec![config.node_blocks, config.n_max, d]));
        }
        if config.variant.uses_graph_memory() {
            out.push(("graph_memory".into(), vec![config.graph_blocks, d]));
        }
        out
    }

    pub fn all_finite(&self) -> bool {
        self.named().iter().all(|(_, t)| t.all_finite())
    }

    pub fn parameter_count(&self) -> usize {
        self.named().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        ModelParams {
            config: self.config.clone(),
            encoder: self.encoder.iter().map(Tensor::cast).collect(),
            attr_decoder: self.attr_decoder.iter().map(Tensor::cast).collect(),
            node_memory: self.node_memory.as_ref().map(Tensor::cast),
            graph_memory: self.graph_memory.as_ref().map(Tensor::cast),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_shapes() {
        let cfg = ModelConfig::new(4, 30);
        let p = ModelParams::<f32>::init(cfg.clone(), 1).unwrap();
        let shapes: Vec<(String, Vec<usize>)> = p
            .named()
            .into_iter()
            .map(|(n, t)| (n, t.shape().to_vec()))
            .collect();
        assert_eq!(shapes, ModelParams::<f32>::expected_shapes(&cfg));
        assert_eq!(shapes[0].1, vec![4, 512]);
        assert_eq!(shapes[1].1, vec![512, 512]);
        assert_eq!(shapes[2].1, vec![512, 256]);
        assert_eq!(shapes[5].1, vec![2, 30, 256]);
        assert!(p.all_finite());
    }

    #[test]
    fn init_bounds() {
        let cfg = ModelConfig::new(3, 10);
        let p = ModelParams::<f64>::init(cfg, 7).unwrap();
        let g = (6.0f64 / (3.0 + 512.0)).sqrt();
        assert!(p.encoder[0].data().iter().all(|v| v.abs() <= g));
        let m = 1.0 / 16.0;
        assert!(p.node_memory.unwrap().data().iter().all(|v| v.abs() <= m));
    }

    #[test]
    fn variants_drop_unused_memories() {
        for v in Variant::ALL {
            let mut cfg = ModelConfig::new(2, 5);
            cfg.variant = v;
            let p = ModelParams::<f32>::init(cfg, 0).unwrap();
            assert_eq!(p.node_memory.is_some(), v.uses_node_memory());
            assert_eq!(p.graph_memory.is_some(), v.uses_graph_memory());
        }
        assert!("no_graph".parse::<Variant>().is_ok());
        assert!("bogus".parse::<Variant>().is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut cfg = ModelConfig::new(2, 5);
        cfg.node_blocks = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::new(2, 5);
        cfg.shrink_lambda = 1.0;
        assert!(cfg.validate().is_err());
        let mut cfg = ModelConfig::new(2, 5);
        cfg.alpha = -0.5;
        assert!(cfg.validate().is_err());
    }
}
