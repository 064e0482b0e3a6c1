//! Toy-scale sleep stagers: an epoch `[T × C]` goes in, class logits and the
//! pooled pre-classifier feature vector come out.

mod checkpoint;
mod cnn;
mod transformer;

use std::path::Path;

use ndarray::{Array2, ArrayView3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::NUM_STAGES;
use crate::error::{Error, Result};
use crate::nn::{Act, Grads, Linear, ParamSet, Scalar};

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, Checkpoint};
use cnn::{CnnBody, CnnTape};
use transformer::{TransformerBody, TransformerTape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Arch {
    Cnn,
    Transformer,
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cnn" => Ok(Arch::Cnn),
            "transformer" => Ok(Arch::Transformer),
            other => Err(Error::InvalidConfig(format!("unknown arch {other:?}"))),
        }
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Arch::Cnn => "cnn",
            Arch::Transformer => "transformer",
        })
    }
}

/// Hyperparameters that fully determine a stager's parameter shapes.
///
/// The first convolution is a patchifying stem with kernel = stride =
/// `stem_stride`. For the CNN, each entry of `widths` is a conv + ReLU +
/// max-pool block and a final conv produces `feature_dim` channels. For the
/// transformer, `widths[0]` is the stem width, a strided conv of size
/// `pool_size` produces `feature_dim`-wide tokens, and `depth` pre-norm
/// encoder blocks with `heads` heads follow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub arch: Arch,
    pub in_channels: usize,
    pub epoch_samples: usize,
    pub feature_dim: usize,
    pub widths: Vec<usize>,
    pub stem_stride: usize,
    pub kernel_size: usize,
    pub pool_size: usize,
    pub heads: usize,
    pub depth: usize,
    /// Layer-normalise the pooled CNN feature vector.
    pub feature_norm: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            arch: Arch::Cnn,
            in_channels: 3,
            epoch_samples: 3000,
            feature_dim: 64,
            widths: vec![16, 32],
            stem_stride: 10,
            kernel_size: 5,
            pool_size: 4,
            heads: 4,
            depth: 1,
            feature_norm: true,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn with_arch(arch: Arch) -> Self {
        Self {
            arch,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.feature_dim == 0 {
            return bad("feature_dim must be at least 1");
        }
        if self.in_channels == 0 || self.epoch_samples == 0 {
            return bad("in_channels and epoch_samples must be positive");
        }
        if self.widths.is_empty() || self.widths.contains(&0) {
            return bad("widths must be non-empty and positive");
        }
        if self.stem_stride == 0 || self.kernel_size == 0 || self.pool_size == 0 {
            return bad("stem_stride, kernel_size and pool_size must be positive");
        }
        if self.arch == Arch::Transformer {
            if self.heads == 0 || self.feature_dim % self.heads != 0 {
                return bad("feature_dim must be divisible by heads");
            }
            if self.depth == 0 {
                return bad("depth must be at least 1");
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StagerOutput<F> {
    /// `[B, 5]`
    pub logits: Array2<F>,
    /// `[B, D]`
    pub features: Array2<F>,
}

/// Loss gradient with respect to a stager's outputs; either part may be absent.
#[derive(Debug, Clone, Default)]
pub struct OutputGrad<F> {
    pub logits: Option<Array2<F>>,
    pub features: Option<Array2<F>>,
}

#[derive(Debug, Clone)]
enum Body {
    Cnn(CnnBody),
    Transformer(TransformerBody),
}

#[derive(Debug, Clone)]
enum BodyTape<F> {
    Cnn(CnnTape<F>),
    Transformer(TransformerTape<F>),
}

/// Intermediate values recorded by [`SleepStager::forward_tape`].
#[derive(Debug, Clone)]
pub struct StagerTape<F> {
    body: BodyTape<F>,
    features: Array2<F>,
}

/// A stager: encoder body, pooled feature of width `feature_dim`, linear
/// classifier over the five stages.
#[derive(Debug, Clone)]
pub struct SleepStager<F> {
    config: ModelConfig,
    params: ParamSet<F>,
    body: Body,
    classifier: Linear,
}

pub fn build_cnn_stager<F: Scalar>(config: &ModelConfig) -> Result<SleepStager<F>> {
    if config.arch != Arch::Cnn {
        return Err(Error::InvalidConfig("arch must be cnn".into()));
    }
    build_stager(config)
}

pub fn build_transformer_stager<F: Scalar>(config: &ModelConfig) -> Result<SleepStager<F>> {
    if config.arch != Arch::Transformer {
        return Err(Error::InvalidConfig("arch must be transformer".into()));
    }
    build_stager(config)
}

/// Builds the architecture named by `config.arch`, initialised from `config.seed`.
pub fn build_stager<F: Scalar>(config: &ModelConfig) -> Result<SleepStager<F>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = ParamSet::new();
    let body = match config.arch {
        Arch::Cnn => Body::Cnn(CnnBody::new(config, &mut params, &mut rng)),
        Arch::Transformer => {
            Body::Transformer(TransformerBody::new(config, &mut params, &mut rng))
        }
    };
    let classifier = Linear::new(&mut params, "classifier", config.feature_dim, NUM_STAGES, &mut rng);
    Ok(SleepStager {
        config: config.clone(),
        params,
        body,
        classifier,
    })
}

impl<F: Scalar> SleepStager<F> {
    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<F> {
        &mut self.params
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim
    }

    /// Forward pass over a channels-last batch `[B·T, C]`, keeping what the
    /// backward pass needs.
    pub fn forward_tape(&self, x: &Act<F>) -> (StagerOutput<F>, StagerTape<F>) {
        let (features, body) = match &self.body {
            Body::Cnn(b) => {
                let (f, t) = b.forward(&self.params, x);
                (f, BodyTape::Cnn(t))
            }
            Body::Transformer(b) => {
                let (f, t) = b.forward(&self.params, x);
                (f, BodyTape::Transformer(t))
            }
        };
        let logits = self.classifier.forward(&self.params, &features);
        (
            StagerOutput {
                logits,
                features: features.clone(),
            },
            StagerTape { body, features },
        )
    }

    pub fn forward(&self, x: &Act<F>) -> StagerOutput<F> {
        self.forward_tape(x).0
    }

    /// Parameter gradients of a loss whose output gradients are `grad`.
    pub fn backward(&self, tape: &StagerTape<F>, grad: &OutputGrad<F>) -> Grads<F> {
        let mut g = self.params.zero_grads();
        let mut dfeat = match &grad.features {
            Some(d) => d.clone(),
            None => Array2::zeros(tape.features.dim()),
        };
        if let Some(dl) = &grad.logits {
            dfeat += &self
                .classifier
                .backward(&self.params, &mut g, &tape.features, dl);
        }
        match (&self.body, &tape.body) {
            (Body::Cnn(b), BodyTape::Cnn(t)) => b.backward(&self.params, &mut g, t, dfeat),
            (Body::Transformer(b), BodyTape::Transformer(t)) => {
                b.backward(&self.params, &mut g, t, dfeat)
            }
            _ => unreachable!("tape from a different architecture"),
        }
        g
    }

    /// SHA-256 over every parameter value in little-endian order.
    pub fn param_digest(&self) -> String {
        let mut bytes = Vec::with_capacity(self.params.num_scalars() * F::BYTES);
        for v in self.params.flatten() {
            v.write_le(&mut bytes);
        }
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(self, &Default::default(), path)
    }
}

/// Runs a batch `[B, T, C]` through the model in evaluation mode.
pub fn forward_batch<F: Scalar>(
    model: &SleepStager<F>,
    epochs: ArrayView3<'_, F>,
) -> Result<StagerOutput<F>> {
    let (b, t, c) = epochs.dim();
    let cfg = model.config();
    if t != cfg.epoch_samples || c != cfg.in_channels {
        return Err(Error::ShapeError(format!(
            "expected epochs of shape [B, {}, {}], got [{b}, {t}, {c}]",
            cfg.epoch_samples, cfg.in_channels
        )));
    }
    if b == 0 {
        return Ok(StagerOutput {
            logits: Array2::zeros((0, NUM_STAGES)),
            features: Array2::zeros((0, cfg.feature_dim)),
        });
    }
    let data = epochs
        .as_standard_layout()
        .into_owned()
        .into_shape_with_order((b * t, c))
        .expect("contiguous reshape");
    Ok(model.forward(&Act::new(b, t, data)))
}

/// Row-wise softmax.
pub fn softmax<F: Scalar>(logits: &Array2<F>) -> Array2<F> {
    let mut p = logits.clone();
    for mut row in p.rows_mut() {
        let max = row.iter().copied().fold(F::neg_infinity(), F::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    p
}

/// Index of the largest logit in each row.
pub fn argmax_rows<F: Scalar>(logits: &Array2<F>) -> Vec<usize> {
    logits
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
