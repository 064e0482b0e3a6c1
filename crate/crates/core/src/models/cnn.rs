use ndarray::Array2;
use rand::Rng;

use super::ModelConfig;
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, Act, Conv1d, ConvCache,
    Grads, LayerNorm, LayerNormCache, MaxPool1d, ParamSet, PoolCache, Scalar,
};

/// Conv blocks with downsampling, a feature conv and global average pooling.
#[derive(Debug, Clone)]
pub(super) struct CnnBody {
    blocks: Vec<Conv1d>,
    pool: MaxPool1d,
    head: Conv1d,
    norm: Option<LayerNorm>,
}

#[derive(Debug, Clone)]
pub(super) struct CnnTape<F> {
    blocks: Vec<(ConvCache<F>, Act<F>, PoolCache)>,
    head: (ConvCache<F>, Act<F>),
    norm: Option<LayerNormCache<F>>,
}

impl CnnBody {
    pub fn new<F: Scalar, R: Rng>(cfg: &ModelConfig, p: &mut ParamSet<F>, rng: &mut R) -> Self {
        let mut blocks = Vec::new();
        let mut cin = cfg.in_channels;
        for (i, &w) in cfg.widths.iter().enumerate() {
            let (k, s) = if i == 0 {
                (cfg.stem_stride, cfg.stem_stride)
            } else {
                (cfg.kernel_size, 1)
            };
            blocks.push(Conv1d::new(p, &format!("conv{i}"), cin, w, k, s, rng));
            cin = w;
        }
        let head = Conv1d::new(p, "feature_conv", cin, cfg.feature_dim, cfg.kernel_size, 1, rng);
        let norm = cfg
            .feature_norm
            .then(|| LayerNorm::new(p, "feature_norm", cfg.feature_dim));
        Self {
            blocks,
            pool: MaxPool1d {
                size: cfg.pool_size,
            },
            head,
            norm,
        }
    }

    pub fn forward<F: Scalar>(&self, p: &ParamSet<F>, x: &Act<F>) -> (Array2<F>, CnnTape<F>) {
        let mut tape = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for conv in &self.blocks {
            let (mut y, cc) = conv.forward(p, &h);
            relu(&mut y);
            let (pooled, pc) = self.pool.forward(&y);
            tape.push((cc, y, pc));
            h = pooled;
        }
        let (mut y, cc) = self.head.forward(p, &h);
        relu(&mut y);
        let pooled = global_avg_pool(&y);
        let (feat, norm) = match &self.norm {
            Some(ln) => {
                let (f, c) = ln.forward(p, &pooled);
                (f, Some(c))
            }
            None => (pooled, None),
        };
        (
            feat,
            CnnTape {
                blocks: tape,
                head: (cc, y),
                norm,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        g: &mut Grads<F>,
        tape: &CnnTape<F>,
        dfeat: Array2<F>,
    ) {
        let (hc, hy) = &tape.head;
        let dfeat = match (&self.norm, &tape.norm) {
            (Some(ln), Some(c)) => ln.backward(p, g, c, &dfeat),
            _ => dfeat,
        };
        let mut d = global_avg_pool_backward(&dfeat, hy.len);
        relu_backward(hy, &mut d);
        let mut d = self.head.backward(p, g, hc, &d);
        for (conv, (cc, y, pc)) in self.blocks.iter().zip(&tape.blocks).rev() {
            let mut dy = self.pool.backward(pc, &d);
            relu_backward(y, &mut dy);
            d = conv.backward(p, g, cc, &dy);
        }
    }
}
