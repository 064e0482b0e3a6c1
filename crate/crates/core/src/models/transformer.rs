use ndarray::Array2;
use rand::Rng;

use super::ModelConfig;
use crate::nn::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, Act, AttentionCache, Conv1d,
    ConvCache, Grads, LayerNorm, LayerNormCache, Linear, ParamId, ParamSet, Scalar,
    SelfAttention,
};

#[derive(Debug, Clone)]
struct Block {
    norm1: LayerNorm,
    attn: SelfAttention,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

/// Conv patch embedding, learned positions, pre-norm encoder blocks and mean
/// pooling over tokens.
#[derive(Debug, Clone)]
pub(super) struct TransformerBody {
    stem: Conv1d,
    embed: Conv1d,
    pos: ParamId,
    tokens: usize,
    blocks: Vec<Block>,
    norm: LayerNorm,
}

#[derive(Debug, Clone)]
struct BlockTape<F> {
    n1: LayerNormCache<F>,
    attn: AttentionCache<F>,
    n2: LayerNormCache<F>,
    ff_in: Array2<F>,
    hidden: Act<F>,
}

#[derive(Debug, Clone)]
pub(super) struct TransformerTape<F> {
    stem: ConvCache<F>,
    stem_out: Act<F>,
    embed: ConvCache<F>,
    blocks: Vec<BlockTape<F>>,
    norm: LayerNormCache<F>,
    batch: usize,
}

impl TransformerBody {
    pub fn new<F: Scalar, R: Rng>(cfg: &ModelConfig, p: &mut ParamSet<F>, rng: &mut R) -> Self {
        let d = cfg.feature_dim;
        let w = cfg.widths[0];
        let stem = Conv1d::new(p, "stem", cfg.in_channels, w, cfg.stem_stride, cfg.stem_stride, rng);
        let embed = Conv1d::new(p, "embed", w, d, cfg.pool_size, cfg.pool_size, rng);
        let tokens = embed.out_len(stem.out_len(cfg.epoch_samples));
        let pos = p.add_uniform("pos_embedding", vec![tokens, d], 2500, rng);
        let blocks = (0..cfg.depth)
            .map(|i| Block {
                norm1: LayerNorm::new(p, &format!("block{i}.norm1"), d),
                attn: SelfAttention::new(p, &format!("block{i}.attn"), d, cfg.heads, rng),
                norm2: LayerNorm::new(p, &format!("block{i}.norm2"), d),
                ff1: Linear::new(p, &format!("block{i}.ff1"), d, 2 * d, rng),
                ff2: Linear::new(p, &format!("block{i}.ff2"), 2 * d, d, rng),
            })
            .collect();
        let norm = LayerNorm::new(p, "final_norm", d);
        Self {
            stem,
            embed,
            pos,
            tokens,
            blocks,
            norm,
        }
    }

    pub fn forward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        x: &Act<F>,
    ) -> (Array2<F>, TransformerTape<F>) {
        let (mut s, stem) = self.stem.forward(p, x);
        relu(&mut s);
        let (mut h, embed) = self.embed.forward(p, &s);
        debug_assert_eq!(h.len, self.tokens);
        let pos = p.matrix(self.pos);
        for b in 0..h.batch {
            let mut rows = h
                .data
                .slice_mut(ndarray::s![b * self.tokens..(b + 1) * self.tokens, ..]);
            rows += &pos;
        }
        let mut tapes = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let (a_in, n1) = blk.norm1.forward(p, &h.data);
            let (a_out, attn) = blk.attn.forward(p, &Act::new(h.batch, h.len, a_in));
            h.data += &a_out.data;
            let (ff_in, n2) = blk.norm2.forward(p, &h.data);
            let mut hidden = Act::new(h.batch, h.len, blk.ff1.forward(p, &ff_in));
            relu(&mut hidden);
            h.data += &blk.ff2.forward(p, &hidden.data);
            tapes.push(BlockTape {
                n1,
                attn,
                n2,
                ff_in,
                hidden,
            });
        }
        let (out, norm) = self.norm.forward(p, &h.data);
        let feat = global_avg_pool(&Act::new(h.batch, h.len, out));
        (
            feat,
            TransformerTape {
                stem,
                stem_out: s,
                embed,
                blocks: tapes,
                norm,
                batch: h.batch,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        g: &mut Grads<F>,
        tape: &TransformerTape<F>,
        dfeat: Array2<F>,
    ) {
        let d = global_avg_pool_backward(&dfeat, self.tokens);
        let mut dh = self.norm.backward(p, g, &tape.norm, &d);
        for (blk, t) in self.blocks.iter().zip(&tape.blocks).rev() {
            let mut dhid = blk.ff2.backward(p, g, &t.hidden.data, &dh);
            relu_backward(&t.hidden, &mut dhid);
            let dff_in = blk.ff1.backward(p, g, &t.ff_in, &dhid);
            dh += &blk.norm2.backward(p, g, &t.n2, &dff_in);
            let da = blk.attn.backward(p, g, &t.attn, &dh);
            dh += &blk.norm1.backward(p, g, &t.n1, &da);
        }
        {
            let mut dpos = g.matrix_mut(self.pos, self.tokens);
            for b in 0..tape.batch {
                dpos += &dh.slice(ndarray::s![b * self.tokens..(b + 1) * self.tokens, ..]);
            }
        }
        let mut ds = self.embed.backward(p, g, &tape.embed, &dh);
        relu_backward(&tape.stem_out, &mut ds);
        self.stem.backward(p, g, &tape.stem, &ds);
    }
}
