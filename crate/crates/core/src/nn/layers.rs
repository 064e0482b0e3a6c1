use ndarray::{s, Array2, Axis, Zip};
use rand::Rng;

use super::{Act, Grads, ParamId, ParamSet, Scalar};

/// 1-D convolution over the time axis with "same"-style padding: the output
/// length is `ceil(len / stride)`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct ConvCache<F> {
    cols: Array2<F>,
    in_len: usize,
    batch: usize,
}

impl Conv1d {
    pub fn new<F: Scalar, R: Rng>(
        params: &mut ParamSet<F>,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        assert!(kernel >= 1 && stride >= 1);
        let fan_in = kernel * in_channels;
        let weight = params.add_uniform(
            format!("{name}.weight"),
            vec![fan_in, out_channels],
            fan_in,
            rng,
        );
        let bias = params.add_const(format!("{name}.bias"), vec![out_channels], 0.0);
        Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            weight,
            bias,
        }
    }

    pub fn out_len(&self, len: usize) -> usize {
        len.div_ceil(self.stride)
    }

    fn pad_left(&self, len: usize) -> usize {
        let out = self.out_len(len);
        let needed = ((out - 1) * self.stride + self.kernel).saturating_sub(len);
        needed / 2
    }

    pub fn forward<F: Scalar>(&self, p: &ParamSet<F>, x: &Act<F>) -> (Act<F>, ConvCache<F>) {
        assert_eq!(x.channels(), self.in_channels);
        let cols = self.im2col(x);
        let mut out = cols.dot(&p.matrix(self.weight));
        let bias = p.get(self.bias);
        for mut row in out.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += *b;
            }
        }
        let out_len = self.out_len(x.len);
        (
            Act::new(x.batch, out_len, out),
            ConvCache {
                cols,
                in_len: x.len,
                batch: x.batch,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        g: &mut Grads<F>,
        cache: &ConvCache<F>,
        dy: &Array2<F>,
    ) -> Array2<F> {
        let dw = cache.cols.t().dot(dy);
        g.matrix_mut(self.weight, self.kernel * self.in_channels)
            .zip_mut_with(&dw, |a, b| *a += *b);
        let db = g.get_mut(self.bias);
        for row in dy.rows() {
            for (a, b) in db.iter_mut().zip(row) {
                *a += *b;
            }
        }
        let dcols = dy.dot(&p.matrix(self.weight).t());
        self.col2im(&dcols, cache.batch, cache.in_len)
    }

    fn im2col<F: Scalar>(&self, x: &Act<F>) -> Array2<F> {
        let (len, cin, k) = (x.len, self.in_channels, self.kernel);
        let out_len = self.out_len(len);
        let pad = self.pad_left(len);
        let mut cols = Array2::<F>::zeros((x.batch * out_len, k * cin));
        let src = x.data.as_standard_layout();
        let src = src.as_slice().expect("contiguous");
        let dst = cols.as_slice_mut().expect("contiguous");
        for b in 0..x.batch {
            for t in 0..out_len {
                let row = (b * out_len + t) * k * cin;
                let start = (t * self.stride) as isize - pad as isize;
                let lo = (-start).max(0) as usize;
                let hi = k.min((len as isize - start).max(0) as usize);
                if lo >= hi {
                    continue;
                }
                let s0 = (b * len) as isize + start + lo as isize;
                let s0 = s0 as usize * cin;
                dst[row + lo * cin..row + hi * cin]
                    .copy_from_slice(&src[s0..s0 + (hi - lo) * cin]);
            }
        }
        cols
    }

    fn col2im<F: Scalar>(&self, dcols: &Array2<F>, batch: usize, len: usize) -> Array2<F> {
        let (cin, k) = (self.in_channels, self.kernel);
        let out_len = self.out_len(len);
        let pad = self.pad_left(len);
        let mut dx = Array2::<F>::zeros((batch * len, cin));
        let src = dcols.as_slice().expect("contiguous");
        let dst = dx.as_slice_mut().expect("contiguous");
        for b in 0..batch {
            for t in 0..out_len {
                let row = (b * out_len + t) * k * cin;
                let start = (t * self.stride) as isize - pad as isize;
                let lo = (-start).max(0) as usize;
                let hi = k.min((len as isize - start).max(0) as usize);
                if lo >= hi {
                    continue;
                }
                let d0 = ((b * len) as isize + start + lo as isize) as usize * cin;
                let n = (hi - lo) * cin;
                for (a, v) in dst[d0..d0 + n]
                    .iter_mut()
                    .zip(&src[row + lo * cin..row + hi * cin])
                {
                    *a += *v;
                }
            }
        }
        dx
    }
}

pub fn relu<F: Scalar>(x: &mut Act<F>) {
    x.data.mapv_inplace(|v| if v > F::zero() { v } else { F::zero() });
}

/// Backward through ReLU given its output.
pub fn relu_backward<F: Scalar>(out: &Act<F>, dy: &mut Array2<F>) {
    Zip::from(dy).and(&out.data).for_each(|d, &o| {
        if o <= F::zero() {
            *d = F::zero();
        }
    });
}

/// Non-overlapping max pooling; a short tail window is pooled on its own.
#[derive(Debug, Clone, Copy)]
pub struct MaxPool1d {
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct PoolCache {
    argmax: Vec<u32>,
    in_rows: usize,
    channels: usize,
}

impl MaxPool1d {
    pub fn out_len(&self, len: usize) -> usize {
        len.div_ceil(self.size)
    }

    pub fn forward<F: Scalar>(&self, x: &Act<F>) -> (Act<F>, PoolCache) {
        let c = x.channels();
        let out_len = self.out_len(x.len);
        let mut out = Array2::<F>::zeros((x.batch * out_len, c));
        let mut argmax = vec![0u32; x.batch * out_len * c];
        for b in 0..x.batch {
            for t in 0..out_len {
                let r0 = b * x.len + t * self.size;
                let r1 = (b * x.len + x.len).min(r0 + self.size);
                let o = b * out_len + t;
                for ch in 0..c {
                    let mut best = r0;
                    let mut bv = x.data[[r0, ch]];
                    for r in r0 + 1..r1 {
                        let v = x.data[[r, ch]];
                        if v > bv {
                            bv = v;
                            best = r;
                        }
                    }
                    out[[o, ch]] = bv;
                    argmax[o * c + ch] = best as u32;
                }
            }
        }
        (
            Act::new(x.batch, out_len, out),
            PoolCache {
                argmax,
                in_rows: x.data.nrows(),
                channels: c,
            },
        )
    }

    pub fn backward<F: Scalar>(&self, cache: &PoolCache, dy: &Array2<F>) -> Array2<F> {
        let c = cache.channels;
        let mut dx = Array2::<F>::zeros((cache.in_rows, c));
        for (o, row) in dy.rows().into_iter().enumerate() {
            for (ch, v) in row.iter().enumerate() {
                dx[[cache.argmax[o * c + ch] as usize, ch]] += *v;
            }
        }
        dx
    }
}

/// Mean over time for each example: `[B·L, C] -> [B, C]`.
pub fn global_avg_pool<F: Scalar>(x: &Act<F>) -> Array2<F> {
    let c = x.channels();
    let mut out = Array2::<F>::zeros((x.batch, c));
    if x.len == 0 {
        return out;
    }
    let scale = F::one() / F::of(x.len as f64);
    for b in 0..x.batch {
        let block = x.data.slice(s![b * x.len..(b + 1) * x.len, ..]);
        let mut row = out.row_mut(b);
        row.assign(&block.sum_axis(Axis(0)));
        row *= scale;
    }
    out
}

pub fn global_avg_pool_backward<F: Scalar>(dy: &Array2<F>, len: usize) -> Array2<F> {
    let (batch, c) = dy.dim();
    let scale = F::one() / F::of(len as f64);
    let mut dx = Array2::<F>::zeros((batch * len, c));
    for b in 0..batch {
        let g = dy.row(b).mapv(|v| v * scale);
        for r in b * len..(b + 1) * len {
            dx.row_mut(r).assign(&g);
        }
    }
    dx
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub in_dim: usize,
    pub out_dim: usize,
    weight: ParamId,
    bias: ParamId,
}

impl Linear {
    pub fn new<F: Scalar, R: Rng>(
        params: &mut ParamSet<F>,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        rng: &mut R,
    ) -> Self {
        let weight = params.add_uniform(
            format!("{name}.weight"),
            vec![in_dim, out_dim],
            in_dim,
            rng,
        );
        let bias = params.add_const(format!("{name}.bias"), vec![out_dim], 0.0);
        Self {
            in_dim,
            out_dim,
            weight,
            bias,
        }
    }

    pub fn forward<F: Scalar>(&self, p: &ParamSet<F>, x: &Array2<F>) -> Array2<F> {
        let mut y = x.dot(&p.matrix(self.weight));
        let bias = p.get(self.bias);
        for mut row in y.rows_mut() {
            for (v, b) in row.iter_mut().zip(bias) {
                *v += *b;
            }
        }
        y
    }

    /// Accumulates parameter gradients and returns the input gradient.
    pub fn backward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        g: &mut Grads<F>,
        x: &Array2<F>,
        dy: &Array2<F>,
    ) -> Array2<F> {
        let dw = x.t().dot(dy);
        g.matrix_mut(self.weight, self.in_dim)
            .zip_mut_with(&dw, |a, b| *a += *b);
        let db = g.get_mut(self.bias);
        for row in dy.rows() {
            for (a, b) in db.iter_mut().zip(row) {
                *a += *b;
            }
        }
        dy.dot(&p.matrix(self.weight).t())
    }
}

/// Normalisation over the channel axis of each row.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub dim: usize,
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Debug, Clone)]
pub struct LayerNormCache<F> {
    xhat: Array2<F>,
    inv_std: Vec<F>,
}

const LN_EPS: f64 = 1e-5;

impl LayerNorm {
    pub fn new<F: Scalar>(params: &mut ParamSet<F>, name: &str, dim: usize) -> Self {
        let gamma = params.add_const(format!("{name}.gamma"), vec![dim], 1.0);
        let beta = params.add_const(format!("{name}.beta"), vec![dim], 0.0);
        Self { dim, gamma, beta }
    }

    pub fn forward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        x: &Array2<F>,
    ) -> (Array2<F>, LayerNormCache<F>) {
        let n = F::of(self.dim as f64);
        let gamma = p.get(self.gamma);
        let beta = p.get(self.beta);
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.nrows());
        let mut y = Array2::<F>::zeros(x.dim());
        for (mut row, mut yrow) in xhat.rows_mut().into_iter().zip(y.rows_mut()) {
            let mean = row.sum() / n;
            row.mapv_inplace(|v| v - mean);
            let var = row.iter().map(|&v| v * v).sum::<F>() / n;
            let is = F::one() / (var + F::of(LN_EPS)).sqrt();
            row *= is;
            inv_std.push(is);
            for ((o, &h), (&ga, &be)) in yrow.iter_mut().zip(row.iter()).zip(gamma.iter().zip(beta))
            {
                *o = h * ga + be;
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        g: &mut Grads<F>,
        cache: &LayerNormCache<F>,
        dy: &Array2<F>,
    ) -> Array2<F> {
        let n = F::of(self.dim as f64);
        let gamma = p.get(self.gamma).to_vec();
        {
            let dg = g.get_mut(self.gamma);
            for (row, xh) in dy.rows().into_iter().zip(cache.xhat.rows()) {
                for ((a, &d), &h) in dg.iter_mut().zip(row).zip(xh) {
                    *a += d * h;
                }
            }
        }
        {
            let dbeta = g.get_mut(self.beta);
            for row in dy.rows() {
                for (a, &d) in dbeta.iter_mut().zip(row) {
                    *a += d;
                }
            }
        }
        let mut dx = Array2::<F>::zeros(dy.dim());
        for (i, mut out) in dx.rows_mut().into_iter().enumerate() {
            let xh = cache.xhat.row(i);
            let dxhat: Vec<F> = dy.row(i).iter().zip(&gamma).map(|(&d, &ga)| d * ga).collect();
            let m1 = dxhat.iter().copied().sum::<F>() / n;
            let m2 = dxhat.iter().zip(xh).map(|(&a, &h)| a * h).sum::<F>() / n;
            for ((o, &d), &h) in out.iter_mut().zip(&dxhat).zip(xh) {
                *o = cache.inv_std[i] * (d - m1 - h * m2);
            }
        }
        dx
    }
}

/// Multi-head scaled dot-product self-attention within each example.
#[derive(Debug, Clone)]
pub struct SelfAttention {
    pub dim: usize,
    pub heads: usize,
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
pub struct AttentionCache<F> {
    x: Array2<F>,
    q: Array2<F>,
    k: Array2<F>,
    v: Array2<F>,
    probs: Vec<Array2<F>>,
    ctx: Array2<F>,
    batch: usize,
    len: usize,
}

impl SelfAttention {
    pub fn new<F: Scalar, R: Rng>(
        params: &mut ParamSet<F>,
        name: &str,
        dim: usize,
        heads: usize,
        rng: &mut R,
    ) -> Self {
        assert!(heads >= 1 && dim % heads == 0, "dim must divide into heads");
        Self {
            dim,
            heads,
            q: Linear::new(params, &format!("{name}.q"), dim, dim, rng),
            k: Linear::new(params, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(params, &format!("{name}.v"), dim, dim, rng),
            o: Linear::new(params, &format!("{name}.o"), dim, dim, rng),
        }
    }

    fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn forward<F: Scalar>(&self, p: &ParamSet<F>, x: &Act<F>) -> (Act<F>, AttentionCache<F>) {
        let (batch, len, dh) = (x.batch, x.len, self.head_dim());
        let scale = F::one() / F::of(dh as f64).sqrt();
        let q = self.q.forward(p, &x.data);
        let k = self.k.forward(p, &x.data);
        let v = self.v.forward(p, &x.data);
        let mut ctx = Array2::<F>::zeros(x.data.dim());
        let mut probs = Vec::with_capacity(batch * self.heads);
        for b in 0..batch {
            let rows = b * len..(b + 1) * len;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let qb = q.slice(s![rows.clone(), cols.clone()]);
                let kb = k.slice(s![rows.clone(), cols.clone()]);
                let vb = v.slice(s![rows.clone(), cols.clone()]);
                let mut scores = qb.dot(&kb.t());
                for mut row in scores.rows_mut() {
                    let max = row.iter().copied().fold(F::neg_infinity(), F::max);
                    row.mapv_inplace(|s| ((s - max) * scale).exp());
                    let sum = row.sum();
                    row.mapv_inplace(|e| e / sum);
                }
                ctx.slice_mut(s![rows.clone(), cols]).assign(&scores.dot(&vb));
                probs.push(scores);
            }
        }
        let y = self.o.forward(p, &ctx);
        (
            Act::new(batch, len, y),
            AttentionCache {
                x: x.data.clone(),
                q,
                k,
                v,
                probs,
                ctx,
                batch,
                len,
            },
        )
    }

    pub fn backward<F: Scalar>(
        &self,
        p: &ParamSet<F>,
        g: &mut Grads<F>,
        c: &AttentionCache<F>,
        dy: &Array2<F>,
    ) -> Array2<F> {
        let (len, dh) = (c.len, self.head_dim());
        let scale = F::one() / F::of(dh as f64).sqrt();
        let dctx = self.o.backward(p, g, &c.ctx, dy);
        let mut dq = Array2::<F>::zeros(c.q.dim());
        let mut dk = Array2::<F>::zeros(c.k.dim());
        let mut dv = Array2::<F>::zeros(c.v.dim());
        for b in 0..c.batch {
            let rows = b * len..(b + 1) * len;
            for h in 0..self.heads {
                let cols = h * dh..(h + 1) * dh;
                let pm = &c.probs[b * self.heads + h];
                let dout = dctx.slice(s![rows.clone(), cols.clone()]);
                let qb = c.q.slice(s![rows.clone(), cols.clone()]);
                let kb = c.k.slice(s![rows.clone(), cols.clone()]);
                let vb = c.v.slice(s![rows.clone(), cols.clone()]);
                dv.slice_mut(s![rows.clone(), cols.clone()])
                    .assign(&pm.t().dot(&dout));
                let mut ds = dout.dot(&vb.t());
                for (mut drow, prow) in ds.rows_mut().into_iter().zip(pm.rows()) {
                    let dot: F = drow.iter().zip(prow).map(|(&a, &b)| a * b).sum();
                    Zip::from(&mut drow)
                        .and(&prow)
                        .for_each(|d, &pv| *d = pv * (*d - dot) * scale);
                }
                dq.slice_mut(s![rows.clone(), cols.clone()])
                    .assign(&ds.dot(&kb));
                dk.slice_mut(s![rows.clone(), cols]).assign(&ds.t().dot(&qb));
            }
        }
        let mut dx = self.q.backward(p, g, &c.x, &dq);
        dx += &self.k.backward(p, g, &c.x, &dk);
        dx += &self.v.backward(p, g, &c.x, &dv);
        dx
    }
}
