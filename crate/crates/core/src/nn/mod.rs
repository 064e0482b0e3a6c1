//! Minimal neural-network toolkit: named parameter storage, layers with
//! hand-written backward passes and the Adam optimizer.
//!
//! Activations are channels-last matrices `[batch · length, channels]`
//! wrapped in [`Act`]; every layer returns the cache its backward pass needs.

mod adam;
mod layers;

use std::fmt::Debug;

use ndarray::{Array2, ArrayView2, ArrayViewMut2};
use rand::Rng;

pub use adam::Adam;
pub use layers::{
    global_avg_pool, global_avg_pool_backward, relu, relu_backward, Conv1d, ConvCache, LayerNorm,
    LayerNormCache, Linear, MaxPool1d, PoolCache, SelfAttention, AttentionCache,
};

/// Floating-point element type of parameters and activations.
pub trait Scalar:
    num_traits::Float
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + std::iter::Sum
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    const DTYPE: &'static str;
    const BYTES: usize;

    fn of(v: f64) -> Self;
    fn f64(self) -> f64;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "float32";
    const BYTES: usize = 4;

    fn of(v: f64) -> Self {
        v as f32
    }
    fn f64(self) -> f64 {
        self as f64
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes.try_into().expect("4 bytes"))
    }
}

impl Scalar for f64 {
    const DTYPE: &'static str = "float64";
    const BYTES: usize = 8;

    fn of(v: f64) -> Self {
        v
    }
    fn f64(self) -> f64 {
        self
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes.try_into().expect("8 bytes"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<F> {
    pub name: String,
    pub shape: Vec<usize>,
    pub value: Vec<F>,
}

/// Ordered collection of named parameter tensors.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamSet<F> {
    params: Vec<Param<F>>,
}

impl<F: Scalar> ParamSet<F> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<F>) -> ParamId {
        assert_eq!(shape.iter().product::<usize>(), value.len());
        self.params.push(Param {
            name: name.into(),
            shape,
            value,
        });
        ParamId(self.params.len() - 1)
    }

    /// Uniform initialisation in `±1/sqrt(fan_in)`.
    pub fn add_uniform<R: Rng>(
        &mut self,
        name: impl Into<String>,
        shape: Vec<usize>,
        fan_in: usize,
        rng: &mut R,
    ) -> ParamId {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let n = shape.iter().product();
        let value = (0..n).map(|_| F::of(rng.gen_range(-bound..bound))).collect();
        self.add(name, shape, value)
    }

    pub fn add_const(&mut self, name: impl Into<String>, shape: Vec<usize>, v: f64) -> ParamId {
        let n = shape.iter().product();
        self.add(name, shape, vec![F::of(v); n])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<F>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<F>> {
        self.params.iter_mut()
    }

    pub fn get(&self, id: ParamId) -> &[F] {
        &self.params[id.0].value
    }

    /// Parameter viewed as a matrix `[shape[0], rest]`.
    pub fn matrix(&self, id: ParamId) -> ArrayView2<'_, F> {
        let p = &self.params[id.0];
        let rows = p.shape[0];
        ArrayView2::from_shape((rows, p.value.len() / rows), &p.value).expect("param shape")
    }

    pub fn num_scalars(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grads(&self) -> Grads<F> {
        Grads {
            values: self
                .params
                .iter()
                .map(|p| vec![F::zero(); p.value.len()])
                .collect(),
        }
    }

    /// Same names and shapes, in the same order.
    pub fn same_layout(&self, other: &ParamSet<F>) -> bool {
        self.params.len() == other.params.len()
            && self
                .params
                .iter()
                .zip(&other.params)
                .all(|(a, b)| a.name == b.name && a.shape == b.shape)
    }

    /// All values concatenated in parameter order.
    pub fn flatten(&self) -> Vec<F> {
        self.params.iter().flat_map(|p| p.value.iter().copied()).collect()
    }

    pub fn assign_flat(&mut self, flat: &[F]) {
        assert_eq!(flat.len(), self.num_scalars());
        let mut offset = 0;
        for p in &mut self.params {
            let n = p.value.len();
            p.value.copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
    }
}

/// Gradients laid out like the [`ParamSet`] that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads<F> {
    pub values: Vec<Vec<F>>,
}

impl<F: Scalar> Grads<F> {
    pub fn get_mut(&mut self, id: ParamId) -> &mut [F] {
        &mut self.values[id.0]
    }

    pub fn matrix_mut(&mut self, id: ParamId, rows: usize) -> ArrayViewMut2<'_, F> {
        let v = &mut self.values[id.0];
        let cols = v.len() / rows;
        ArrayViewMut2::from_shape((rows, cols), v).expect("grad shape")
    }

    pub fn flatten(&self) -> Vec<F> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().flatten().all(|v| v.is_finite())
    }
}

/// Channels-last activation: `data` is `[batch · len, channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Act<F> {
    pub batch: usize,
    pub len: usize,
    pub data: Array2<F>,
}

impl<F: Scalar> Act<F> {
    pub fn new(batch: usize, len: usize, data: Array2<F>) -> Self {
        debug_assert_eq!(data.nrows(), batch * len);
        Self { batch, len, data }
    }

    pub fn channels(&self) -> usize {
        self.data.ncols()
    }
}
