//! Regression heads: the recurrent (GRU) pooling head and the average-pooling
//! baseline, with exact backward passes and a tensor checkpoint format.

mod baseline;
mod checkpoint;
mod gru;
mod head;

pub use baseline::{average_pool, AvgHead, AvgTrace, BASELINE_HIDDEN};
pub use checkpoint::{
    blob_path, decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint,
    CheckpointMeta, TensorEntry,
};
pub use gru::{gru_cell_forward, GruCellCache, GruLayer};
pub use head::{GruHead, HeadDims, HeadTrace, PAPER_HIDDEN};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{FeatureSequence, Rng};

pub const DEFAULT_DROPOUT: f64 = 0.25;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Uniform in `±sqrt(6 / (fan_in + fan_out))`.
    pub fn glorot(rows: usize, cols: usize, rng: &mut Rng) -> Self {
        let limit = (6.0 / (rows + cols) as f64).sqrt();
        Self {
            rows,
            cols,
            data: (0..rows * cols).map(|_| rng.random_range(-limit..limit)).collect(),
        }
    }

    /// `out += self · x`
    #[inline]
    pub fn matvec_acc(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (o, row) in out.iter_mut().zip(self.data.chunks_exact(self.cols)) {
            *o += dot(row, x);
        }
    }

    /// `out += selfᵀ · y`
    #[inline]
    pub fn matvec_t_acc(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        for (&yi, row) in y.iter().zip(self.data.chunks_exact(self.cols)) {
            if yi != 0.0 {
                axpy(yi, row, out);
            }
        }
    }

    /// `self += y ⊗ x`
    #[inline]
    pub fn outer_acc(&mut self, y: &[f64], x: &[f64]) {
        for (&yi, row) in y.iter().zip(self.data.chunks_exact_mut(self.cols)) {
            if yi != 0.0 {
                axpy(yi, x, row);
            }
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Fully connected layer `y = W x + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    pub fn glorot(inputs: usize, outputs: usize, rng: &mut Rng) -> Self {
        Self {
            weight: Matrix::glorot(outputs, inputs, rng),
            bias: vec![0.0; outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.bias.clone();
        self.weight.matvec_acc(x, &mut y);
        y
    }

    fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        out.push(Tensor::new(format!("{prefix}.weight"), vec![self.weight.rows, self.weight.cols], &self.weight.data, true));
        out.push(Tensor::new(format!("{prefix}.bias"), vec![self.bias.len()], &self.bias, false));
    }

    fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let shape = vec![self.weight.rows, self.weight.cols];
        let n = self.bias.len();
        out.push(TensorMut::new(format!("{prefix}.weight"), shape, &mut self.weight.data, true));
        out.push(TensorMut::new(format!("{prefix}.bias"), vec![n], &mut self.bias, false));
    }
}

/// Cached activations of an `FC → ReLU → dropout` block.
#[derive(Debug, Clone)]
pub struct PreludeCache {
    input: Vec<f64>,
    pre: Vec<f64>,
    /// Per-unit dropout multiplier: 0 or `1 / (1 - rate)`.
    keep: Vec<f64>,
}

/// `FC → ReLU → inverted dropout`. Returns the block output and, in
/// training mode, what the backward pass needs.
pub(crate) fn prelude_forward(
    fc: &Dense,
    x: &[f64],
    rate: f64,
    rng: Option<&mut Rng>,
) -> (Vec<f64>, Option<PreludeCache>) {
    let pre = fc.forward(x);
    let mut out: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    match rng {
        None => (out, None),
        Some(rng) => {
            let keep = dropout_mask(out.len(), rate, rng);
            for (o, k) in out.iter_mut().zip(&keep) {
                *o *= k;
            }
            let cache = PreludeCache {
                input: x.to_vec(),
                pre,
                keep,
            };
            (out, Some(cache))
        }
    }
}

/// Accumulates parameter gradients of a prelude block into `grad` and, when
/// requested, returns the gradient with respect to the block input.
pub(crate) fn prelude_backward(
    fc: &Dense,
    grad: &mut Dense,
    cache: &PreludeCache,
    d_out: &[f64],
    want_input_grad: bool,
) -> Option<Vec<f64>> {
    let d_pre: Vec<f64> = d_out
        .iter()
        .zip(&cache.keep)
        .zip(&cache.pre)
        .map(|((&d, &k), &p)| if p > 0.0 { d * k } else { 0.0 })
        .collect();
    grad.weight.outer_acc(&d_pre, &cache.input);
    axpy(1.0, &d_pre, &mut grad.bias);
    want_input_grad.then(|| {
        let mut dx = vec![0.0; fc.inputs()];
        fc.weight.matvec_t_acc(&d_pre, &mut dx);
        dx
    })
}

pub(crate) fn dropout_mask(n: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; n];
    }
    let scale = 1.0 / (1.0 - rate);
    (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { scale })
        .collect()
}

/// Forward-pass mode. Training draws dropout masks from the supplied
/// generator and records a trace for the backward pass.
pub enum Mode<'a> {
    Train(&'a mut Rng),
    Eval,
}

/// Read-only view of one named parameter tensor.
pub struct Tensor<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
    /// Subject to L2 weight decay (weights yes, biases no).
    pub decay: bool,
}

impl<'a> Tensor<'a> {
    fn new(name: String, shape: Vec<usize>, data: &'a [f64], decay: bool) -> Self {
        Self { name, shape, data, decay }
    }
}

pub struct TensorMut<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a mut [f64],
    pub decay: bool,
}

impl<'a> TensorMut<'a> {
    fn new(name: String, shape: Vec<usize>, data: &'a mut [f64], decay: bool) -> Self {
        Self { name, shape, data, decay }
    }
}

/// Ordered, named access to the trainable tensors of a model. The same
/// type doubles as its own gradient container.
pub trait Parameters {
    fn tensors(&self) -> Vec<Tensor<'_>>;
    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.data.len()).sum()
    }

    /// Concatenation of all tensors in visiting order.
    fn flatten(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data.iter().copied()).collect()
    }

    /// `self += alpha * other`, tensor by tensor.
    fn add_scaled(&mut self, alpha: f64, other: &Self)
    where
        Self: Sized,
    {
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            axpy(alpha, src.data, dst.data);
        }
    }

    fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.data.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Shared interface of the two regression heads, as used by the trainer.
pub trait Regressor: Parameters + Clone + Send + Sync {
    type Trace: Send;

    fn input_dim(&self) -> usize;

    /// Per-component input mean subtracted before the first layer.
    fn mean(&self) -> &[f64];

    fn set_mean(&mut self, mean: Vec<f64>) -> Result<()>;

    /// Mean over training inputs as this head sees them.
    fn fit_mean(train: &[FeatureSequence]) -> Result<Vec<f64>>;

    /// `steps` may carry zero-padded tail steps flagged `false` in `mask`.
    fn forward(&self, steps: &[&[f64]], mask: Option<&[bool]>, mode: Mode<'_>) -> Result<(f64, Option<Self::Trace>)>;

    /// Gradients of `d_out * output` with respect to every trainable tensor.
    fn backward(&self, trace: Option<&Self::Trace>, d_out: f64) -> Result<Self>;

    fn zeros_like(&self) -> Self;

    fn predict(&self, seq: &FeatureSequence) -> Result<f64> {
        Ok(self.forward(&seq.steps(), None, Mode::Eval)?.0)
    }
}

/// Mean of every training patch vector, component by component.
pub fn fit_zerocenter<'a>(vectors: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let mut it = vectors.into_iter();
    let first = it.next().ok_or(Error::EmptyTrainingSet)?;
    let mut sum = first.to_vec();
    let mut n = 1usize;
    for v in it {
        if v.len() != sum.len() {
            return Err(Error::Shape(format!(
                "zerocenter input of length {} among vectors of length {}",
                v.len(),
                sum.len()
            )));
        }
        axpy(1.0, v, &mut sum);
        n += 1;
    }
    sum.iter_mut().for_each(|s| *s /= n as f64);
    Ok(sum)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadKind {
    Rnn,
    Avg,
}

impl std::str::FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rnn" => Ok(HeadKind::Rnn),
            "avg" => Ok(HeadKind::Avg),
            other => Err(Error::Validation(format!("unknown head '{other}'"))),
        }
    }
}

impl HeadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HeadKind::Rnn => "rnn",
            HeadKind::Avg => "avg",
        }
    }
}

/// A trained head of either kind.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Rnn(GruHead),
    Avg(AvgHead),
}

impl Model {
    pub fn kind(&self) -> HeadKind {
        match self {
            Model::Rnn(_) => HeadKind::Rnn,
            Model::Avg(_) => HeadKind::Avg,
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Model::Rnn(m) => m.input_dim(),
            Model::Avg(m) => m.input_dim(),
        }
    }

    /// EVAL-mode prediction on the 0–1 scale.
    pub fn predict(&self, seq: &FeatureSequence) -> Result<f64> {
        match self {
            Model::Rnn(m) => m.predict(seq),
            Model::Avg(m) => m.predict(seq),
        }
    }
}
