//! Order-blind baseline: element-wise mean of the sequence, then
//! `zerocenter → FC(256) → ReLU → dropout → FC(1)`.

use super::{
    fit_zerocenter, prelude_backward, prelude_forward, Dense, Mode, Parameters, PreludeCache,
    Regressor, Tensor, TensorMut, DEFAULT_DROPOUT,
};
use crate::error::{Error, Result};
use crate::types::{FeatureSequence, Rng};

pub const BASELINE_HIDDEN: usize = 256;

/// Component-wise mean over all vectors of a sequence.
pub fn average_pool(seq: &FeatureSequence) -> Result<Vec<f64>> {
    pool(&seq.steps(), None)
}

fn pool(steps: &[&[f64]], mask: Option<&[bool]>) -> Result<Vec<f64>> {
    let first = steps.first().ok_or(Error::EmptySequence)?;
    let mut sum = vec![0.0; first.len()];
    let mut n = 0usize;
    for (t, s) in steps.iter().enumerate() {
        if mask.is_some_and(|m| !m[t]) {
            continue;
        }
        if s.len() != sum.len() {
            return Err(Error::Shape(format!("step of length {} among {}", s.len(), sum.len())));
        }
        super::axpy(1.0, s, &mut sum);
        n += 1;
    }
    if n == 0 {
        return Err(Error::EmptySequence);
    }
    sum.iter_mut().for_each(|v| *v /= n as f64);
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvgHead {
    pub dropout: f64,
    pub mean: Vec<f64>,
    pub hidden: Dense,
    pub output: Dense,
}

#[derive(Debug, Clone)]
pub struct AvgTrace {
    hidden: PreludeCache,
    activation: Vec<f64>,
}

impl AvgHead {
    pub fn zeros(input: usize, hidden: usize, dropout: f64) -> Self {
        Self {
            dropout,
            mean: vec![0.0; input],
            hidden: Dense::zeros(input, hidden),
            output: Dense::zeros(hidden, 1),
        }
    }

    pub fn init(input: usize, hidden: usize, dropout: f64, rng: &mut Rng) -> Self {
        Self {
            dropout,
            mean: vec![0.0; input],
            hidden: Dense::glorot(input, hidden, rng),
            output: Dense::glorot(hidden, 1, rng),
        }
    }

    pub fn paper(input: usize, rng: &mut Rng) -> Self {
        Self::init(input, BASELINE_HIDDEN, DEFAULT_DROPOUT, rng)
    }

    /// Forward pass on an already pooled vector.
    pub fn forward_pooled(&self, pooled: &[f64], mode: Mode<'_>) -> Result<(f64, Option<AvgTrace>)> {
        if pooled.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "pooled vector of length {} for input {}",
                pooled.len(),
                self.input_dim()
            )));
        }
        let centred: Vec<f64> = pooled.iter().zip(&self.mean).map(|(x, m)| x - m).collect();
        let rng = match mode {
            Mode::Train(r) => Some(r),
            Mode::Eval => None,
        };
        let (a, cache) = prelude_forward(&self.hidden, &centred, self.dropout, rng);
        let y = self.output.forward(&a)[0];
        Ok((y, cache.map(|hidden| AvgTrace { hidden, activation: a })))
    }
}

impl Parameters for AvgHead {
    fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        self.hidden.tensors("fc1", &mut out);
        self.output.tensors("output", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        self.hidden.tensors_mut("fc1", &mut out);
        self.output.tensors_mut("output", &mut out);
        out
    }
}

impl Regressor for AvgHead {
    type Trace = AvgTrace;

    fn input_dim(&self) -> usize {
        self.hidden.inputs()
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn set_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        if mean.len() != self.input_dim() {
            return Err(Error::Shape(format!("mean of length {} for input {}", mean.len(), self.input_dim())));
        }
        self.mean = mean;
        Ok(())
    }

    /// Mean of the pooled training vectors.
    fn fit_mean(train: &[FeatureSequence]) -> Result<Vec<f64>> {
        let pooled = train.iter().map(average_pool).collect::<Result<Vec<_>>>()?;
        fit_zerocenter(pooled.iter().map(|v| v.as_slice()))
    }

    fn forward(&self, steps: &[&[f64]], mask: Option<&[bool]>, mode: Mode<'_>) -> Result<(f64, Option<AvgTrace>)> {
        if let Some(m) = mask {
            if m.len() != steps.len() {
                return Err(Error::Shape(format!("mask length {} for {} steps", m.len(), steps.len())));
            }
        }
        self.forward_pooled(&pool(steps, mask)?, mode)
    }

    fn backward(&self, trace: Option<&AvgTrace>, d_out: f64) -> Result<Self> {
        let tr = trace.ok_or(Error::TraceRequired)?;
        let mut g = self.zeros_like();
        g.output.weight.data.iter_mut().zip(&tr.activation).for_each(|(w, a)| *w = d_out * a);
        g.output.bias[0] = d_out;
        let d_a: Vec<f64> = self.output.weight.data.iter().map(|w| w * d_out).collect();
        prelude_backward(&self.hidden, &mut g.hidden, &tr.hidden, &d_a, false);
        Ok(g)
    }

    fn zeros_like(&self) -> Self {
        AvgHead::zeros(self.input_dim(), self.hidden.outputs(), self.dropout)
    }
}
