//! Gated recurrent unit layer.
//!
//! ```text
//! z  = σ(W_z x + U_z h + b_z)
//! r  = σ(W_r x + U_r h + b_r)
//! h̃  = tanh(W_h x + U_h (r ⊙ h) + b_h)
//! h' = z ⊙ h + (1 − z) ⊙ h̃
//! ```

use super::{axpy, logistic, Matrix, Tensor, TensorMut};
use crate::error::{Error, Result};
use crate::types::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub w_z: Matrix,
    pub w_r: Matrix,
    pub w_h: Matrix,
    pub u_z: Matrix,
    pub u_r: Matrix,
    pub u_h: Matrix,
    pub b_z: Vec<f64>,
    pub b_r: Vec<f64>,
    pub b_h: Vec<f64>,
}

/// Everything the backward pass of one cell step needs.
#[derive(Debug, Clone)]
pub struct GruCellCache {
    x: Vec<f64>,
    h_prev: Vec<f64>,
    z: Vec<f64>,
    r: Vec<f64>,
    cand: Vec<f64>,
}

impl GruLayer {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            w_z: Matrix::zeros(hidden, input),
            w_r: Matrix::zeros(hidden, input),
            w_h: Matrix::zeros(hidden, input),
            u_z: Matrix::zeros(hidden, hidden),
            u_r: Matrix::zeros(hidden, hidden),
            u_h: Matrix::zeros(hidden, hidden),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    /// Glorot-uniform matrices (per gate), zero biases.
    pub fn glorot(input: usize, hidden: usize, rng: &mut Rng) -> Self {
        Self {
            w_z: Matrix::glorot(hidden, input, rng),
            w_r: Matrix::glorot(hidden, input, rng),
            w_h: Matrix::glorot(hidden, input, rng),
            u_z: Matrix::glorot(hidden, hidden, rng),
            u_r: Matrix::glorot(hidden, hidden, rng),
            u_h: Matrix::glorot(hidden, hidden, rng),
            b_z: vec![0.0; hidden],
            b_r: vec![0.0; hidden],
            b_h: vec![0.0; hidden],
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_z.cols
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_z.rows
    }

    /// One step. Returns the new state and, if `cache` is set, the values
    /// needed to differentiate it.
    pub(crate) fn step(&self, x: &[f64], h_prev: &[f64], cache: bool) -> (Vec<f64>, Option<GruCellCache>) {
        let mut z = self.b_z.clone();
        self.w_z.matvec_acc(x, &mut z);
        self.u_z.matvec_acc(h_prev, &mut z);
        z.iter_mut().for_each(|v| *v = logistic(*v));

        let mut r = self.b_r.clone();
        self.w_r.matvec_acc(x, &mut r);
        self.u_r.matvec_acc(h_prev, &mut r);
        r.iter_mut().for_each(|v| *v = logistic(*v));

        let rh: Vec<f64> = r.iter().zip(h_prev).map(|(a, b)| a * b).collect();
        let mut cand = self.b_h.clone();
        self.w_h.matvec_acc(x, &mut cand);
        self.u_h.matvec_acc(&rh, &mut cand);
        cand.iter_mut().for_each(|v| *v = v.tanh());

        let h: Vec<f64> = z
            .iter()
            .zip(h_prev)
            .zip(&cand)
            .map(|((&zi, &hp), &c)| zi * hp + (1.0 - zi) * c)
            .collect();
        let cache = cache.then(|| GruCellCache {
            x: x.to_vec(),
            h_prev: h_prev.to_vec(),
            z,
            r,
            cand,
        });
        (h, cache)
    }

    /// Backpropagates `d_h` through one cached step, accumulating parameter
    /// gradients into `grad`. Returns `(d_x, d_h_prev)`; `d_x` is skipped
    /// when `want_dx` is false.
    pub(crate) fn step_backward(
        &self,
        grad: &mut GruLayer,
        c: &GruCellCache,
        d_h: &[f64],
        want_dx: bool,
    ) -> (Option<Vec<f64>>, Vec<f64>) {
        let n = d_h.len();
        let mut d_prev: Vec<f64> = d_h.iter().zip(&c.z).map(|(d, z)| d * z).collect();
        let mut a_z = vec![0.0; n];
        let mut a_h = vec![0.0; n];
        for i in 0..n {
            let d_z = d_h[i] * (c.h_prev[i] - c.cand[i]);
            a_z[i] = d_z * c.z[i] * (1.0 - c.z[i]);
            let d_cand = d_h[i] * (1.0 - c.z[i]);
            a_h[i] = d_cand * (1.0 - c.cand[i] * c.cand[i]);
        }
        let rh: Vec<f64> = c.r.iter().zip(&c.h_prev).map(|(a, b)| a * b).collect();
        let mut d_rh = vec![0.0; n];
        self.u_h.matvec_t_acc(&a_h, &mut d_rh);
        let mut a_r = vec![0.0; n];
        for i in 0..n {
            d_prev[i] += d_rh[i] * c.r[i];
            let d_r = d_rh[i] * c.h_prev[i];
            a_r[i] = d_r * c.r[i] * (1.0 - c.r[i]);
        }
        self.u_z.matvec_t_acc(&a_z, &mut d_prev);
        self.u_r.matvec_t_acc(&a_r, &mut d_prev);

        grad.w_z.outer_acc(&a_z, &c.x);
        grad.w_r.outer_acc(&a_r, &c.x);
        grad.w_h.outer_acc(&a_h, &c.x);
        grad.u_z.outer_acc(&a_z, &c.h_prev);
        grad.u_r.outer_acc(&a_r, &c.h_prev);
        grad.u_h.outer_acc(&a_h, &rh);
        axpy(1.0, &a_z, &mut grad.b_z);
        axpy(1.0, &a_r, &mut grad.b_r);
        axpy(1.0, &a_h, &mut grad.b_h);

        let d_x = want_dx.then(|| {
            let mut d_x = vec![0.0; self.input_dim()];
            self.w_z.matvec_t_acc(&a_z, &mut d_x);
            self.w_r.matvec_t_acc(&a_r, &mut d_x);
            self.w_h.matvec_t_acc(&a_h, &mut d_x);
            d_x
        });
        (d_x, d_prev)
    }

    pub(crate) fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<Tensor<'a>>) {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        for (name, m) in [("w_z", &self.w_z), ("w_r", &self.w_r), ("w_h", &self.w_h)] {
            out.push(Tensor::new(format!("{prefix}.{name}"), vec![h, i], &m.data, true));
        }
        for (name, m) in [("u_z", &self.u_z), ("u_r", &self.u_r), ("u_h", &self.u_h)] {
            out.push(Tensor::new(format!("{prefix}.{name}"), vec![h, h], &m.data, true));
        }
        for (name, b) in [("b_z", &self.b_z), ("b_r", &self.b_r), ("b_h", &self.b_h)] {
            out.push(Tensor::new(format!("{prefix}.{name}"), vec![h], b, false));
        }
    }

    pub(crate) fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        let (h, i) = (self.hidden_dim(), self.input_dim());
        let GruLayer { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h } = self;
        for (name, m) in [("w_z", w_z), ("w_r", w_r), ("w_h", w_h)] {
            out.push(TensorMut::new(format!("{prefix}.{name}"), vec![h, i], &mut m.data, true));
        }
        for (name, m) in [("u_z", u_z), ("u_r", u_r), ("u_h", u_h)] {
            out.push(TensorMut::new(format!("{prefix}.{name}"), vec![h, h], &mut m.data, true));
        }
        for (name, b) in [("b_z", b_z), ("b_r", b_r), ("b_h", b_h)] {
            out.push(TensorMut::new(format!("{prefix}.{name}"), vec![h], b, false));
        }
    }
}

/// Single GRU step with shape checking.
pub fn gru_cell_forward(x: &[f64], h_prev: &[f64], p: &GruLayer) -> Result<Vec<f64>> {
    if x.len() != p.input_dim() || h_prev.len() != p.hidden_dim() {
        return Err(Error::Shape(format!(
            "GRU cell expects input {} and state {}, got {} and {}",
            p.input_dim(),
            p.hidden_dim(),
            x.len(),
            h_prev.len()
        )));
    }
    Ok(p.step(x, h_prev, false).0)
}
