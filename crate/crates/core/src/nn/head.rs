//! Recurrent pooling head.
//!
//! Per step: subtract the input mean, `FC → ReLU → dropout`, GRU-1 over the
//! whole sequence; per step again `FC → ReLU → dropout`, GRU-2 over the
//! whole sequence. The last state of GRU-2 then passes through two more
//! `FC → ReLU → dropout → GRU` stages that run a single step each from a
//! zero state, and a final FC maps the 32-wide state to the score. Every
//! prelude FC is square.
//!
//! Padded steps (mask `false`) keep the recurrent state unchanged and draw
//! no dropout masks, so a padded sequence behaves exactly like the
//! unpadded one.

use super::{
    fit_zerocenter, prelude_backward, prelude_forward, Dense, GruCellCache, GruLayer, Mode,
    Parameters, PreludeCache, Regressor, Tensor, TensorMut, DEFAULT_DROPOUT,
};
use crate::error::{Error, Result};
use crate::types::{FeatureSequence, Rng};

/// Hidden sizes of the four GRU layers.
pub const PAPER_HIDDEN: [usize; 4] = [256, 128, 64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HeadDims {
    pub input: usize,
    pub hidden: [usize; 4],
}

impl HeadDims {
    pub fn paper(input: usize) -> Self {
        Self {
            input,
            hidden: PAPER_HIDDEN,
        }
    }

    /// Input width of each stage: the feature width, then each GRU's output.
    fn stage_inputs(&self) -> [usize; 4] {
        [self.input, self.hidden[0], self.hidden[1], self.hidden[2]]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruHead {
    pub dims: HeadDims,
    pub dropout: f64,
    /// Zerocenter mean, fitted on training data and frozen.
    pub mean: Vec<f64>,
    pub preludes: [Dense; 4],
    pub grus: [GruLayer; 4],
    pub output: Dense,
}

/// Activations of one TRAIN-mode forward pass.
#[derive(Debug, Clone)]
pub struct HeadTrace {
    seq_pre: [Vec<Option<PreludeCache>>; 2],
    seq_gru: [Vec<Option<GruCellCache>>; 2],
    single_pre: [PreludeCache; 2],
    single_gru: [GruCellCache; 2],
    last_state: Vec<f64>,
}

impl GruHead {
    pub fn zeros(dims: HeadDims, dropout: f64) -> Self {
        let si = dims.stage_inputs();
        Self {
            dims,
            dropout,
            mean: vec![0.0; dims.input],
            preludes: std::array::from_fn(|i| Dense::zeros(si[i], si[i])),
            grus: std::array::from_fn(|i| GruLayer::zeros(si[i], dims.hidden[i])),
            output: Dense::zeros(dims.hidden[3], 1),
        }
    }

    /// Glorot-uniform weights, zero biases, zero mean.
    pub fn init(dims: HeadDims, dropout: f64, rng: &mut Rng) -> Self {
        let si = dims.stage_inputs();
        let mut preludes = Vec::with_capacity(4);
        let mut grus = Vec::with_capacity(4);
        for (&n, &hidden) in si.iter().zip(&dims.hidden) {
            preludes.push(Dense::glorot(n, n, rng));
            grus.push(GruLayer::glorot(n, hidden, rng));
        }
        Self {
            dims,
            dropout,
            mean: vec![0.0; dims.input],
            preludes: preludes.try_into().unwrap(),
            grus: grus.try_into().unwrap(),
            output: Dense::glorot(dims.hidden[3], 1, rng),
        }
    }

    pub fn paper(input: usize, rng: &mut Rng) -> Self {
        Self::init(HeadDims::paper(input), DEFAULT_DROPOUT, rng)
    }

    fn check_input(&self, steps: &[&[f64]], mask: Option<&[bool]>) -> Result<()> {
        if steps.is_empty() {
            return Err(Error::EmptySequence);
        }
        if let Some(m) = mask {
            if m.len() != steps.len() {
                return Err(Error::Shape(format!(
                    "mask length {} for {} steps",
                    m.len(),
                    steps.len()
                )));
            }
            if !m.iter().any(|&v| v) {
                return Err(Error::EmptySequence);
            }
        }
        if let Some(bad) = steps.iter().find(|s| s.len() != self.dims.input) {
            return Err(Error::Shape(format!(
                "step of length {} for a head with input {}",
                bad.len(),
                self.dims.input
            )));
        }
        Ok(())
    }

    /// Per-step hidden states of a sequential stage; the state is carried
    /// unchanged across masked steps.
    fn run_stage(
        &self,
        stage: usize,
        inputs: &[Vec<f64>],
        valid: &[bool],
        rng: &mut Option<&mut Rng>,
        pre_cache: &mut Vec<Option<PreludeCache>>,
        gru_cache: &mut Vec<Option<GruCellCache>>,
    ) -> Vec<Vec<f64>> {
        let gru = &self.grus[stage];
        let mut h = vec![0.0; gru.hidden_dim()];
        let mut states = Vec::with_capacity(inputs.len());
        let training = rng.is_some();
        for (x, &ok) in inputs.iter().zip(valid) {
            if ok {
                let (d, pc) = prelude_forward(&self.preludes[stage], x, self.dropout, rng.as_deref_mut());
                let (next, gc) = gru.step(&d, &h, training);
                h = next;
                if training {
                    pre_cache.push(pc);
                    gru_cache.push(gc);
                }
            } else if training {
                pre_cache.push(None);
                gru_cache.push(None);
            }
            states.push(h.clone());
        }
        states
    }

    fn run_single(
        &self,
        stage: usize,
        x: &[f64],
        rng: &mut Option<&mut Rng>,
    ) -> (Vec<f64>, Option<(PreludeCache, GruCellCache)>) {
        let training = rng.is_some();
        let (d, pc) = prelude_forward(&self.preludes[stage], x, self.dropout, rng.as_deref_mut());
        let zero = vec![0.0; self.grus[stage].hidden_dim()];
        let (h, gc) = self.grus[stage].step(&d, &zero, training);
        (h, pc.zip(gc))
    }

    pub fn forward(&self, steps: &[&[f64]], mask: Option<&[bool]>, mode: Mode<'_>) -> Result<(f64, Option<HeadTrace>)> {
        self.check_input(steps, mask)?;
        let valid: Vec<bool> = match mask {
            Some(m) => m.to_vec(),
            None => vec![true; steps.len()],
        };
        let mut rng = match mode {
            Mode::Train(r) => Some(r),
            Mode::Eval => None,
        };
        let centred: Vec<Vec<f64>> = steps
            .iter()
            .map(|s| s.iter().zip(&self.mean).map(|(x, m)| x - m).collect())
            .collect();

        let mut pre = [Vec::new(), Vec::new()];
        let mut gru = [Vec::new(), Vec::new()];
        let [pre1, pre2] = &mut pre;
        let [gru1, gru2] = &mut gru;
        let h1 = self.run_stage(0, &centred, &valid, &mut rng, pre1, gru1);
        let h2 = self.run_stage(1, &h1, &valid, &mut rng, pre2, gru2);
        let last = h2.last().expect("non-empty sequence");
        let (h3, c3) = self.run_single(2, last, &mut rng);
        let (h4, c4) = self.run_single(3, &h3, &mut rng);
        let y = self.output.forward(&h4)[0];

        let trace = match (c3, c4) {
            (Some((p3, g3)), Some((p4, g4))) => Some(HeadTrace {
                seq_pre: pre,
                seq_gru: gru,
                single_pre: [p3, p4],
                single_gru: [g3, g4],
                last_state: h4,
            }),
            _ => None,
        };
        Ok((y, trace))
    }

    pub fn backward(&self, trace: Option<&HeadTrace>, d_out: f64) -> Result<GruHead> {
        let tr = trace.ok_or(Error::TraceRequired)?;
        let mut g = self.zeros_like();

        g.output.weight.data.iter_mut().zip(&tr.last_state).for_each(|(w, h)| *w = d_out * h);
        g.output.bias[0] = d_out;
        let mut d: Vec<f64> = self.output.weight.data.iter().map(|w| w * d_out).collect();

        // single-step stages 4 then 3; the zero initial state takes no gradient
        for (slot, stage) in [(1usize, 3usize), (0, 2)] {
            let (dx, _) = self.grus[stage].step_backward(&mut g.grus[stage], &tr.single_gru[slot], &d, true);
            d = prelude_backward(&self.preludes[stage], &mut g.preludes[stage], &tr.single_pre[slot], &dx.unwrap(), true)
                .unwrap();
        }

        // GRU-2: gradient enters at the final state only
        let t_len = tr.seq_gru[1].len();
        let mut d_h1 = vec![vec![0.0; self.dims.hidden[0]]; t_len];
        let mut dh = d;
        for t in (0..t_len).rev() {
            if let (Some(gc), Some(pc)) = (&tr.seq_gru[1][t], &tr.seq_pre[1][t]) {
                let (dx, dprev) = self.grus[1].step_backward(&mut g.grus[1], gc, &dh, true);
                dh = dprev;
                d_h1[t] = prelude_backward(&self.preludes[1], &mut g.preludes[1], pc, &dx.unwrap(), true).unwrap();
            }
        }

        // GRU-1: gradient enters at every step through stage 2
        let mut dh = vec![0.0; self.dims.hidden[0]];
        for t in (0..t_len).rev() {
            super::axpy(1.0, &d_h1[t], &mut dh);
            if let (Some(gc), Some(pc)) = (&tr.seq_gru[0][t], &tr.seq_pre[0][t]) {
                let (dx, dprev) = self.grus[0].step_backward(&mut g.grus[0], gc, &dh, true);
                dh = dprev;
                prelude_backward(&self.preludes[0], &mut g.preludes[0], pc, &dx.unwrap(), false);
            }
        }
        Ok(g)
    }
}

impl Parameters for GruHead {
    fn tensors(&self) -> Vec<Tensor<'_>> {
        let mut out = Vec::new();
        for i in 0..4 {
            self.preludes[i].tensors(&format!("prelude{}", i + 1), &mut out);
            self.grus[i].tensors(&format!("gru{}", i + 1), &mut out);
        }
        self.output.tensors("output", &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        for (i, (p, g)) in self.preludes.iter_mut().zip(self.grus.iter_mut()).enumerate() {
            p.tensors_mut(&format!("prelude{}", i + 1), &mut out);
            g.tensors_mut(&format!("gru{}", i + 1), &mut out);
        }
        self.output.tensors_mut("output", &mut out);
        out
    }
}

impl Regressor for GruHead {
    type Trace = HeadTrace;

    fn input_dim(&self) -> usize {
        self.dims.input
    }

    fn mean(&self) -> &[f64] {
        &self.mean
    }

    fn set_mean(&mut self, mean: Vec<f64>) -> Result<()> {
        if mean.len() != self.dims.input {
            return Err(Error::Shape(format!("mean of length {} for input {}", mean.len(), self.dims.input)));
        }
        self.mean = mean;
        Ok(())
    }

    fn fit_mean(train: &[FeatureSequence]) -> Result<Vec<f64>> {
        fit_zerocenter(train.iter().flat_map(|s| s.vectors.iter().map(|v| v.values.as_slice())))
    }

    fn forward(&self, steps: &[&[f64]], mask: Option<&[bool]>, mode: Mode<'_>) -> Result<(f64, Option<HeadTrace>)> {
        GruHead::forward(self, steps, mask, mode)
    }

    fn backward(&self, trace: Option<&HeadTrace>, d_out: f64) -> Result<Self> {
        GruHead::backward(self, trace, d_out)
    }

    fn zeros_like(&self) -> Self {
        GruHead::zeros(self.dims, self.dropout)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{finite_difference_check, randomize};
    use crate::types::rng_from_seed;
    use rand::Rng as _;

    fn tiny() -> HeadDims {
        HeadDims { input: 6, hidden: [5, 4, 3, 2] }
    }

    fn random_steps(t: usize, d: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
        (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
    }

    fn refs(v: &[Vec<f64>]) -> Vec<&[f64]> {
        v.iter().map(|s| s.as_slice()).collect()
    }

    #[test]
    fn zero_network_outputs_zero() {
        let head = GruHead::zeros(tiny(), 0.25);
        let mut rng = rng_from_seed(0);
        let steps = random_steps(4, 6, &mut rng);
        assert_eq!(head.forward(&refs(&steps), None, Mode::Eval).unwrap().0, 0.0);
    }

    #[test]
    fn eval_is_deterministic_train_is_not_without_same_rng() {
        let mut rng = rng_from_seed(1);
        let head = GruHead::init(tiny(), 0.25, &mut rng);
        let steps = random_steps(5, 6, &mut rng);
        let a = head.forward(&refs(&steps), None, Mode::Eval).unwrap();
        let b = head.forward(&refs(&steps), None, Mode::Eval).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert!(a.1.is_none());
        let t1 = head.forward(&refs(&steps), None, Mode::Train(&mut rng_from_seed(3))).unwrap();
        let t2 = head.forward(&refs(&steps), None, Mode::Train(&mut rng_from_seed(3))).unwrap();
        assert_eq!(t1.0.to_bits(), t2.0.to_bits());
        assert!(t1.1.is_some());
    }

    #[test]
    fn single_step_reduces_to_cells() {
        let mut rng = rng_from_seed(2);
        let mut head = GruHead::init(tiny(), 0.0, &mut rng);
        randomize(&mut head, 0.5, &mut rng);
        head.mean = (0..6).map(|_| rng.random_range(-0.2..0.2)).collect();
        let x: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = head.forward(&[&x], None, Mode::Eval).unwrap().0;

        let relu_fc = |fc: &Dense, v: &[f64]| -> Vec<f64> { fc.forward(v).into_iter().map(|a| a.max(0.0)).collect() };
        let cell = |i: usize, v: &[f64]| {
            let zero = vec![0.0; head.dims.hidden[i]];
            super::super::gru_cell_forward(&relu_fc(&head.preludes[i], v), &zero, &head.grus[i]).unwrap()
        };
        let centred: Vec<f64> = x.iter().zip(&head.mean).map(|(a, m)| a - m).collect();
        let h = cell(3, &cell(2, &cell(1, &cell(0, &centred))));
        let want = head.output.forward(&h)[0];
        assert_eq!(got.to_bits(), want.to_bits());
    }

    #[test]
    fn errors() {
        let head = GruHead::zeros(tiny(), 0.0);
        assert!(matches!(head.forward(&[], None, Mode::Eval), Err(Error::EmptySequence)));
        let bad = vec![0.0; 5];
        assert!(matches!(head.forward(&[&bad], None, Mode::Eval), Err(Error::Shape(_))));
        let ok = vec![0.0; 6];
        assert!(matches!(head.forward(&[&ok], Some(&[false]), Mode::Eval), Err(Error::EmptySequence)));
        assert!(matches!(head.backward(None, 1.0), Err(Error::TraceRequired)));
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = rng_from_seed(4);
        let head = GruHead::init(tiny(), 0.25, &mut rng);
        let steps = random_steps(3, 6, &mut rng);
        let (_, tr) = head.forward(&refs(&steps), None, Mode::Train(&mut rng)).unwrap();
        let g = head.backward(tr.as_ref(), 0.0).unwrap();
        assert!(g.flatten().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradients_match_finite_differences() {
        for seed in 0..5 {
            let mut rng = rng_from_seed(100 + seed);
            let mut head = GruHead::init(tiny(), 0.0, &mut rng);
            randomize(&mut head, 0.5, &mut rng);
            let steps = random_steps(3, 6, &mut rng);
            let worst = finite_difference_check(&head, &refs(&steps), None, 1e-5);
            assert!(worst < 1e-4, "seed {seed}: max relative error {worst}");
        }
    }

    #[test]
    fn gradients_with_dropout_masks_match_finite_differences() {
        // Dropout masks replayed from a fixed generator make the map deterministic.
        let mut rng = rng_from_seed(8);
        let mut head = GruHead::init(tiny(), 0.25, &mut rng);
        randomize(&mut head, 0.5, &mut rng);
        let steps = random_steps(4, 6, &mut rng);
        let f = |h: &GruHead| h.forward(&refs(&steps), None, Mode::Train(&mut rng_from_seed(77))).unwrap().0;
        let (_, tr) = head.forward(&refs(&steps), None, Mode::Train(&mut rng_from_seed(77))).unwrap();
        let g = head.backward(tr.as_ref(), 1.0).unwrap().flatten();
        let mut probe = head.clone();
        let mut idx = 0;
        let n = probe.num_params();
        let eps = 1e-5;
        let mut worst: f64 = 0.0;
        while idx < n {
            let orig = get_flat(&probe, idx);
            set_flat(&mut probe, idx, orig + eps);
            let up = f(&probe);
            set_flat(&mut probe, idx, orig - eps);
            let down = f(&probe);
            set_flat(&mut probe, idx, orig);
            let num = (up - down) / (2.0 * eps);
            worst = worst.max((num - g[idx]).abs() / (num.abs() + g[idx].abs()).max(1e-6));
            idx += 7;
        }
        assert!(worst < 1e-4, "{worst}");
    }

    fn get_flat(p: &GruHead, mut i: usize) -> f64 {
        for t in p.tensors() {
            if i < t.data.len() {
                return t.data[i];
            }
            i -= t.data.len();
        }
        unreachable!()
    }

    fn set_flat(p: &mut GruHead, mut i: usize, v: f64) {
        for t in p.tensors_mut() {
            if i < t.data.len() {
                t.data[i] = v;
                return;
            }
            i -= t.data.len();
        }
    }

    #[test]
    fn zeroed_prelude_channel_blocks_input_column_gradient() {
        let mut rng = rng_from_seed(5);
        let mut head = GruHead::init(tiny(), 0.0, &mut rng);
        randomize(&mut head, 0.5, &mut rng);
        let k = 2;
        let d = head.dims.input;
        head.preludes[0].weight.data[k * d..(k + 1) * d].iter_mut().for_each(|w| *w = 0.0);
        // positive biases keep the remaining ReLU units active
        for p in head.preludes.iter_mut() {
            p.bias.iter_mut().for_each(|b| *b = 2.0);
        }
        head.preludes[0].bias[k] = 0.0;
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let (_, tr) = head.forward(&[&x], None, Mode::Train(&mut rng)).unwrap();
        let g = head.backward(tr.as_ref(), 1.0).unwrap();
        for m in [&g.grus[0].w_z, &g.grus[0].w_r, &g.grus[0].w_h] {
            for row in 0..m.rows {
                assert_eq!(m.data[row * m.cols + k], 0.0);
            }
        }
        // the other columns do receive gradient
        assert!(g.grus[0].w_h.data.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn hidden_states_stay_inside_unit_interval() {
        let mut rng = rng_from_seed(6);
        let mut head = GruHead::init(tiny(), 0.0, &mut rng);
        randomize(&mut head, 1.0, &mut rng);
        let steps: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        let (_, tr) = head.forward(&refs(&steps), None, Mode::Train(&mut rng)).unwrap();
        assert!(tr.unwrap().last_state.iter().all(|h| h.abs() < 1.0));
        let mut h = vec![0.0; 5];
        for x in &steps {
            let (d, _) = prelude_forward(&head.preludes[0], x, 0.0, None);
            h = head.grus[0].step(&d, &h, false).0;
            assert!(h.iter().all(|v| v.abs() < 1.0));
        }
    }

    #[test]
    fn saturated_states_never_exceed_one() {
        // tanh and the logistic gate round to exactly ±1 / 0 for huge inputs
        let mut rng = rng_from_seed(7);
        let mut head = GruHead::init(tiny(), 0.0, &mut rng);
        randomize(&mut head, 5.0, &mut rng);
        let steps: Vec<Vec<f64>> = (0..20).map(|_| (0..6).map(|_| rng.random_range(-500.0..500.0)).collect()).collect();
        let mut h = vec![0.0; 5];
        for x in &steps {
            let (d, _) = prelude_forward(&head.preludes[0], x, 0.0, None);
            h = head.grus[0].step(&d, &h, false).0;
            assert!(h.iter().all(|v| v.abs() <= 1.0));
        }
    }
}
