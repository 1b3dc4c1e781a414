//! Helpers shared by unit tests, integration tests and benches.

use rand::Rng as _;

use crate::nn::{Mode, Parameters, Regressor};
use crate::types::{rng_from_seed, Rng};

/// Overwrites every trainable value with `uniform(-scale, scale)`, biases included.
pub fn randomize<P: Parameters>(params: &mut P, scale: f64, rng: &mut Rng) {
    for t in params.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v = rng.random_range(-scale..scale));
    }
}

fn nth_mut<P: Parameters>(params: &mut P, mut i: usize) -> &mut f64 {
    for t in params.tensors_mut() {
        if i < t.data.len() {
            return &mut t.data[i];
        }
        i -= t.data.len();
    }
    panic!("parameter index out of range")
}

/// Largest relative error between the analytic gradient of the output and
/// central differences with step `eps`, over every parameter. The model's
/// dropout should be zero so the training-mode trace matches EVAL mode.
/// Gradients below `1e-6` in magnitude are compared absolutely, since the
/// difference quotient itself carries round-off of roughly `1e-16 / eps`.
pub fn finite_difference_check<R: Regressor>(model: &R, steps: &[&[f64]], mask: Option<&[bool]>, eps: f64) -> f64 {
    let (_, trace) = model
        .forward(steps, mask, Mode::Train(&mut rng_from_seed(0)))
        .expect("forward");
    let analytic = model.backward(trace.as_ref(), 1.0).expect("backward").flatten();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *nth_mut(&mut probe, i);
        *nth_mut(&mut probe, i) = orig + eps;
        let up = probe.forward(steps, mask, Mode::Eval).expect("forward").0;
        *nth_mut(&mut probe, i) = orig - eps;
        let down = probe.forward(steps, mask, Mode::Eval).expect("forward").0;
        *nth_mut(&mut probe, i) = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max((numeric - a).abs() / (numeric.abs() + a.abs()).max(1e-6));
    }
    worst
}
