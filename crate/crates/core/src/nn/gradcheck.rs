//! Central finite-difference checks for the hand-written backward passes.
//!
//! These only ever call the forward loss, so they stay independent of the
//! backward code they verify.

use alloc::vec::Vec;

use num_traits::Float;

use super::{Network, Tensor};
use crate::Result;

/// `‖a − b‖₂ / (‖a‖₂ + ‖b‖₂)`, zero when both vectors vanish.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: f64| Float::sqrt(v);
    let diff = norm(analytic.iter().zip(numeric).map(|(a, n)| (a - n) * (a - n)).sum());
    let scale = norm(analytic.iter().map(|a| a * a).sum()) + norm(numeric.iter().map(|n| n * n).sum());
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

/// Distance from the batch's activations to the nearest ReLU or max-pool
/// kink. Finite differences are only meaningful when this comfortably
/// exceeds the step size.
pub fn kink_margin(net: &Network<f64>, batch: &Tensor<f64>) -> Result<f64> {
    net.kink_margin(batch)
}

/// Compares `loss_and_param_grads` against central differences of `loss`
/// for every parameter; returns the relative error.
pub fn param_grad_error(net: &Network<f64>, batch: &Tensor<f64>, labels: &[usize], h: f64) -> Result<f64> {
    let (_, grads) = net.loss_and_param_grads(batch, labels)?;
    let analytic: Vec<f64> = grads.slices().flat_map(|s| s.iter().copied()).collect();
    let mut probe = net.clone();
    let mut numeric = Vec::with_capacity(analytic.len());
    let slots: Vec<(usize, bool, usize)> = net
        .params()
        .iter()
        .enumerate()
        .flat_map(|(i, p)| {
            let w = (0..p.weight.len()).map(move |k| (i, true, k));
            let b = (0..p.bias.len()).map(move |k| (i, false, k));
            w.chain(b)
        })
        .collect();
    for (layer, is_weight, k) in slots {
        let orig = *slot(&mut probe, layer, is_weight, k);
        *slot(&mut probe, layer, is_weight, k) = orig + h;
        let up = probe.loss(batch, labels)?;
        *slot(&mut probe, layer, is_weight, k) = orig - h;
        let down = probe.loss(batch, labels)?;
        *slot(&mut probe, layer, is_weight, k) = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(relative_error(&analytic, &numeric))
}

fn slot(net: &mut Network<f64>, layer: usize, is_weight: bool, k: usize) -> &mut f64 {
    let p = &mut net.params_mut()[layer];
    let t = if is_weight { &mut p.weight } else { &mut p.bias };
    &mut t.data_mut()[k]
}

/// Compares `input_gradient` against central differences on the inputs.
pub fn input_grad_error(net: &Network<f64>, x: &Tensor<f64>, label: usize, h: f64) -> Result<f64> {
    let analytic = net.input_gradient(x, label)?.into_data();
    let mut shape = alloc::vec![1];
    shape.extend(net.input_shape().dims());
    let mut probe = Tensor::new(shape, x.data().to_vec())?;
    let mut numeric = Vec::with_capacity(analytic.len());
    for k in 0..probe.len() {
        let orig = probe.data()[k];
        probe.data_mut()[k] = orig + h;
        let up = net.loss(&probe, &[label])?;
        probe.data_mut()[k] = orig - h;
        let down = net.loss(&probe, &[label])?;
        probe.data_mut()[k] = orig;
        numeric.push((up - down) / (2.0 * h));
    }
    Ok(relative_error(&analytic, &numeric))
}
