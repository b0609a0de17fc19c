//! Transfer attacks crafted on a set of surrogate models.
//!
//! All four kinds run the same momentum-iterative loop under an l∞ budget:
//!
//! ```text
//! g ← m·g + ∇ / ‖∇‖₁
//! x' ← clip_[0,1]( clip_{x±ε}( x' + a·sign(g) ) )
//! ```
//!
//! and differ only in how the ascent direction `∇` is assembled from the
//! surrogates:
//!
//! - `baseline_mi`: gradient of the mean surrogate cross-entropy.
//! - `cse`: mean of the per-surrogate gradients, each scaled to unit l₂
//!   norm, so directions shared by all surrogates dominate.
//! - `sam`: take the baseline gradient `g₁` at `x'`, probe
//!   `x̃ = Π(x' + r·sign(g₁))` and use the baseline gradient at `x̃`.
//! - `cw`: the `sam` probe with the `cse` aggregation at both points.
//!
//! These are the desk-scale definitions used throughout the workbench.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;

use crate::nn::{Network, Scalar, Tensor};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum AttackKind {
    BaselineMi,
    Sam,
    Cse,
    Cw,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::BaselineMi, AttackKind::Sam, AttackKind::Cse, AttackKind::Cw];

    pub fn name(&self) -> &'static str {
        match self {
            AttackKind::BaselineMi => "baseline_mi",
            AttackKind::Sam => "sam",
            AttackKind::Cse => "cse",
            AttackKind::Cw => "cw",
        }
    }

    fn normalised(&self) -> bool {
        matches!(self, AttackKind::Cse | AttackKind::Cw)
    }

    fn probes(&self) -> bool {
        matches!(self, AttackKind::Sam | AttackKind::Cw)
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AttackKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownId(format!("attack `{}`", s)))
    }
}

pub const DEFAULT_EPSILON: f64 = 8.0 / 255.0;
pub const DEFAULT_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// l∞ budget.
    pub epsilon: f64,
    pub iterations: usize,
    pub step: f64,
    /// Momentum decay `m`.
    pub decay: f64,
    /// Probe radius `r` for `sam` and `cw`.
    pub radius: f64,
}

impl AttackSpec {
    /// Defaults: 20 iterations, step ε/8, decay 1.0, radius ε/16.
    pub fn new(kind: AttackKind, epsilon: f64) -> Self {
        Self {
            kind,
            epsilon,
            iterations: DEFAULT_ITERATIONS,
            step: epsilon / 8.0,
            decay: 1.0,
            radius: epsilon / 16.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilon > 0.0 && self.iterations >= 1 && self.step > 0.0 && self.decay >= 0.0 && self.radius >= 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{:?}", self)))
        }
    }
}

/// Originals, their perturbed copies and the surrogate loss seen along the
/// way.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialBatch<T> {
    pub originals: Tensor<T>,
    pub perturbed: Tensor<T>,
    pub labels: Vec<usize>,
    pub spec: AttackSpec,
    /// Per sample: mean surrogate loss at every gradient evaluation of the
    /// main iterate, then at the final point (`iterations + 1` entries).
    pub loss_trace: Vec<Vec<f64>>,
}

impl<T: Scalar> AdversarialBatch<T> {
    /// Largest `‖x′−x‖∞` in the batch.
    pub fn max_distortion(&self) -> f64 {
        self.originals
            .data()
            .iter()
            .zip(self.perturbed.data())
            .map(|(a, b)| (*a - *b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    /// `‖x′−x‖∞` per sample.
    pub fn distortions(&self) -> Vec<f64> {
        (0..self.labels.len())
            .map(|r| {
                self.originals
                    .row(r)
                    .iter()
                    .zip(self.perturbed.row(r))
                    .map(|(a, b)| (*a - *b).abs().as_f64())
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    pub fn perturbation(&self) -> Vec<T> {
        self.perturbed
            .data()
            .iter()
            .zip(self.originals.data())
            .map(|(p, o)| *p - *o)
            .collect()
    }
}

/// Per-sample loss and aggregated ascent direction at `x`.
fn direction<T: Scalar>(surrogates: &[&Network<T>], x: &Tensor<T>, labels: &[usize], normalised: bool) -> Result<(Vec<f64>, Vec<T>)> {
    let rows = x.rows();
    let d = x.row_len();
    let m = T::of(surrogates.len() as f64);
    let mut agg = vec![T::zero(); x.len()];
    let mut losses = vec![0.0; rows];
    for net in surrogates {
        let sg = net.sample_gradients(x, labels)?;
        for (l, v) in losses.iter_mut().zip(&sg.losses) {
            *l += v.as_f64() / surrogates.len() as f64;
        }
        let g = sg.grads.data();
        for r in 0..rows {
            let gr = &g[r * d..(r + 1) * d];
            let scale = if normalised {
                let n = gr.iter().map(|v| *v * *v).sum::<T>().sqrt();
                if n > T::zero() {
                    T::one() / (n * m)
                } else {
                    T::zero()
                }
            } else {
                T::one() / m
            };
            for (a, &v) in agg[r * d..(r + 1) * d].iter_mut().zip(gr) {
                *a = *a + v * scale;
            }
        }
    }
    if agg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("attack gradient".into()));
    }
    Ok((losses, agg))
}

fn sign<T: Scalar>(v: T) -> T {
    if v > T::zero() {
        T::one()
    } else if v < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

/// Moves `x` by `step·sign(dir)` and projects onto the ε-ball around `origin`
/// intersected with `[0,1]`.
fn signed_step<T: Scalar>(x: &[T], dir: &[T], origin: &[T], step: T, eps: T) -> Vec<T> {
    x.iter()
        .zip(dir)
        .zip(origin)
        .map(|((&v, &g), &o)| {
            let moved = v + step * sign(g);
            moved.max(o - eps).min(o + eps).max(T::zero()).min(T::one())
        })
        .collect()
}

/// Runs the attack on a batch of test samples.
pub fn attack<T: Scalar>(surrogates: &[&Network<T>], x: &Tensor<T>, labels: &[usize], spec: &AttackSpec) -> Result<AdversarialBatch<T>> {
    if surrogates.is_empty() {
        return Err(Error::NoSurrogates);
    }
    spec.validate()?;
    let rows = x.rows();
    let d = x.row_len();
    let (eps, step, radius, decay) = (T::of(spec.epsilon), T::of(spec.step), T::of(spec.radius), T::of(spec.decay));
    let origin = x.data();
    let mut cur = x.clone();
    let mut momentum = vec![T::zero(); x.len()];
    let mut trace = vec![Vec::with_capacity(spec.iterations + 1); rows];
    let normalised = spec.kind.normalised();
    for _ in 0..spec.iterations {
        let (losses, mut grad) = direction(surrogates, &cur, labels, normalised)?;
        for (t, l) in trace.iter_mut().zip(&losses) {
            t.push(*l);
        }
        if spec.kind.probes() {
            let probe = signed_step(cur.data(), &grad, origin, radius, eps);
            let probe = Tensor::new(x.shape().to_vec(), probe)?;
            grad = direction(surrogates, &probe, labels, normalised)?.1;
        }
        for r in 0..rows {
            let g = &grad[r * d..(r + 1) * d];
            let l1 = g.iter().map(|v| v.abs()).sum::<T>();
            let mo = &mut momentum[r * d..(r + 1) * d];
            for (mv, &gv) in mo.iter_mut().zip(g) {
                *mv = decay * *mv + if l1 > T::zero() { gv / l1 } else { T::zero() };
            }
        }
        let next = signed_step(cur.data(), &momentum, origin, step, eps);
        cur = Tensor::new(x.shape().to_vec(), next)?;
    }
    let losses = final_losses(surrogates, &cur, labels)?;
    for (t, l) in trace.iter_mut().zip(losses) {
        t.push(l);
    }
    Ok(AdversarialBatch {
        originals: x.clone(),
        perturbed: cur,
        labels: labels.to_vec(),
        spec: *spec,
        loss_trace: trace,
    })
}

fn final_losses<T: Scalar>(surrogates: &[&Network<T>], x: &Tensor<T>, labels: &[usize]) -> Result<Vec<f64>> {
    let mut losses = vec![0.0; x.rows()];
    for net in surrogates {
        let logits = net.logits(x)?;
        for ((l, row), &y) in losses.iter_mut().zip(logits.data().chunks_exact(net.classes())).zip(labels) {
            *l += crate::nn::cross_entropy(row, y).as_f64() / surrogates.len() as f64;
        }
    }
    Ok(losses)
}

/// Linearised loss change of the target under the surrogate-optimal l₂ step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaLoss {
    /// `ε·(ĝ/‖ĝ‖₂)ᵀ g`.
    pub delta: f64,
    /// `ε‖g‖₂`, reached when the gradients align.
    pub bound: f64,
    /// Set when the surrogate gradient vanished; `delta` is then 0.
    pub zero_surrogate: bool,
}

/// Predicts the target's loss increase for every row of `x` when the input
/// moves by ε along the surrogate's normalised gradient.
pub fn predict_delta_loss<T: Scalar>(
    surrogate: &Network<T>,
    target: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
    epsilon: f64,
) -> Result<Vec<DeltaLoss>> {
    let gs = surrogate.sample_gradients(x, labels)?.grads;
    let gt = target.sample_gradients(x, labels)?.grads;
    let d = x.row_len();
    Ok((0..x.rows())
        .map(|r| {
            let a = &gs.data()[r * d..(r + 1) * d];
            let b = &gt.data()[r * d..(r + 1) * d];
            delta_from_gradients(a, b, epsilon)
        })
        .collect())
}

/// [`DeltaLoss`] from a surrogate gradient `ĝ` and a target gradient `g`.
pub fn delta_from_gradients<T: Scalar>(surrogate: &[T], target: &[T], epsilon: f64) -> DeltaLoss {
    let mut dot = 0.0;
    let mut ns = 0.0;
    let mut nt = 0.0;
    for (a, b) in surrogate.iter().zip(target) {
        let (a, b) = (a.as_f64(), b.as_f64());
        dot += a * b;
        ns += a * a;
        nt += b * b;
    }
    let bound = epsilon * Float::sqrt(nt);
    if ns == 0.0 {
        return DeltaLoss {
            delta: 0.0,
            bound,
            zero_surrogate: true,
        };
    }
    DeltaLoss {
        delta: epsilon * dot / Float::sqrt(ns),
        bound,
        zero_surrogate: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_blobs_sized;
    use crate::zoo::{build, Arch, ArchitectureId};
    use crate::Shape;

    fn setup(arch: Arch, seed: u64) -> (Network<f64>, Tensor<f64>, Vec<usize>) {
        let ds = synth_blobs_sized(4, 6, 0.3, 8, seed).unwrap();
        let net = build::<f64>(ArchitectureId::new(arch, Shape::image(1, 8, 8), 4), seed).unwrap();
        let (x, y) = ds.all::<f64>();
        (net, x, y)
    }

    #[test]
    fn every_kind_respects_budget() {
        let (a, x, y) = setup(Arch::CnnA, 1);
        let (b, _, _) = setup(Arch::MlpSmall, 2);
        for kind in AttackKind::ALL {
            for eps in [2.0 / 255.0, 4.0 / 255.0, 8.0 / 255.0] {
                let mut spec = AttackSpec::new(kind, eps);
                spec.iterations = 5;
                let adv = attack(&[&a, &b], &x, &y, &spec).unwrap();
                assert!(adv.max_distortion() <= eps + 1e-6);
                assert!(adv.perturbed.data().iter().all(|v| (0.0..=1.0).contains(v)));
                assert_eq!(adv.loss_trace[0].len(), 6);
            }
        }
    }

    #[test]
    fn duplicated_surrogates_match_single() {
        let (a, x, y) = setup(Arch::MlpDeep, 3);
        let spec = AttackSpec::new(AttackKind::BaselineMi, 8.0 / 255.0);
        let one = attack(&[&a], &x, &y, &spec).unwrap();
        let three = attack(&[&a, &a, &a], &x, &y, &spec).unwrap();
        let diff = one
            .perturbed
            .data()
            .iter()
            .zip(three.perturbed.data())
            .map(|(p, q)| (p - q).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-12, "{}", diff);
    }

    #[test]
    fn logreg_single_step_closed_form() {
        let (net, x, y) = setup(Arch::Logreg, 4);
        let mut spec = AttackSpec::new(AttackKind::BaselineMi, 8.0 / 255.0);
        spec.iterations = 1;
        spec.decay = 0.37;
        let adv = attack(&[&net], &x, &y, &spec).unwrap();
        let probs = net.forward(&x).unwrap();
        let w = net.params()[1].weight.data();
        let (d, k) = (64, 4);
        for r in 0..x.rows() {
            for i in 0..d {
                let mut g = 0.0;
                for c in 0..k {
                    let e = if c == y[r] { 1.0 } else { 0.0 };
                    g += w[i * k + c] * (probs.row(r)[c] - e);
                }
                let want = (x.row(r)[i] + spec.step * g.signum()).clamp(0.0, 1.0);
                assert!((adv.perturbed.row(r)[i] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attack_raises_surrogate_loss() {
        let (net, x, y) = setup(Arch::MlpSmall, 5);
        for kind in AttackKind::ALL {
            let adv = attack(&[&net], &x, &y, &AttackSpec::new(kind, 8.0 / 255.0)).unwrap();
            let before: f64 = adv.loss_trace.iter().map(|t| t[0]).sum();
            let after: f64 = adv.loss_trace.iter().map(|t| *t.last().unwrap()).sum();
            assert!(after > before, "{}: {} -> {}", kind, before, after);
        }
    }

    #[test]
    fn no_surrogates_is_an_error() {
        let (_, x, y) = setup(Arch::Logreg, 0);
        let r = attack::<f64>(&[], &x, &y, &AttackSpec::new(AttackKind::Cw, 0.03));
        assert_eq!(r.unwrap_err(), Error::NoSurrogates);
    }

    #[test]
    fn delta_loss_equality_and_bound() {
        let (a, x, y) = setup(Arch::MlpSmall, 6);
        let (b, _, _) = setup(Arch::CnnGap, 7);
        let eps = 8.0 / 255.0;
        for dl in predict_delta_loss(&a, &a, &x, &y, eps).unwrap() {
            assert!((dl.delta - dl.bound).abs() <= 1e-9 * dl.bound.max(1.0));
        }
        for dl in predict_delta_loss(&a, &b, &x, &y, eps).unwrap() {
            assert!(dl.delta.abs() <= dl.bound + 1e-9);
        }
    }

    #[test]
    fn delta_loss_orthogonal_and_zero() {
        let dl = delta_from_gradients(&[1.0f64, 0.0], &[0.0, 3.0], 0.1);
        assert_eq!(dl.delta, 0.0);
        assert!((dl.bound - 0.3).abs() < 1e-15);
        let z = delta_from_gradients(&[0.0f64, 0.0], &[1.0, 1.0], 0.1);
        assert!(z.zero_surrogate && z.delta == 0.0);
    }

    #[test]
    fn names_round_trip() {
        for k in AttackKind::ALL {
            assert_eq!(k.name().parse::<AttackKind>().unwrap(), k);
        }
    }
}
