//! Optimizers and learning-rate schedulers.
//!
//! Update rules (`g` already includes the weight-decay term `λθ`):
//!
//! | kind           | update                                                        |
//! |----------------|---------------------------------------------------------------|
//! | `sgd`          | `θ -= μ g`                                                    |
//! | `sgd_momentum` | `v = ν v + g`, `θ -= μ v`                                     |
//! | `sgd_nesterov` | `v = ν v + g`, `θ -= μ (g + ν v)`                             |
//! | `adam`         | bias-corrected moments, β = (0.9, 0.999), eps 1e-8           |
//! | `nadam`        | Adam with the look-ahead numerator `β₁ m̂ + (1-β₁) g / (1-β₁ᵗ)` |
//! | `adagrad`      | `s += g²`, `θ -= μ g / (√s + 1e-10)`                          |
//! | `asgd`         | plain SGD plus a running average of the iterates after `t₀`   |
//! | `rprop`        | sign-based steps, η± = (1.2, 0.5), steps in [1e-6, 50]        |
//! | `rmsprop`      | `s = 0.99 s + 0.01 g²`, `θ -= μ g / (√s + 1e-8)`              |
//!
//! The learning rate passed to [`Optimizer::step`] comes from
//! [`SchedulerSpec::lr_at`] times the tuned base rate, so one optimizer state
//! survives schedule changes between epochs.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use num_traits::Float;

use crate::nn::Scalar;
use crate::{Error, Result};

pub const ADAM_BETAS: (f64, f64) = (0.9, 0.999);
pub const ADAM_EPS: f64 = 1e-8;
pub const ADAGRAD_EPS: f64 = 1e-10;
pub const RMSPROP_DECAY: f64 = 0.99;
pub const RMSPROP_EPS: f64 = 1e-8;
pub const RPROP_ETAS: (f64, f64) = (1.2, 0.5);
pub const RPROP_STEP_BOUNDS: (f64, f64) = (1e-6, 50.0);

/// Value ranges searched by the tuner.
pub const LR_RANGE: (f64, f64) = (1e-4, 0.1);
pub const MOMENTUM_RANGE: (f64, f64) = (0.0, 0.99);
pub const WEIGHT_DECAY_RANGE: (f64, f64) = (1e-5, 1e-2);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum OptimizerKind {
    Sgd,
    SgdMomentum,
    SgdNesterov,
    Adam,
    Nadam,
    Adagrad,
    Asgd,
    Rprop,
    Rmsprop,
}

impl OptimizerKind {
    pub const ALL: [OptimizerKind; 9] = [
        OptimizerKind::Sgd,
        OptimizerKind::SgdMomentum,
        OptimizerKind::SgdNesterov,
        OptimizerKind::Adam,
        OptimizerKind::Nadam,
        OptimizerKind::Adagrad,
        OptimizerKind::Asgd,
        OptimizerKind::Rprop,
        OptimizerKind::Rmsprop,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::SgdMomentum => "sgd_momentum",
            OptimizerKind::SgdNesterov => "sgd_nesterov",
            OptimizerKind::Adam => "adam",
            OptimizerKind::Nadam => "nadam",
            OptimizerKind::Adagrad => "adagrad",
            OptimizerKind::Asgd => "asgd",
            OptimizerKind::Rprop => "rprop",
            OptimizerKind::Rmsprop => "rmsprop",
        }
    }

    /// Whether `ν` enters the update.
    pub fn uses_momentum(&self) -> bool {
        matches!(self, OptimizerKind::SgdMomentum | OptimizerKind::SgdNesterov)
    }
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownId(format!("optimizer `{}`", s)))
    }
}

/// Optimizer kind plus hyperparameters `H = (μ, ν, λ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptimizerSpec {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Stored for every kind, read only when [`OptimizerKind::uses_momentum`].
    pub momentum: f64,
    pub weight_decay: f64,
}

impl OptimizerSpec {
    pub fn new(kind: OptimizerKind, lr: f64, momentum: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            momentum,
            weight_decay,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr > 0.0
            && (0.0..1.0).contains(&self.momentum)
            && self.weight_decay.is_finite()
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{:?}", self)))
        }
    }
}

/// Mutable optimizer state for one parameter set.
#[derive(Debug, Clone)]
pub struct Optimizer<T> {
    spec: OptimizerSpec,
    steps: u64,
    average_start: u64,
    /// First buffer per slot: velocity, first moment, squared-gradient sum,
    /// averaged iterate or previous gradient depending on the kind.
    first: Vec<Vec<T>>,
    /// Second buffer per slot: second moment or Rprop step sizes.
    second: Vec<Vec<T>>,
}

impl<T: Scalar> Optimizer<T> {
    pub fn new(spec: OptimizerSpec) -> Self {
        Self {
            spec,
            steps: 0,
            average_start: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    /// ASGD: first step (counted from zero) that enters the running average.
    pub fn with_average_start(mut self, start: u64) -> Self {
        self.average_start = start;
        self
    }

    pub fn spec(&self) -> &OptimizerSpec {
        &self.spec
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update with learning rate `lr` to every slot.
    pub fn step<'a, 'b>(
        &mut self,
        params: impl IntoIterator<Item = &'a mut [T]>,
        grads: impl IntoIterator<Item = &'b [T]>,
        lr: f64,
    ) -> Result<()> {
        let mut params: Vec<&mut [T]> = params.into_iter().collect();
        let grads: Vec<&[T]> = grads.into_iter().collect();
        if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", params.iter().map(|p| p.len()).collect::<Vec<_>>()),
                actual: format!("{:?}", grads.iter().map(|g| g.len()).collect::<Vec<_>>()),
            });
        }
        if self.first.is_empty() {
            self.init(&params);
        }
        self.steps += 1;
        for (slot, (theta, grad)) in params.iter_mut().zip(&grads).enumerate() {
            self.update_slot(slot, theta, grad, lr);
            if theta.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "{} update at step {}",
                    self.spec.kind, self.steps
                )));
            }
        }
        Ok(())
    }

    fn init(&mut self, params: &[&mut [T]]) {
        let zeros = |p: &&mut [T]| vec![T::zero(); p.len()];
        self.first = params.iter().map(zeros).collect();
        self.second = match self.spec.kind {
            OptimizerKind::Adam | OptimizerKind::Nadam => params.iter().map(zeros).collect(),
            OptimizerKind::Rprop => params.iter().map(|p| vec![T::of(self.spec.lr); p.len()]).collect(),
            _ => params.iter().map(|_| Vec::new()).collect(),
        };
        if self.spec.kind == OptimizerKind::Asgd {
            for (avg, p) in self.first.iter_mut().zip(params) {
                avg.copy_from_slice(p);
            }
        }
    }

    fn update_slot(&mut self, slot: usize, theta: &mut [T], grad: &[T], lr: f64) {
        let s = &self.spec;
        let lr = T::of(lr);
        let wd = T::of(s.weight_decay);
        let nu = T::of(s.momentum);
        let one = T::one();
        let t = self.steps;
        let first = &mut self.first[slot];
        let second = &mut self.second[slot];
        let g_at = |i: usize, th: T| grad[i] + wd * th;
        match s.kind {
            OptimizerKind::Sgd => {
                for i in 0..theta.len() {
                    theta[i] = theta[i] - lr * g_at(i, theta[i]);
                }
            }
            OptimizerKind::SgdMomentum | OptimizerKind::SgdNesterov => {
                let nesterov = s.kind == OptimizerKind::SgdNesterov;
                for i in 0..theta.len() {
                    let g = g_at(i, theta[i]);
                    let v = nu * first[i] + g;
                    first[i] = v;
                    let d = if nesterov { g + nu * v } else { v };
                    theta[i] = theta[i] - lr * d;
                }
            }
            OptimizerKind::Adam | OptimizerKind::Nadam => {
                let (b1, b2) = (T::of(ADAM_BETAS.0), T::of(ADAM_BETAS.1));
                let c1 = one - b1.powi(t as i32);
                let c2 = one - b2.powi(t as i32);
                let eps = T::of(ADAM_EPS);
                let nadam = s.kind == OptimizerKind::Nadam;
                for i in 0..theta.len() {
                    let g = g_at(i, theta[i]);
                    let m = b1 * first[i] + (one - b1) * g;
                    let v = b2 * second[i] + (one - b2) * g * g;
                    first[i] = m;
                    second[i] = v;
                    let m_hat = m / c1;
                    let num = if nadam { b1 * m_hat + (one - b1) * g / c1 } else { m_hat };
                    theta[i] = theta[i] - lr * num / ((v / c2).sqrt() + eps);
                }
            }
            OptimizerKind::Adagrad => {
                let eps = T::of(ADAGRAD_EPS);
                for i in 0..theta.len() {
                    let g = g_at(i, theta[i]);
                    first[i] = first[i] + g * g;
                    theta[i] = theta[i] - lr * g / (first[i].sqrt() + eps);
                }
            }
            OptimizerKind::Asgd => {
                // steps counted from zero: this is step t - 1
                let k = t - 1;
                for i in 0..theta.len() {
                    theta[i] = theta[i] - lr * g_at(i, theta[i]);
                }
                if k < self.average_start {
                    first.copy_from_slice(theta);
                } else {
                    let w = one / T::of((k - self.average_start + 1) as f64);
                    for (a, &th) in first.iter_mut().zip(theta.iter()) {
                        *a = *a + (th - *a) * w;
                    }
                }
            }
            OptimizerKind::Rprop => {
                let (up, down) = (T::of(RPROP_ETAS.0), T::of(RPROP_ETAS.1));
                let (lo, hi) = (T::of(RPROP_STEP_BOUNDS.0), T::of(RPROP_STEP_BOUNDS.1));
                for i in 0..theta.len() {
                    let mut g = g_at(i, theta[i]);
                    let agree = g * first[i];
                    if agree > T::zero() {
                        second[i] = (second[i] * up).min(hi);
                    } else if agree < T::zero() {
                        second[i] = (second[i] * down).max(lo);
                        g = T::zero();
                    }
                    let sign = if g > T::zero() {
                        one
                    } else if g < T::zero() {
                        -one
                    } else {
                        T::zero()
                    };
                    theta[i] = theta[i] - sign * second[i];
                    first[i] = g;
                }
            }
            OptimizerKind::Rmsprop => {
                let rho = T::of(RMSPROP_DECAY);
                let eps = T::of(RMSPROP_EPS);
                for i in 0..theta.len() {
                    let g = g_at(i, theta[i]);
                    first[i] = rho * first[i] + (one - rho) * g * g;
                    theta[i] = theta[i] - lr * g / (first[i].sqrt() + eps);
                }
            }
        }
    }

    /// The ASGD averaged iterate, slot by slot; `None` for other kinds or
    /// before the first step.
    pub fn averaged(&self) -> Option<&[Vec<T>]> {
        (self.spec.kind == OptimizerKind::Asgd && !self.first.is_empty()).then_some(self.first.as_slice())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(rename_all = "snake_case"))]
pub enum SchedulerKind {
    CosineAnnealing,
    Step,
    Exponential,
    Cyclic,
    ReduceOnPlateau,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 5] = [
        SchedulerKind::CosineAnnealing,
        SchedulerKind::Step,
        SchedulerKind::Exponential,
        SchedulerKind::Cyclic,
        SchedulerKind::ReduceOnPlateau,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SchedulerKind::CosineAnnealing => "cosine_annealing",
            SchedulerKind::Step => "step",
            SchedulerKind::Exponential => "exponential",
            SchedulerKind::Cyclic => "cyclic",
            SchedulerKind::ReduceOnPlateau => "reduce_on_plateau",
        }
    }

    /// Default parameters for a run of `epochs` epochs.
    pub fn spec(&self, epochs: usize) -> SchedulerSpec {
        let e = epochs.max(1);
        match self {
            SchedulerKind::CosineAnnealing => SchedulerSpec::CosineAnnealing { t_max: e, lr_min: 0.0 },
            SchedulerKind::Step => SchedulerSpec::Step {
                period: e.div_ceil(3),
                factor: 0.2,
            },
            SchedulerKind::Exponential => SchedulerSpec::Exponential { gamma: 0.9 },
            SchedulerKind::Cyclic => SchedulerSpec::Cyclic {
                low: 0.1,
                high: 1.0,
                half_cycle: e.div_ceil(4),
            },
            SchedulerKind::ReduceOnPlateau => SchedulerSpec::ReduceOnPlateau {
                patience: 5,
                factor: 0.1,
                threshold: 1e-4,
            },
        }
    }
}

impl fmt::Display for SchedulerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownId(format!("scheduler `{}`", s)))
    }
}

/// Smallest multiplier any schedule emits, so the learning rate stays
/// strictly positive.
pub const LR_FLOOR: f64 = 1e-6;

/// A learning-rate schedule. Rates are multipliers of the tuned base rate
/// except `lr_min`, which is absolute.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize), serde(tag = "kind", rename_all = "snake_case"))]
pub enum SchedulerSpec {
    CosineAnnealing { t_max: usize, lr_min: f64 },
    Step { period: usize, factor: f64 },
    Exponential { gamma: f64 },
    /// Triangular cycle between `low·base` and `high·base`, starting low.
    Cyclic { low: f64, high: f64, half_cycle: usize },
    /// Monitors a loss (lower is better); cuts the rate by `factor` after more
    /// than `patience` epochs without relative improvement `threshold`.
    ReduceOnPlateau { patience: usize, factor: f64, threshold: f64 },
}

impl SchedulerSpec {
    pub fn kind(&self) -> SchedulerKind {
        match self {
            SchedulerSpec::CosineAnnealing { .. } => SchedulerKind::CosineAnnealing,
            SchedulerSpec::Step { .. } => SchedulerKind::Step,
            SchedulerSpec::Exponential { .. } => SchedulerKind::Exponential,
            SchedulerSpec::Cyclic { .. } => SchedulerKind::Cyclic,
            SchedulerSpec::ReduceOnPlateau { .. } => SchedulerKind::ReduceOnPlateau,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SchedulerSpec::CosineAnnealing { t_max, lr_min } => t_max > 0 && lr_min >= 0.0,
            SchedulerSpec::Step { period, factor } => period > 0 && factor > 0.0 && factor <= 1.0,
            SchedulerSpec::Exponential { gamma } => gamma > 0.0 && gamma <= 1.0,
            SchedulerSpec::Cyclic { low, high, half_cycle } => low > 0.0 && high >= low && half_cycle > 0,
            SchedulerSpec::ReduceOnPlateau {
                factor, threshold, ..
            } => factor > 0.0 && factor < 1.0 && threshold >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("{:?}", self)))
        }
    }

    /// Learning rate for `epoch`. `history` holds the monitored loss of
    /// every completed epoch and is read only by `reduce_on_plateau`.
    pub fn lr_at(&self, epoch: usize, base_lr: f64, history: &[f64]) -> f64 {
        let lr = match *self {
            SchedulerSpec::CosineAnnealing { t_max, lr_min } => {
                let t = epoch.min(t_max) as f64 / t_max as f64;
                lr_min + (base_lr - lr_min) * 0.5 * (1.0 + Float::cos(core::f64::consts::PI * t))
            }
            SchedulerSpec::Step { period, factor } => base_lr * Float::powi(factor, (epoch / period) as i32),
            SchedulerSpec::Exponential { gamma } => base_lr * Float::powi(gamma, epoch as i32),
            SchedulerSpec::Cyclic { low, high, half_cycle } => {
                let pos = (epoch % (2 * half_cycle)) as f64 / half_cycle as f64;
                let rise = 1.0 - Float::abs(pos - 1.0);
                base_lr * (low + (high - low) * rise)
            }
            SchedulerSpec::ReduceOnPlateau {
                patience,
                factor,
                threshold,
            } => {
                let mut lr = base_lr;
                let mut best = f64::INFINITY;
                let mut bad = 0;
                for &v in history.iter().take(epoch) {
                    if v < best * (1.0 - threshold) || best.is_infinite() {
                        best = v;
                        bad = 0;
                    } else {
                        bad += 1;
                        if bad > patience {
                            lr *= factor;
                            bad = 0;
                        }
                    }
                }
                lr
            }
        };
        lr.max(base_lr * LR_FLOOR)
    }
}

impl fmt::Display for SchedulerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.kind().name())
    }
}
