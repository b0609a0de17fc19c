//! Weak-learner training: diversification, tuning, final training and
//! scenario construction.

mod build;
mod scenario;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::data::{augment, Dataset};
use crate::nn::{argmax, Network, Scalar};
use crate::optim::{OptimizerKind, OptimizerSpec, SchedulerKind, LR_RANGE, MOMENTUM_RANGE, WEIGHT_DECAY_RANGE};
use crate::rng::{derive_seed, log_uniform, rng_for, tag};
use crate::zoo::{build as build_net, Arch, ArchitectureId};
use crate::{Error, Result};

pub use build::{build_scenario, ens_recipe, master_configs, plan_scenario, train_node, NodePlan, ScenarioSpec, ENS_RECIPE};
pub use scenario::{DiverseSet, ScenarioKind, ScenarioLabel};

/// One node's major parameters `(A, O, S)` and hyperparameters.
///
/// The optimizer spec carries `H = (μ, ν, λ)`. The scheduler is stored by
/// kind and instantiated for whatever epoch count a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WeakLearnerConfig {
    pub arch: Arch,
    pub opt: OptimizerSpec,
    pub sched: SchedulerKind,
    pub node: usize,
    pub seed: u64,
}

impl WeakLearnerConfig {
    pub fn validate(&self) -> Result<()> {
        self.opt.validate()
    }

    /// `arch/optimizer/scheduler`.
    pub fn describe(&self) -> String {
        format!("{}/{}/{}", self.arch, self.opt.kind, self.sched)
    }
}

/// Redraws every parameter in `set` uniformly from its value set and copies
/// the rest from `base`.
pub fn diversify(base: &WeakLearnerConfig, set: DiverseSet, seed: u64) -> WeakLearnerConfig {
    let mut rng = rng_for(seed, &[tag("diversify")]);
    let mut out = *base;
    if set.arch {
        out.arch = *Arch::ALL.choose(&mut rng).unwrap();
    }
    if set.opt {
        out.opt.kind = *OptimizerKind::ALL.choose(&mut rng).unwrap();
    }
    if set.sched {
        out.sched = *SchedulerKind::ALL.choose(&mut rng).unwrap();
    }
    out
}

/// Training and tuning budgets.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Budget {
    /// Random-search trials per tuning round.
    pub trials: usize,
    /// Epochs per tuning trial (`T₁`).
    pub tune_epochs: usize,
    /// Final-training epochs (`E`).
    pub epochs: usize,
    pub batch_size: usize,
    /// Fraction of the local data held out to score tuning trials.
    pub holdout: f64,
    pub augment: bool,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            trials: 12,
            tune_epochs: 3,
            epochs: 30,
            batch_size: 64,
            holdout: 0.2,
            augment: true,
        }
    }
}

/// Smallest local dataset [`tune`] accepts.
pub const MIN_TUNE_SAMPLES: usize = 50;

/// Round-2 search window: `μ` and `λ` within `×/÷ NARROW_FACTOR` of the
/// round-1 winner, `ν` within `± NARROW_MOMENTUM`.
pub const NARROW_FACTOR: f64 = 3.0;
pub const NARROW_MOMENTUM: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// A frozen network with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel<T = f32> {
    pub network: Network<T>,
    pub config: WeakLearnerConfig,
    pub log: Vec<EpochLog>,
    /// Accuracy on the evaluation set handed to training, if any.
    pub val_accuracy: Option<f64>,
}

/// Fraction of `indices` that `net` classifies correctly.
pub fn accuracy<T: Scalar>(net: &Network<T>, data: &Dataset, indices: &[usize]) -> Result<f64> {
    Ok(eval_split(net, data, indices)?.1)
}

const EVAL_CHUNK: usize = 512;

/// `(mean loss, accuracy)` over `indices`.
fn eval_split<T: Scalar>(net: &Network<T>, data: &Dataset, indices: &[usize]) -> Result<(f64, f64)> {
    if indices.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(EVAL_CHUNK) {
        let (x, y) = data.batch::<T>(chunk);
        let logits = net.logits(&x)?;
        for (row, &label) in logits.data().chunks_exact(net.classes()).zip(&y) {
            loss += crate::nn::cross_entropy(row, label).as_f64();
            correct += (argmax(row) == label) as usize;
        }
    }
    let n = indices.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch training of `net` in place on `data[indices]`.
///
/// Every epoch reshuffles, optionally augments each batch and steps the
/// optimizer with the scheduled rate. `reduce_on_plateau` monitors the
/// training loss. ASGD swaps in its averaged iterate (over the second half
/// of the steps) at the end.
#[allow(clippy::too_many_arguments)]
pub fn fit<T: Scalar>(
    net: &mut Network<T>,
    config: &WeakLearnerConfig,
    data: &Dataset,
    indices: &[usize],
    epochs: usize,
    budget: &Budget,
    eval: Option<(&Dataset, &[usize])>,
    seed: u64,
) -> Result<Vec<EpochLog>> {
    config.validate()?;
    if indices.is_empty() {
        return Err(Error::InvalidSpec(format!("no training data for {}", config.describe())));
    }
    let sched = config.sched.spec(epochs);
    let batch = budget.batch_size.max(1);
    let per_epoch = indices.len().div_ceil(batch) as u64;
    let mut opt = crate::optim::Optimizer::<T>::new(config.opt).with_average_start(per_epoch * epochs as u64 / 2);
    let mut order = indices.to_vec();
    let mut history = Vec::with_capacity(epochs);
    let mut log = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        let lr = sched.lr_at(epoch, config.opt.lr, &history);
        order.shuffle(&mut rng_for(seed, &[tag("shuffle"), epoch as u64]));
        let mut total = 0.0;
        for (b, chunk) in order.chunks(batch).enumerate() {
            let (mut x, y) = data.batch::<T>(chunk);
            if budget.augment {
                x = augment(&x, derive_seed(seed, &[tag("augment"), epoch as u64, b as u64]));
            }
            let (loss, grads) = net.loss_and_param_grads(&x, &y).map_err(|e| match e {
                Error::NonFinite(what) => Error::Diverged(format!(
                    "{} lr {:.3e}: non-finite {} at epoch {} batch {}",
                    config.describe(),
                    lr,
                    what,
                    epoch,
                    b
                )),
                e => e,
            })?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "{} lr {:.3e}: loss {} at epoch {} batch {}",
                    config.describe(),
                    lr,
                    loss,
                    epoch,
                    b
                )));
            }
            total += loss * chunk.len() as f64;
            opt.step(net.param_slices_mut(), grads.slices(), lr)
                .map_err(|e| Error::Diverged(format!("{} at epoch {} batch {}: {}", config.describe(), epoch, b, e)))?;
        }
        let train_loss = total / indices.len() as f64;
        history.push(train_loss);
        let (val_loss, val_accuracy) = match eval {
            Some((d, idx)) => {
                let (l, a) = eval_split(net, d, idx)?;
                (Some(l), Some(a))
            }
            None => (None, None),
        };
        log.push(EpochLog {
            epoch,
            lr,
            train_loss,
            val_loss,
            val_accuracy,
        });
    }
    if let Some(avg) = opt.averaged() {
        for (p, a) in net.param_slices_mut().zip(avg) {
            p.copy_from_slice(a);
        }
    }
    Ok(log)
}

/// One scored tuning trial.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Trial {
    pub round: usize,
    pub opt: OptimizerSpec,
    /// Holdout accuracy; `None` when training diverged.
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneOutcome {
    /// The winning optimizer spec (kind unchanged, `H` tuned).
    pub opt: OptimizerSpec,
    pub score: f64,
    pub trials: Vec<Trial>,
}

fn sample_h<R: Rng>(rng: &mut R, kind: OptimizerKind, around: Option<&OptimizerSpec>) -> OptimizerSpec {
    let (lr_lo, lr_hi, wd_lo, wd_hi, m_lo, m_hi) = match around {
        None => (
            LR_RANGE.0,
            LR_RANGE.1,
            WEIGHT_DECAY_RANGE.0,
            WEIGHT_DECAY_RANGE.1,
            MOMENTUM_RANGE.0,
            MOMENTUM_RANGE.1,
        ),
        Some(b) => (
            (b.lr / NARROW_FACTOR).max(LR_RANGE.0),
            (b.lr * NARROW_FACTOR).min(LR_RANGE.1),
            (b.weight_decay / NARROW_FACTOR).max(WEIGHT_DECAY_RANGE.0),
            (b.weight_decay * NARROW_FACTOR).min(WEIGHT_DECAY_RANGE.1),
            (b.momentum - NARROW_MOMENTUM).max(MOMENTUM_RANGE.0),
            (b.momentum + NARROW_MOMENTUM).min(MOMENTUM_RANGE.1),
        ),
    };
    let lr = log_uniform(rng, lr_lo, lr_hi);
    let weight_decay = log_uniform(rng, wd_lo, wd_hi);
    let momentum = if kind.uses_momentum() { rng.gen_range(m_lo..=m_hi) } else { 0.0 };
    OptimizerSpec::new(kind, lr, momentum, weight_decay)
}

/// Two-round random search for `H` on `data[indices]`.
///
/// Round 1 samples `budget.trials` specs from the full ranges (`μ`, `λ`
/// log-uniform, `ν` uniform and only for momentum kinds). Round 2 samples the
/// same number around the round-1 winner. Each trial trains a fresh network
/// for `tune_epochs` on a fixed 80% split and is scored by accuracy on the
/// remaining 20%; ties keep the earlier trial. A one-trial budget runs
/// round 1 only.
pub fn tune<T: Scalar>(
    config: &WeakLearnerConfig,
    data: &Dataset,
    indices: &[usize],
    budget: &Budget,
) -> Result<TuneOutcome> {
    if indices.len() < MIN_TUNE_SAMPLES {
        return Err(Error::InvalidSpec(format!(
            "{} local samples, tuning needs at least {}",
            indices.len(),
            MIN_TUNE_SAMPLES
        )));
    }
    if budget.trials == 0 {
        return Err(Error::InvalidSpec("tuning budget of zero trials".into()));
    }
    let seed = derive_seed(config.seed, &[tag("tune"), config.node as u64]);
    let mut split = indices.to_vec();
    split.shuffle(&mut rng_for(seed, &[tag("holdout")]));
    let cut = ((split.len() as f64) * (1.0 - budget.holdout)).round() as usize;
    let (train_idx, val_idx) = split.split_at(cut.clamp(1, split.len() - 1));
    let rounds = if budget.trials == 1 { 1 } else { 2 };
    let mut trials = Vec::with_capacity(rounds * budget.trials);
    let mut best: Option<(OptimizerSpec, f64)> = None;
    for round in 0..rounds {
        let mut rng = rng_for(seed, &[tag("round"), round as u64]);
        let centre = best.map(|(o, _)| o);
        for t in 0..budget.trials {
            let opt = sample_h(&mut rng, config.opt.kind, centre.as_ref());
            let trial_cfg = WeakLearnerConfig { opt, ..*config };
            let trial_seed = derive_seed(seed, &[round as u64, t as u64]);
            let mut net = build_net::<T>(arch_for(config.arch, data), trial_seed)?;
            let score = match fit(&mut net, &trial_cfg, data, train_idx, budget.tune_epochs, budget, None, trial_seed) {
                Ok(_) => Some(accuracy(&net, data, val_idx)?).filter(|s| s.is_finite()),
                Err(Error::Diverged(_)) => None,
                Err(e) => return Err(e),
            };
            trials.push(Trial { round, opt, score });
            if let Some(s) = score {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((opt, s));
                }
            }
        }
    }
    match best {
        Some((opt, score)) => Ok(TuneOutcome { opt, score, trials }),
        None => Err(Error::AllTrialsDiverged(config.describe())),
    }
}

/// Builds a fresh network for `config` and trains it for `budget.epochs` on
/// all of `data[indices]`. `eval` is only measured and logged.
pub fn train_final<T: Scalar>(
    config: &WeakLearnerConfig,
    data: &Dataset,
    indices: &[usize],
    budget: &Budget,
    eval: Option<(&Dataset, &[usize])>,
) -> Result<TrainedModel<T>> {
    let seed = derive_seed(config.seed, &[tag("final"), config.node as u64]);
    let mut network = build_net::<T>(arch_for(config.arch, data), seed)?;
    let log = fit(&mut network, config, data, indices, budget.epochs, budget, eval, seed)?;
    let val_accuracy = match eval {
        Some((d, idx)) => Some(accuracy(&network, d, idx)?),
        None => None,
    };
    Ok(TrainedModel {
        network,
        config: *config,
        log,
        val_accuracy,
    })
}

/// Architecture id of `arch` for the geometry of `data`.
pub fn arch_for(arch: Arch, data: &Dataset) -> ArchitectureId {
    ArchitectureId::new(arch, data.sample_shape(), data.classes())
}

#[cfg(test)]
mod tests;
