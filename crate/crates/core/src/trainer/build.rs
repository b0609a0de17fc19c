//! Scenario plans: which configuration each node trains on which shard.

use alloc::format;
use alloc::vec::Vec;

use super::{diversify, train_final, tune, Budget, ScenarioKind, ScenarioLabel, TrainedModel, WeakLearnerConfig};
use crate::data::{partition, Dataset, PartitionScheme, PartitionSpec};
use crate::ensemble::VotingScheme;
use crate::nn::Scalar;
use crate::optim::{OptimizerKind, OptimizerSpec, SchedulerKind};
use crate::rng::{derive_seed, tag};
use crate::zoo::Arch;
use crate::{Error, Result};

/// The single public recipe every ENS member trains with.
pub const ENS_RECIPE: (OptimizerSpec, SchedulerKind) = (
    OptimizerSpec {
        kind: OptimizerKind::SgdMomentum,
        lr: 0.01,
        momentum: 0.9,
        weight_decay: 5e-4,
    },
    SchedulerKind::CosineAnnealing,
);

/// ENS member `node`: architectures are dealt round-robin from a
/// seed-dependent starting point, so they are distinct for `N ≤ 6`.
pub fn ens_recipe(node: usize, seed: u64) -> WeakLearnerConfig {
    let start = (seed % Arch::ALL.len() as u64) as usize;
    WeakLearnerConfig {
        arch: Arch::ALL[(start + node) % Arch::ALL.len()],
        opt: ENS_RECIPE.0,
        sched: ENS_RECIPE.1,
        node,
        seed: derive_seed(seed, &[tag("ENS"), node as u64]),
    }
}

/// Major parameters of the master configurations, in order. Their `H` is
/// a placeholder until tuned.
const MASTERS: [(Arch, OptimizerKind, SchedulerKind); 5] = [
    (Arch::CnnA, OptimizerKind::Sgd, SchedulerKind::Cyclic),
    (Arch::MlpDeep, OptimizerKind::SgdMomentum, SchedulerKind::ReduceOnPlateau),
    (Arch::CnnGap, OptimizerKind::SgdNesterov, SchedulerKind::CosineAnnealing),
    (Arch::CnnB, OptimizerKind::Nadam, SchedulerKind::Exponential),
    (Arch::MlpSmall, OptimizerKind::Adam, SchedulerKind::Step),
];

/// The first `count` (at most five) master configurations.
pub fn master_configs(count: usize, seed: u64) -> Result<Vec<WeakLearnerConfig>> {
    if count == 0 || count > MASTERS.len() {
        return Err(Error::InvalidSpec(format!("{} masters (1 to {} supported)", count, MASTERS.len())));
    }
    Ok(MASTERS[..count]
        .iter()
        .enumerate()
        .map(|(k, &(arch, kind, sched))| WeakLearnerConfig {
            arch,
            opt: OptimizerSpec::new(kind, 0.01, if kind.uses_momentum() { 0.9 } else { 0.0 }, 1e-4),
            sched,
            node: k,
            seed: derive_seed(seed, &[tag("master"), k as u64]),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub nodes: usize,
    /// Index of the master configuration tuned scenarios start from.
    pub master: usize,
    /// Ignored by ENS, whose members all see the full training set.
    pub partition: PartitionScheme,
    pub voting: VotingScheme,
}

impl ScenarioSpec {
    pub fn label(&self) -> ScenarioLabel {
        ScenarioLabel {
            kind: self.kind,
            dirichlet: self.kind.is_tuned() && matches!(self.partition, PartitionScheme::Dirichlet { .. }),
        }
    }

    pub fn validate(&self, masters: usize) -> Result<()> {
        if self.nodes == 0 {
            return Err(Error::InvalidSpec(format!("{}: zero nodes", self.label())));
        }
        if self.kind.is_tuned() && self.master >= masters {
            return Err(Error::InvalidSpec(format!(
                "{}: master {} of {}",
                self.label(),
                self.master,
                masters
            )));
        }
        Ok(())
    }
}

/// What one node trains: its configuration, its shard of the training set
/// and whether `H` is tuned first.
#[derive(Debug, Clone, PartialEq)]
pub struct NodePlan {
    pub config: WeakLearnerConfig,
    pub shard: Vec<usize>,
    pub tune: bool,
}

impl NodePlan {
    /// A master: tuned and trained on the whole training set.
    pub fn master(config: WeakLearnerConfig, data: &Dataset) -> Self {
        Self {
            config,
            shard: (0..data.len()).collect(),
            tune: true,
        }
    }
}

/// Per-node plans for `spec`. Tuned scenarios share one partition per
/// `(seed, N, scheme)`, so scenarios differ only in their configurations.
pub fn plan_scenario(spec: &ScenarioSpec, data: &Dataset, masters: &[WeakLearnerConfig], seed: u64) -> Result<Vec<NodePlan>> {
    spec.validate(masters.len())?;
    let n = spec.nodes;
    if spec.kind == ScenarioKind::Ens {
        let all: Vec<usize> = (0..data.len()).collect();
        return Ok((0..n)
            .map(|i| NodePlan {
                config: ens_recipe(i, seed),
                shard: all.clone(),
                tune: false,
            })
            .collect());
    }
    let part = partition(
        data,
        &PartitionSpec {
            nodes: n,
            scheme: spec.partition,
            seed: derive_seed(seed, &[tag("partition"), n as u64, tag(spec.partition.name())]),
        },
    )?;
    let master = masters[spec.master];
    let label = tag(&format!("{}", spec.label()));
    Ok(part
        .nodes
        .into_iter()
        .enumerate()
        .map(|(i, shard)| {
            let base = WeakLearnerConfig {
                node: i,
                seed: derive_seed(seed, &[label, i as u64]),
                ..master
            };
            NodePlan {
                config: diversify(&base, spec.kind.diverse_set(), derive_seed(seed, &[tag("draw"), label, i as u64])),
                shard,
                tune: true,
            }
        })
        .collect())
}

/// Tunes (if planned) and trains one node. Only `data[plan.shard]` is read.
pub fn train_node<T: Scalar>(plan: &NodePlan, data: &Dataset, budget: &Budget, eval: Option<(&Dataset, &[usize])>) -> Result<TrainedModel<T>> {
    let mut config = plan.config;
    if plan.tune {
        config.opt = tune::<T>(&config, data, &plan.shard, budget)?.opt;
    }
    train_final(&config, data, &plan.shard, budget, eval)
}

/// All `N` models of a scenario, trained one after another.
pub fn build_scenario<T: Scalar>(
    spec: &ScenarioSpec,
    data: &Dataset,
    masters: &[WeakLearnerConfig],
    budget: &Budget,
    seed: u64,
) -> Result<Vec<TrainedModel<T>>> {
    plan_scenario(spec, data, masters, seed)?
        .iter()
        .map(|p| train_node(p, data, budget, None))
        .collect()
}
