use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use super::*;
use crate::data::{synth_blobs, PartitionScheme};
use crate::ensemble::VotingScheme;

fn base() -> WeakLearnerConfig {
    WeakLearnerConfig {
        arch: Arch::CnnA,
        opt: OptimizerSpec::new(OptimizerKind::Sgd, 0.05, 0.0, 1e-4),
        sched: SchedulerKind::Step,
        node: 0,
        seed: 9,
    }
}

fn tiny() -> Budget {
    Budget {
        trials: 2,
        tune_epochs: 1,
        epochs: 2,
        batch_size: 32,
        holdout: 0.2,
        augment: true,
    }
}

#[test]
fn empty_diverse_set_is_identity() {
    for seed in 0..20 {
        assert_eq!(diversify(&base(), DiverseSet::NONE, seed), base());
    }
}

#[test]
fn optimizer_diversification_keeps_the_rest() {
    let set = DiverseSet {
        opt: true,
        ..DiverseSet::NONE
    };
    let mut kinds = BTreeSet::new();
    for seed in 0..200 {
        let c = diversify(&base(), set, seed);
        assert_eq!((c.arch, c.sched), (base().arch, base().sched));
        kinds.insert(c.opt.kind.name());
    }
    assert_eq!(kinds.len(), OptimizerKind::ALL.len());
}

#[test]
fn architecture_draws_cover_the_zoo() {
    let set = DiverseSet {
        arch: true,
        ..DiverseSet::NONE
    };
    let mut counts = [0usize; 6];
    for seed in 0..1000 {
        let a = diversify(&base(), set, seed).arch;
        counts[Arch::ALL.iter().position(|&x| x == a).unwrap()] += 1;
    }
    // 1000 uniform draws over 6 values: each count is ~167 ± 12.
    assert!(counts.iter().all(|&c| c > 100), "{:?}", counts);
}

#[test]
fn sampled_hyperparameters_respect_ranges() {
    let mut rng = rng_for(1, &[]);
    for kind in [OptimizerKind::Adam, OptimizerKind::SgdMomentum] {
        for _ in 0..2000 {
            let o = sample_h(&mut rng, kind, None);
            assert!((LR_RANGE.0..=LR_RANGE.1).contains(&o.lr));
            assert!((WEIGHT_DECAY_RANGE.0..=WEIGHT_DECAY_RANGE.1).contains(&o.weight_decay));
            if !kind.uses_momentum() {
                assert_eq!(o.momentum, 0.0);
            }
            let near = sample_h(&mut rng, kind, Some(&o));
            assert!((LR_RANGE.0..=LR_RANGE.1).contains(&near.lr));
            assert!(near.lr >= o.lr / NARROW_FACTOR * (1.0 - 1e-12) && near.lr <= o.lr * NARROW_FACTOR * (1.0 + 1e-12));
            assert!((near.momentum - o.momentum).abs() <= NARROW_MOMENTUM + 1e-12);
            assert!(near.momentum <= MOMENTUM_RANGE.1);
        }
    }
    assert_eq!(sample_h(&mut rng, OptimizerKind::Adam, None).momentum, 0.0);
}

#[test]
fn single_trial_budget_returns_that_trial() {
    let data = synth_blobs(3, 30, 0.1, 2).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let budget = Budget { trials: 1, ..tiny() };
    let cfg = WeakLearnerConfig {
        arch: Arch::Logreg,
        ..base()
    };
    let out = tune::<f32>(&cfg, &data, &idx, &budget).unwrap();
    assert_eq!(out.trials.len(), 1);
    assert_eq!(out.opt, out.trials[0].opt);
    assert_eq!(out.opt.kind, cfg.opt.kind);
}

#[test]
fn tuning_logreg_on_separable_blobs() {
    let data = synth_blobs(4, 50, 0.02, 3).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let cfg = WeakLearnerConfig {
        arch: Arch::Logreg,
        opt: OptimizerSpec::new(OptimizerKind::Adam, 0.01, 0.0, 1e-4),
        ..base()
    };
    let budget = Budget {
        trials: 4,
        tune_epochs: 5,
        ..tiny()
    };
    let out = tune::<f64>(&cfg, &data, &idx, &budget).unwrap();
    assert_eq!(out.trials.len(), 8);
    assert!(out.trials[4..].iter().all(|t| t.round == 1));
    assert!(out.score >= 0.99, "val accuracy {}", out.score);
    let again = tune::<f64>(&cfg, &data, &idx, &budget).unwrap();
    assert_eq!(out, again);
}

#[test]
fn tuning_rejects_tiny_local_data() {
    let data = synth_blobs(2, 20, 0.1, 2).unwrap();
    let idx: Vec<usize> = (0..30).collect();
    assert!(matches!(tune::<f32>(&base(), &data, &idx, &tiny()), Err(Error::InvalidSpec(_))));
}

#[test]
fn absurd_rate_diverges_with_diagnostics() {
    let data = synth_blobs(3, 30, 0.1, 2).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let cfg = WeakLearnerConfig {
        arch: Arch::MlpSmall,
        opt: OptimizerSpec::new(OptimizerKind::Sgd, 1e30, 0.0, 0.0),
        ..base()
    };
    let mut net = build_net::<f32>(arch_for(cfg.arch, &data), 0).unwrap();
    match fit(&mut net, &cfg, &data, &idx, 3, &tiny(), None, 0) {
        Err(Error::Diverged(msg)) => assert!(msg.contains("mlp_small/sgd/step"), "{}", msg),
        other => panic!("expected divergence, got {:?}", other.map(|l| l.len())),
    }
}

#[test]
fn zero_epochs_returns_the_initial_network() {
    let data = synth_blobs(4, 25, 0.1, 5).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let budget = Budget { epochs: 0, ..tiny() };
    let m = train_final::<f32>(&base(), &data, &idx, &budget, Some((&data, &idx))).unwrap();
    assert!(m.log.is_empty());
    let seed = derive_seed(base().seed, &[tag("final"), 0]);
    assert_eq!(m.network, build_net::<f32>(arch_for(Arch::CnnA, &data), seed).unwrap());
    assert!(m.val_accuracy.unwrap() < 0.75);
}

#[test]
fn logreg_fits_separable_blobs() {
    let data = synth_blobs(5, 40, 0.02, 6).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    let cfg = WeakLearnerConfig {
        arch: Arch::Logreg,
        opt: OptimizerSpec::new(OptimizerKind::SgdMomentum, 0.05, 0.9, 1e-4),
        sched: SchedulerKind::CosineAnnealing,
        ..base()
    };
    let budget = Budget {
        epochs: 20,
        augment: false,
        ..tiny()
    };
    let m = train_final::<f64>(&cfg, &data, &idx, &budget, Some((&data, &idx))).unwrap();
    assert_eq!(m.log.len(), 20);
    assert!(m.val_accuracy.unwrap() >= 0.99);
    assert!(m.log[19].train_loss < m.log[0].train_loss);
}

#[test]
fn every_optimizer_and_scheduler_trains() {
    let data = synth_blobs(3, 30, 0.05, 8).unwrap();
    let idx: Vec<usize> = (0..data.len()).collect();
    for (i, kind) in OptimizerKind::ALL.into_iter().enumerate() {
        let cfg = WeakLearnerConfig {
            arch: Arch::MlpSmall,
            opt: OptimizerSpec::new(kind, 0.01, 0.5, 1e-4),
            sched: SchedulerKind::ALL[i % 5],
            ..base()
        };
        let budget = Budget {
            epochs: 8,
            augment: false,
            ..tiny()
        };
        let m = train_final::<f32>(&cfg, &data, &idx, &budget, Some((&data, &idx))).unwrap();
        assert!(m.val_accuracy.unwrap() > 0.6, "{}: {:?}", cfg.describe(), m.val_accuracy);
    }
}

fn spec(kind: ScenarioKind, nodes: usize) -> ScenarioSpec {
    ScenarioSpec {
        kind,
        nodes,
        master: 0,
        partition: PartitionScheme::Uniform,
        voting: VotingScheme::Average,
    }
}

#[test]
fn ens_plans_distinct_architectures_on_full_data() {
    let data = synth_blobs(3, 20, 0.1, 1).unwrap();
    let masters = master_configs(3, 0).unwrap();
    for seed in 0..6 {
        let plans = plan_scenario(&spec(ScenarioKind::Ens, 3), &data, &masters, seed).unwrap();
        assert_eq!(plans.len(), 3);
        let archs: BTreeSet<_> = plans.iter().map(|p| p.config.arch).collect();
        assert_eq!(archs.len(), 3);
        for p in &plans {
            assert_eq!(p.shard.len(), data.len());
            assert!(!p.tune);
            assert_eq!((p.config.opt, p.config.sched), ENS_RECIPE);
        }
    }
    let seven = plan_scenario(&spec(ScenarioKind::Ens, 7), &data, &masters, 0).unwrap();
    assert_eq!(seven.iter().map(|p| p.config.arch).collect::<BTreeSet<_>>().len(), 6);
}

#[test]
fn it_shares_major_parameters_on_disjoint_shards() {
    let data = synth_blobs(3, 40, 0.1, 1).unwrap();
    let masters = master_configs(3, 0).unwrap();
    let plans = plan_scenario(&spec(ScenarioKind::It, 5), &data, &masters, 4).unwrap();
    assert_eq!(plans.len(), 5);
    for p in &plans {
        assert_eq!((p.config.arch, p.config.opt.kind, p.config.sched), (masters[0].arch, masters[0].opt.kind, masters[0].sched));
        assert!(p.tune);
    }
    let part = crate::data::DataPartition {
        nodes: plans.iter().map(|p| p.shard.clone()).collect(),
    };
    part.check_cover(data.len()).unwrap();
}

#[test]
fn it_nodes_tune_to_different_hyperparameters() {
    let data = synth_blobs(3, 100, 0.1, 1).unwrap();
    let masters = master_configs(3, 0).unwrap();
    let s = ScenarioSpec {
        master: 1,
        ..spec(ScenarioKind::It, 5)
    };
    let budget = Budget {
        trials: 2,
        tune_epochs: 1,
        epochs: 1,
        ..tiny()
    };
    let models = build_scenario::<f32>(&s, &data, &masters, &budget, 3).unwrap();
    let lrs: BTreeSet<u64> = models.iter().map(|m| m.config.opt.lr.to_bits()).collect();
    assert_eq!(lrs.len(), 5);
    assert!(models.iter().all(|m| m.config.arch == masters[1].arch));
}

#[test]
fn fully_diverse_nodes_draw_independently() {
    let data = synth_blobs(3, 40, 0.1, 1).unwrap();
    let masters = master_configs(3, 0).unwrap();
    let plans = plan_scenario(&spec(ScenarioKind::Diverse(DiverseSet::ALL), 7), &data, &masters, 2).unwrap();
    assert_eq!(plans.len(), 7);
    let triples: BTreeSet<_> = plans.iter().map(|p| (p.config.arch, p.config.opt.kind, p.config.sched)).collect();
    assert!(triples.len() >= 5);
    let other = plan_scenario(&spec(ScenarioKind::Diverse(DiverseSet::ALL), 7), &data, &masters, 3).unwrap();
    assert_ne!(
        plans.iter().map(|p| p.config.arch).collect::<Vec<_>>(),
        other.iter().map(|p| p.config.arch).collect::<Vec<_>>()
    );
}

#[test]
fn scenario_building_is_deterministic() {
    let data = synth_blobs(3, 60, 0.1, 1).unwrap();
    let masters = master_configs(2, 0).unwrap();
    let s = spec(ScenarioKind::Diverse(DiverseSet::ALL), 3);
    let a = build_scenario::<f32>(&s, &data, &masters, &tiny(), 11).unwrap();
    let b = build_scenario::<f32>(&s, &data, &masters, &tiny(), 11).unwrap();
    assert_eq!(a, b);
    let c = build_scenario::<f32>(&s, &data, &masters, &tiny(), 12).unwrap();
    assert_ne!(a, c);
}

#[test]
fn nodes_never_read_other_shards() {
    let data = synth_blobs(3, 60, 0.1, 1).unwrap();
    let masters = master_configs(1, 0).unwrap();
    let plans = plan_scenario(&spec(ScenarioKind::It, 3), &data, &masters, 5).unwrap();
    let reference = train_node::<f32>(&plans[0], &data, &tiny(), None).unwrap();
    // Scramble every sample outside node 0's shard: image and label.
    let own: BTreeSet<usize> = plans[0].shard.iter().copied().collect();
    let width = data.sample_shape().len();
    let mut images = data.images().to_vec();
    let mut labels = data.labels().to_vec();
    for i in (0..data.len()).filter(|i| !own.contains(i)) {
        images[i * width..(i + 1) * width].iter_mut().for_each(|v| *v = 1.0 - *v);
        labels[i] = (labels[i] + 1) % 3;
    }
    let tampered = Dataset::new(images, data.sample_shape(), labels, 3, data.split()).unwrap();
    let again = train_node::<f32>(&plans[0], &tampered, &tiny(), None).unwrap();
    assert_eq!(reference.network, again.network);
}

#[test]
fn dirichlet_scenarios_are_labelled() {
    let s = ScenarioSpec {
        partition: PartitionScheme::Dirichlet { alpha: 0.9 },
        ..spec(ScenarioKind::It, 3)
    };
    assert_eq!(alloc::format!("{}", s.label()), "IT+dir");
    let e = ScenarioSpec {
        kind: ScenarioKind::Ens,
        ..s
    };
    assert_eq!(alloc::format!("{}", e.label()), "ENS");
    assert!(master_configs(6, 0).is_err());
    assert!(plan_scenario(&ScenarioSpec { master: 3, ..s }, &synth_blobs(3, 40, 0.1, 1).unwrap(), &master_configs(3, 0).unwrap(), 0).is_err());
}
