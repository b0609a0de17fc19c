//! Masters, a diverse scenario, a transfer attack and evaluation on blobs.

use distrobust_core::attacks::{attack, AttackKind, AttackSpec};
use distrobust_core::data::{synth_blobs, PartitionScheme};
use distrobust_core::ensemble::VotingScheme;
use distrobust_core::metrics::evaluate_all;
use distrobust_core::optim::{OptimizerKind, OptimizerSpec, SchedulerKind};
use distrobust_core::trainer::{build_scenario, master_configs, train_final, train_node, Budget, WeakLearnerConfig, DiverseSet, NodePlan, ScenarioKind, ScenarioSpec};
use distrobust_core::zoo::Arch;
use distrobust_core::Network;

fn budget() -> Budget {
    Budget {
        trials: 2,
        tune_epochs: 1,
        epochs: 12,
        batch_size: 16,
        holdout: 0.2,
        augment: false,
    }
}

#[test]
fn scenario_trains_and_transfer_attack_degrades_it() {
    let all = synth_blobs(3, 60, 0.2, 5).unwrap();
    let train = all.subset(&(0..150).collect::<Vec<_>>());
    let test = all.subset(&(150..180).collect::<Vec<_>>());
    let masters = master_configs(2, 1).unwrap();
    let config = WeakLearnerConfig {
        arch: Arch::MlpSmall,
        opt: OptimizerSpec::new(OptimizerKind::Adam, 1e-2, 0.0, 0.0),
        sched: SchedulerKind::CosineAnnealing,
        node: 0,
        seed: 2,
    };
    let all_rows: Vec<usize> = (0..train.len()).collect();
    let surrogate = train_final::<f32>(&config, &train, &all_rows, &Budget { epochs: 10, ..budget() }, None).unwrap();

    let spec = ScenarioSpec {
        kind: ScenarioKind::Diverse(DiverseSet::ALL),
        nodes: 3,
        master: 1,
        partition: PartitionScheme::Uniform,
        voting: VotingScheme::Average,
    };
    let models = build_scenario::<f32>(&spec, &train, &masters, &budget(), 0).unwrap();
    assert_eq!(models.len(), 3);
    let nets: Vec<&Network<f32>> = models.iter().map(|m| &m.network).collect();

    let (x, y) = test.all::<f32>();
    let eps = 0.3;
    let adv = attack(&[&surrogate.network], &x, &y, &AttackSpec::new(AttackKind::BaselineMi, eps)).unwrap();
    assert!(adv.max_distortion() <= eps + 1e-6);
    let white_box = &evaluate_all(&[&surrogate.network], (&x, &y), Some(&adv), "M", 0).unwrap()[0];
    assert!(white_box.ca > 0.9 && white_box.ra < 0.5, "{:?}", white_box);
    let records = evaluate_all(&nets, (&x, &y), Some(&adv), "D_AOS", 0).unwrap();
    assert_eq!(records.len(), 3);
    for r in &records {
        assert!(r.ca > 0.45, "{:?} clean accuracy {}", r.voting, r.ca);
        assert!((0.0..=1.0).contains(&r.asr));
        assert!(r.ra < r.ca, "{:?}: attack had no effect ({} vs {}, distortion {})", r.voting, r.ra, r.ca, adv.max_distortion());
    }
}

#[test]
fn training_is_deterministic() {
    let train = synth_blobs(3, 30, 0.2, 9).unwrap();
    let config = master_configs(1, 3).unwrap()[0];
    let plan = NodePlan::master(config, &train);
    let a = train_node::<f32>(&plan, &train, &budget(), None).unwrap();
    let b = train_node::<f32>(&plan, &train, &budget(), None).unwrap();
    assert_eq!(a.config, b.config);
    assert_eq!(a.network, b.network);
}
