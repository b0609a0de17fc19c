use distrobust_core::attacks::{attack, AttackKind, AttackSpec};
use distrobust_core::data::{partition, synth_blobs, PartitionScheme, PartitionSpec};
use distrobust_core::ensemble::{mean_probs, vote, VotingScheme};
use distrobust_core::metrics::{pareto_frontier, ParetoPoint};
use distrobust_core::rng::rng_for;
use distrobust_core::zoo::{build, Arch, ArchitectureId};
use distrobust_core::{Shape, Tensor};
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn partitions_cover_disjointly(nodes in 1usize..9, seed in any::<u64>(), dirichlet in any::<bool>()) {
        let ds = synth_blobs(4, 25, 0.3, 0).unwrap();
        let scheme = if dirichlet { PartitionScheme::Dirichlet { alpha: 0.9 } } else { PartitionScheme::Uniform };
        let p = partition(&ds, &PartitionSpec { nodes, scheme, seed }).unwrap();
        prop_assert_eq!(p.len(), nodes);
        prop_assert!(p.check_cover(ds.len()).is_ok());
    }

    #[test]
    fn average_vote_is_argmax_of_mean(raw in prop::collection::vec(prop::collection::vec(0.01f64..1.0, 4), 1..6)) {
        let probs: Vec<Vec<f64>> = raw.iter().map(|r| { let s: f64 = r.iter().sum(); r.iter().map(|v| v / s).collect() }).collect();
        let refs: Vec<&[f64]> = probs.iter().map(|p| p.as_slice()).collect();
        let mean = mean_probs(&refs);
        let (class, _) = vote(&refs, VotingScheme::Average);
        prop_assert!(mean.iter().all(|&m| m <= mean[class]));
        for scheme in VotingScheme::ALL {
            prop_assert!(vote(&refs, scheme).0 < 4);
        }
    }

    #[test]
    fn frontier_points_are_undominated(seed in any::<u64>(), n in 1usize..60) {
        let mut rng = rng_for(seed, &[]);
        let pts: Vec<ParetoPoint> = (0..n).map(|i| ParetoPoint::new(format!("{}", i), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))).collect();
        let front = pareto_frontier(&pts);
        prop_assert!(!front.is_empty());
        for f in &front {
            prop_assert!(!pts.iter().any(|q| q.ca >= f.ca && q.ra >= f.ra && (q.ca > f.ca || q.ra > f.ra)));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn attacks_respect_budget_and_range(seed in any::<u64>(), k in 0usize..4, eps in 0.001f64..0.2) {
        let net = build::<f32>(ArchitectureId::new(Arch::MlpSmall, Shape::image(1, 6, 6), 3), seed).unwrap();
        let mut rng = rng_for(seed, &[1]);
        let x = Tensor::new(vec![4, 1, 6, 6], (0..144).map(|_| rng.gen_range(0.0f32..1.0)).collect()).unwrap();
        let y: Vec<usize> = (0..4).map(|i| i % 3).collect();
        let mut spec = AttackSpec::new(AttackKind::ALL[k], eps);
        spec.iterations = 5;
        let adv = attack(&[&net], &x, &y, &spec).unwrap();
        prop_assert!(adv.max_distortion() <= eps + 1e-6);
        prop_assert!(adv.perturbed.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
