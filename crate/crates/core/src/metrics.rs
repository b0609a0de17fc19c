//! Robustness measurements: accuracy records, gradient similarity and
//! Pareto frontiers.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::attacks::{AdversarialBatch, AttackKind};
use crate::ensemble::{model_probs, vote_rows, VotingScheme};
use crate::nn::{Network, Scalar, Tensor};
use crate::{Error, Result};

/// Slack allowed on the budget check when counting successes.
pub const BUDGET_SLACK: f64 = 1e-6;

/// One row of results: clean accuracy, attack success rate and robust
/// accuracy of one voted ensemble against one attack.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluationRecord {
    pub scenario: String,
    pub nodes: usize,
    pub seed: u64,
    pub voting: VotingScheme,
    /// `None` for clean-only rows.
    pub attack: Option<AttackKind>,
    pub ca: f64,
    pub asr: f64,
    pub ra: f64,
    pub n: usize,
}

impl EvaluationRecord {
    #[allow(clippy::too_many_arguments)]
    pub fn from_counts(
        scenario: String,
        nodes: usize,
        seed: u64,
        voting: VotingScheme,
        attack: Option<AttackKind>,
        n: usize,
        clean_correct: usize,
        successes: usize,
    ) -> Result<Self> {
        if n == 0 || clean_correct > n || successes > n {
            return Err(Error::InvalidSpec(format!(
                "counts n={} correct={} successes={}",
                n, clean_correct, successes
            )));
        }
        let asr = successes as f64 / n as f64;
        Ok(Self {
            scenario,
            nodes,
            seed,
            voting,
            attack,
            ca: clean_correct as f64 / n as f64,
            asr,
            ra: 1.0 - asr,
            n,
        })
    }

    pub fn attack_name(&self) -> &'static str {
        self.attack.map_or("clean", |a| a.name())
    }
}

/// Counts for one voting scheme from precomputed per-model probabilities.
fn counts(
    clean: &[Vec<f64>],
    adv: Option<(&[Vec<f64>], &[f64], f64)>,
    labels: &[usize],
    classes: usize,
    scheme: VotingScheme,
) -> (usize, usize) {
    let clean_pred = vote_rows(clean, classes, scheme);
    let correct = clean_pred.iter().zip(labels).filter(|((c, _), &y)| *c == y).count();
    let successes = match adv {
        None => 0,
        Some((probs, dist, eps)) => vote_rows(probs, classes, scheme)
            .iter()
            .zip(&clean_pred)
            .zip(dist)
            .filter(|((a, c), &d)| a.0 != c.0 && d <= eps + BUDGET_SLACK)
            .count(),
    };
    (correct, successes)
}

/// Records for every voting scheme against one adversarial batch (or the
/// clean rows when `adv` is `None`, using `clean` as the inputs).
///
/// A sample is a success when the ensemble's prediction on `x′` differs from
/// its prediction on `x` and `‖x′−x‖∞ ≤ ε`.
pub fn evaluate_all<T: Scalar>(
    models: &[&Network<T>],
    clean: (&Tensor<T>, &[usize]),
    adv: Option<&AdversarialBatch<T>>,
    scenario: &str,
    seed: u64,
) -> Result<Vec<EvaluationRecord>> {
    if models.is_empty() {
        return Err(Error::InvalidSpec("evaluation without models".into()));
    }
    let classes = models[0].classes();
    let (x, labels) = clean;
    let clean_probs = model_probs(models, x)?;
    let adv_parts = match adv {
        Some(a) => {
            if a.originals.shape() != x.shape() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{:?}", x.shape()),
                    actual: format!("{:?}", a.originals.shape()),
                });
            }
            Some((model_probs(models, &a.perturbed)?, a.distortions(), a.spec.epsilon))
        }
        None => None,
    };
    VotingScheme::ALL
        .into_iter()
        .map(|scheme| {
            let (correct, succ) = counts(
                &clean_probs,
                adv_parts.as_ref().map(|(p, d, e)| (p.as_slice(), d.as_slice(), *e)),
                labels,
                classes,
                scheme,
            );
            EvaluationRecord::from_counts(
                scenario.into(),
                models.len(),
                seed,
                scheme,
                adv.map(|a| a.spec.kind),
                labels.len(),
                correct,
                succ,
            )
        })
        .collect()
}

/// The record of one voting scheme against one adversarial batch.
pub fn evaluate<T: Scalar>(
    models: &[&Network<T>],
    scheme: VotingScheme,
    adv: &AdversarialBatch<T>,
    scenario: &str,
    seed: u64,
) -> Result<EvaluationRecord> {
    let all = evaluate_all(models, (&adv.originals, &adv.labels), Some(adv), scenario, seed)?;
    Ok(all.into_iter().find(|r| r.voting == scheme).expect("every scheme evaluated"))
}

/// Per-sample input gradient of the cross-entropy of the averaged
/// probability vector, `(1/(N·p̄_y)) Σ_i p_{i,y} ∇L_i`, plus that loss.
/// For a single model this is the model's own gradient and loss.
pub fn ensemble_gradients<T: Scalar>(models: &[&Network<T>], x: &Tensor<T>, labels: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if models.is_empty() {
        return Err(Error::InvalidSpec("gradient of an empty ensemble".into()));
    }
    let (rows, d) = (x.rows(), x.row_len());
    let mut weighted = vec![0.0; rows * d];
    let mut pbar = vec![0.0; rows];
    let n = models.len() as f64;
    for m in models {
        let sg = m.sample_gradients(x, labels)?;
        let classes = m.classes();
        for r in 0..rows {
            let py = sg.probs.data()[r * classes + labels[r]].as_f64();
            pbar[r] += py / n;
            for (w, g) in weighted[r * d..(r + 1) * d].iter_mut().zip(&sg.grads.data()[r * d..(r + 1) * d]) {
                *w += py * g.as_f64();
            }
        }
    }
    let mut losses = Vec::with_capacity(rows);
    for r in 0..rows {
        let scale = if pbar[r] > 0.0 { 1.0 / (n * pbar[r]) } else { 0.0 };
        weighted[r * d..(r + 1) * d].iter_mut().for_each(|w| *w *= scale);
        losses.push(-Float::ln(pbar[r]));
    }
    Ok((weighted, losses))
}

/// `aᵀb / (‖a‖‖b‖)`, `None` when either vector vanishes.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (Float::sqrt(na) * Float::sqrt(nb))).clamp(-1.0, 1.0))
}

/// Per-sample cosine similarity `S(x,y)` of the input-loss gradients of two
/// models (or voted ensembles).
pub fn cosine_similarity<T: Scalar>(a: &[&Network<T>], b: &[&Network<T>], x: &Tensor<T>, labels: &[usize]) -> Result<Vec<Option<f64>>> {
    let (ga, _) = ensemble_gradients(a, x, labels)?;
    let (gb, _) = ensemble_gradients(b, x, labels)?;
    let d = x.row_len();
    Ok((0..x.rows())
        .map(|r| cosine(&ga[r * d..(r + 1) * d], &gb[r * d..(r + 1) * d]))
        .collect())
}

/// Mean of the defined entries, `None` if there are none.
pub fn mean_defined(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
}

/// Mean similarity of every (surrogate, model) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    pub rows: usize,
    pub cols: usize,
    /// Row-major means; NaN where no sample had both gradients non-zero.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    /// Mean over all defined entries.
    pub fn grand_mean(&self) -> f64 {
        let v: Vec<f64> = self.values.iter().copied().filter(|v| !v.is_nan()).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }
}

/// Entry `(i, j)` is the mean over samples of `S` between surrogate `i` and
/// model `j`.
pub fn similarity_heatmap<T: Scalar>(surrogates: &[&Network<T>], models: &[&Network<T>], x: &Tensor<T>, labels: &[usize]) -> Result<Heatmap> {
    if surrogates.is_empty() || models.is_empty() {
        return Err(Error::InvalidSpec("heatmap needs surrogates and models".into()));
    }
    let d = x.row_len();
    let grads = |set: &[&Network<T>]| -> Result<Vec<Vec<f64>>> {
        set.iter().map(|m| Ok(ensemble_gradients(&[*m], x, labels)?.0)).collect()
    };
    let gs = grads(surrogates)?;
    let gm = grads(models)?;
    let mut values = Vec::with_capacity(gs.len() * gm.len());
    for a in &gs {
        for b in &gm {
            let s: Vec<Option<f64>> = (0..x.rows()).map(|r| cosine(&a[r * d..(r + 1) * d], &b[r * d..(r + 1) * d])).collect();
            values.push(mean_defined(&s).unwrap_or(f64::NAN));
        }
    }
    Ok(Heatmap {
        rows: gs.len(),
        cols: gm.len(),
        values,
    })
}

/// Aggregate gradient disagreement between two models over a sample set.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientDiversityReport {
    pub pair: String,
    pub samples: usize,
    /// `Σ_x ‖∇_x L(θ) − ∇_x L(θ̂)‖₂`.
    pub distance_sum: f64,
    pub mean_cosine: f64,
    /// The measured aggregate; reported, never thresholded.
    pub gamma: f64,
}

pub fn gradient_diversity<T: Scalar>(
    pair: &str,
    a: &Network<T>,
    b: &Network<T>,
    x: &Tensor<T>,
    labels: &[usize],
) -> Result<GradientDiversityReport> {
    let (ga, _) = ensemble_gradients(&[a], x, labels)?;
    let (gb, _) = ensemble_gradients(&[b], x, labels)?;
    let d = x.row_len();
    let mut sum = 0.0;
    let mut cos = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let (u, v) = (&ga[r * d..(r + 1) * d], &gb[r * d..(r + 1) * d]);
        sum += Float::sqrt(u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum::<f64>());
        cos.push(cosine(u, v));
    }
    Ok(GradientDiversityReport {
        pair: pair.into(),
        samples: x.rows(),
        distance_sum: sum,
        mean_cosine: mean_defined(&cos).unwrap_or(f64::NAN),
        gamma: sum,
    })
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / Float::sqrt(saa * sbb)
}

/// One accuracy-robustness operating point.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ParetoPoint {
    pub label: String,
    pub ca: f64,
    pub ra: f64,
}

impl ParetoPoint {
    pub fn new(label: impl Into<String>, ca: f64, ra: f64) -> Self {
        Self {
            label: label.into(),
            ca,
            ra,
        }
    }

    /// `self ≻ other`: no worse in both coordinates and better in one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.ca >= other.ca && self.ra >= other.ra && (self.ca > other.ca || self.ra > other.ra)
    }
}

/// The non-dominated points, in input order. Exact duplicates of a frontier
/// point are all kept.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[b].ca.total_cmp(&points[a].ca).then(points[b].ra.total_cmp(&points[a].ra)));
    let mut keep = vec![false; points.len()];
    let mut best_higher = f64::NEG_INFINITY;
    let mut i = 0;
    while i < order.len() {
        let ca = points[order[i]].ca;
        let mut j = i;
        while j < order.len() && points[order[j]].ca == ca {
            j += 1;
        }
        let group_max = points[order[i]].ra;
        for &k in &order[i..j] {
            keep[k] = points[k].ra == group_max && points[k].ra > best_higher;
        }
        best_higher = best_higher.max(group_max);
        i = j;
    }
    points.iter().zip(keep).filter(|(_, k)| *k).map(|(p, _)| p.clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{attack, AttackSpec};
    use crate::data::synth_blobs_sized;
    use crate::nn::LayerSpec;
    use crate::rng::rng_for;
    use crate::zoo::{build, Arch, ArchitectureId};
    use crate::Shape;
    use rand::Rng;

    fn brute_force(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
        points
            .iter()
            .filter(|p| !points.iter().any(|q| q.dominates(p)))
            .cloned()
            .collect()
    }

    #[test]
    fn frontier_examples() {
        let one = [ParetoPoint::new("a", 0.5, 0.5)];
        assert_eq!(pareto_frontier(&one), one);
        let pts = [
            ParetoPoint::new("a", 0.9, 0.3),
            ParetoPoint::new("b", 0.8, 0.7),
            ParetoPoint::new("c", 0.85, 0.2),
        ];
        assert_eq!(pareto_frontier(&pts), [pts[0].clone(), pts[1].clone()]);
        let dup = [ParetoPoint::new("a", 0.9, 0.3), ParetoPoint::new("b", 0.9, 0.3)];
        assert_eq!(pareto_frontier(&dup).len(), 2);
    }

    #[test]
    fn frontier_matches_brute_force() {
        for seed in 0..100 {
            let mut rng = rng_for(seed, &[]);
            let pts: Vec<ParetoPoint> = (0..200)
                .map(|i| {
                    // coarse grid so ties and duplicates occur
                    let ca = (rng.gen_range(0..40) as f64) / 40.0;
                    let ra = (rng.gen_range(0..40) as f64) / 40.0;
                    ParetoPoint::new(format!("p{}", i), ca, ra)
                })
                .collect();
            let fast = pareto_frontier(&pts);
            assert_eq!(fast, brute_force(&pts));
            assert_eq!(pareto_frontier(&fast), fast);
            for a in &fast {
                assert!(!fast.iter().any(|b| b.dominates(a)));
            }
        }
    }

    fn linear(weights: Vec<f64>, inputs: usize, classes: usize) -> Network<f64> {
        let mut net = Network::new(Shape::Flat(inputs), alloc::vec![LayerSpec::Dense { inputs, outputs: classes }], classes).unwrap();
        net.params_mut()[0].weight.data_mut().copy_from_slice(&weights);
        net
    }

    #[test]
    fn cosine_of_linear_models() {
        let x = Tensor::new(alloc::vec![3, 2], alloc::vec![0.1, 0.2, 0.5, 0.5, 0.9, 0.3]).unwrap();
        let y = [0, 1, 0];
        // W (2 in, 2 out): gradient is W (p - e_y), so the input direction
        // lies along the difference of the two weight columns.
        let a = linear(alloc::vec![1.0, -1.0, 0.0, 0.0], 2, 2);
        let b = linear(alloc::vec![0.0, 0.0, 1.0, -1.0], 2, 2);
        let neg = linear(alloc::vec![-1.0, 1.0, 0.0, 0.0], 2, 2);
        for s in cosine_similarity(&[&a], &[&a], &x, &y).unwrap() {
            assert!((s.unwrap() - 1.0).abs() < 1e-12);
        }
        for s in cosine_similarity(&[&a], &[&neg], &x, &y).unwrap() {
            assert!((s.unwrap() + 1.0).abs() < 1e-12);
        }
        for s in cosine_similarity(&[&a], &[&b], &x, &y).unwrap() {
            assert!(s.unwrap().abs() < 1e-6);
        }
        let zero = linear(alloc::vec![0.0; 4], 2, 2);
        assert!(cosine_similarity(&[&a], &[&zero], &x, &y).unwrap().iter().all(Option::is_none));
    }

    #[test]
    fn cosine_is_scale_invariant() {
        let a = [0.3, -1.2, 2.0];
        let b = [1.0, 0.5, -0.1];
        let s = cosine(&a, &b).unwrap();
        let scaled: Vec<f64> = a.iter().map(|v| v * 37.5).collect();
        assert!((cosine(&scaled, &b).unwrap() - s).abs() < 1e-14);
        assert_eq!(cosine(&a, &b), cosine(&b, &a));
    }

    fn zoo_models(n: usize) -> (Vec<Network<f64>>, Tensor<f64>, Vec<usize>) {
        let ds = synth_blobs_sized(3, 5, 0.3, 8, 1).unwrap();
        let (x, y) = ds.all::<f64>();
        let models = (0..n)
            .map(|i| build::<f64>(ArchitectureId::new(Arch::ALL[i % 6], Shape::image(1, 8, 8), 3), i as u64).unwrap())
            .collect();
        (models, x, y)
    }

    #[test]
    fn heatmap_shape_and_diagonal() {
        let (models, x, y) = zoo_models(3);
        let refs: Vec<&Network<f64>> = models.iter().collect();
        let h = similarity_heatmap(&refs, &refs, &x, &y).unwrap();
        assert_eq!((h.rows, h.cols), (3, 3));
        for i in 0..3 {
            assert!((h.get(i, i) - 1.0).abs() < 1e-12);
        }
        assert!(h.values.iter().all(|v| (-1.0..=1.0).contains(v)));
        let h2 = similarity_heatmap(&refs[..2], &refs, &x, &y).unwrap();
        assert_eq!((h2.rows, h2.cols), (2, 3));
    }

    #[test]
    fn single_model_ensemble_gradient_is_own_gradient() {
        let (models, x, y) = zoo_models(1);
        let (g, losses) = ensemble_gradients(&[&models[0]], &x, &y).unwrap();
        let sg = models[0].sample_gradients(&x, &y).unwrap();
        for (a, b) in g.iter().zip(sg.grads.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        for (a, b) in losses.iter().zip(&sg.losses) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ensemble_gradient_matches_finite_difference() {
        let (models, x, y) = zoo_models(3);
        let refs: Vec<&Network<f64>> = models.iter().collect();
        let (g, _) = ensemble_gradients(&refs, &x, &y).unwrap();
        let d = x.row_len();
        let loss = |v: &[f64]| {
            let t = Tensor::new(x.shape()[1..].iter().fold(alloc::vec![1], |mut s, &k| {
                s.push(k);
                s
            }), v.to_vec())
            .unwrap();
            let p: f64 = refs.iter().map(|m| m.forward(&t).unwrap().data()[y[0]]).sum::<f64>() / 3.0;
            -p.ln()
        };
        let base = x.row(0).to_vec();
        for i in (0..d).step_by(7) {
            let mut hi = base.clone();
            let mut lo = base.clone();
            hi[i] += 1e-5;
            lo[i] -= 1e-5;
            let fd = (loss(&hi) - loss(&lo)) / 2e-5;
            assert!((fd - g[i]).abs() < 1e-6 * (1.0 + fd.abs()), "{} vs {}", fd, g[i]);
        }
    }

    #[test]
    fn zero_perturbation_has_no_successes() {
        let (models, x, y) = zoo_models(3);
        let refs: Vec<&Network<f64>> = models.iter().collect();
        let mut spec = AttackSpec::new(AttackKind::Cw, 0.03);
        spec.iterations = 1;
        let mut adv = attack(&refs[..1], &x, &y, &spec).unwrap();
        adv.perturbed = adv.originals.clone();
        for r in evaluate_all(&refs, (&x, &y), Some(&adv), "ENS", 0).unwrap() {
            assert_eq!(r.asr, 0.0);
            assert_eq!(r.ra, 1.0);
        }
    }

    #[test]
    fn success_counting() {
        // Two one-pixel inputs; a linear model predicting class 1 iff x > 0.5.
        let net = linear(alloc::vec![-1.0, 1.0], 1, 2);
        let net = {
            let mut n = net;
            n.params_mut()[0].bias.data_mut().copy_from_slice(&[0.5, -0.5]);
            n
        };
        let x = Tensor::new(alloc::vec![4, 1], alloc::vec![0.45, 0.55, 0.2, 0.9]).unwrap();
        let y = alloc::vec![0, 1, 0, 1];
        let adv = AdversarialBatch {
            originals: x.clone(),
            perturbed: Tensor::new(alloc::vec![4, 1], alloc::vec![0.52, 0.48, 0.2, 0.9]).unwrap(),
            labels: y.clone(),
            spec: AttackSpec::new(AttackKind::BaselineMi, 0.1),
            loss_trace: alloc::vec![alloc::vec![]; 4],
        };
        let r = evaluate(&[&net], VotingScheme::Average, &adv, "IT", 3).unwrap();
        assert_eq!(r.asr, 0.5);
        assert_eq!(r.ra + r.asr, 1.0);
        assert_eq!(r.ca, 1.0);
        // flips outside the budget do not count
        let mut far = adv.clone();
        far.spec.epsilon = 0.01;
        assert_eq!(evaluate(&[&net], VotingScheme::Average, &far, "IT", 3).unwrap().asr, 0.0);
    }

    #[test]
    fn clean_records_have_zero_asr() {
        let (models, x, y) = zoo_models(2);
        let refs: Vec<&Network<f64>> = models.iter().collect();
        let recs = evaluate_all(&refs, (&x, &y), None, "ENS", 0).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.attack.is_none() && r.asr == 0.0 && r.ra == 1.0));
    }

    #[test]
    fn diversity_report_of_identical_models() {
        let (models, x, y) = zoo_models(1);
        let r = gradient_diversity("self", &models[0], &models[0], &x, &y).unwrap();
        assert_eq!(r.distance_sum, 0.0);
        assert!((r.mean_cosine - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_of_linear_relation() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [2.0, 4.1, 5.9, 8.0];
        assert!(pearson(&a, &b) > 0.99);
        let c: Vec<f64> = b.iter().map(|v| -v).collect();
        assert!(pearson(&a, &c) < -0.99);
    }
}
