use lsdr_core::data::{Dataset, Observation};
use lsdr_core::distribution::{tv_distance, ClassDistribution, MissingnessMechanism};
use lsdr_core::model::{soft_target_ce, weighted_ce_loss_and_grad, Architecture, ClassifierParams, Sample, TrainConfig};
use lsdr_core::report::uniform_test_eval;
use lsdr_core::rng;
use lsdr_core::synth::{generate, sample_iid, Augmenter, MixtureSpec, Population, Shape, ShiftConfig, Strength};
use lsdr_core::train::*;
use proptest::prelude::*;
use rand::Rng as _;

fn one_dim(spec: &[(f64, Option<usize>)], c: usize) -> Dataset {
    let obs = spec
        .iter()
        .map(|&(x, y)| match y {
            Some(y) => Observation::labeled(vec![x], y),
            None => Observation::unlabeled(vec![x]),
        })
        .collect();
    Dataset::new(obs, c, 1, None, None).unwrap()
}

fn separable(shape: Shape, seed: u64) -> (MixtureSpec, Dataset) {
    let mix = MixtureSpec::new(vec![vec![4.0, 0.0], vec![-2.0, 3.5], vec![-2.0, -3.5]], 0.5).unwrap();
    let data = generate(
        &mix,
        &ShiftConfig {
            gamma_l: 10.0,
            gamma_u: 10.0,
            shape,
            n1: 300,
            m1: 600,
            seed,
        },
    )
    .unwrap();
    (mix, data)
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        warmup_epochs: 10,
        batch_size: 64,
        ..TrainConfig::default()
    }
}

#[test]
fn e_step_hand_example() {
    let data = one_dim(&[(0.0, Some(0)), (0.0, Some(1)), (0.3, None)], 2);
    let clf = ClassifierParams::zeros(Architecture::Linear, 1, 0, 2);
    let mut state = EmState::new(clf, &data, 1e-3).unwrap();
    state.mechanism = MissingnessMechanism::new(vec![0.8, 0.2], 0.5, 1e-3).unwrap();
    let w = e_step(&state, &data, Variant::Plain, 0.95).unwrap();
    assert!((w[0][0] - 0.2).abs() < 1e-15 && (w[0][1] - 0.8).abs() < 1e-15);

    state.mechanism = MissingnessMechanism::constant(2, 0.3, 1e-3).unwrap();
    let w = e_step(&state, &data, Variant::Plain, 0.95).unwrap();
    assert_eq!(w[0], vec![0.5, 0.5]);

    // Below the threshold the SimPro-style target is an all-zero row.
    let w = e_step(&state, &data, Variant::Simpro, 0.95).unwrap();
    assert_eq!(w[0], vec![0.0, 0.0]);
}

#[test]
fn m_step_closed_form_mechanism() {
    let data = one_dim(&[(0.1, Some(0)), (0.2, Some(0)), (0.3, Some(0)), (0.4, Some(1)), (0.5, None)], 2);
    let clf = ClassifierParams::zeros(Architecture::Linear, 1, 0, 2);
    let mut state = EmState::new(clf, &data, 1e-3).unwrap();
    state.omega = vec![vec![1.0, 0.0]];
    let next = m_step(&state, &data, &TrainConfig::default(), Variant::Plain).unwrap();
    assert!((next.mechanism.propensity(0) - 0.75).abs() < 1e-15);
    assert_eq!(next.mechanism.propensity(1), 1.0);
    assert_eq!(next.zeta_labeled, vec![3.0, 1.0]);
    assert_eq!(next.zeta_unlabeled, vec![1.0, 0.0]);

    // A class with no labeled and no pseudo-labeled mass.
    let data = one_dim(&[(0.1, Some(0)), (0.5, None)], 2);
    let mut state = EmState::new(ClassifierParams::zeros(Architecture::Linear, 1, 0, 2), &data, 1e-3).unwrap();
    state.omega = vec![vec![1.0, 0.0]];
    assert!(m_step(&state, &data, &TrainConfig::default(), Variant::Plain).is_err());
}

#[test]
fn m_step_all_labeled_gives_unit_propensity() {
    let data = one_dim(&[(0.1, Some(0)), (0.2, Some(1)), (0.3, Some(1))], 2);
    let state = EmState::new(ClassifierParams::zeros(Architecture::Linear, 1, 0, 2), &data, 1e-3).unwrap();
    let next = m_step(&state, &data, &TrainConfig::default(), Variant::Plain).unwrap();
    assert_eq!(next.mechanism.propensities(), vec![1.0, 1.0]);
}

fn weighted_ce(clf: &ClassifierParams, data: &Dataset, omega: &[Vec<f64>]) -> f64 {
    let c = data.num_classes;
    let mut u = 0;
    let targets: Vec<Vec<f64>> = data
        .observations
        .iter()
        .map(|o| match o.label() {
            Some(y) => (0..c).map(|k| if k == y { 1.0 } else { 0.0 }).collect(),
            None => {
                u += 1;
                omega[u - 1].clone()
            }
        })
        .collect();
    let batch: Vec<Sample> = data
        .observations
        .iter()
        .zip(&targets)
        .map(|(o, t)| Sample { x: &o.x, target: t, weight: 1.0 })
        .collect();
    weighted_ce_loss_and_grad(clf, &batch).unwrap().0
}

#[test]
fn m_step_does_not_increase_the_weighted_cross_entropy() {
    let (_, data) = separable(Shape::Reversed, 1);
    let clf = ClassifierParams::init(Architecture::Linear, 2, 0, 3, 5);
    let mut state = EmState::new(clf, &data, 1e-3).unwrap();
    state.omega = e_step(&state, &data, Variant::Plain, 0.95).unwrap();
    let before = weighted_ce(&state.classifier, &data, &state.omega);
    let next = m_step(&state, &data, &TrainConfig::default(), Variant::Plain).unwrap();
    let after = weighted_ce(&next.classifier, &data, &state.omega);
    assert!(after <= before, "{after} > {before}");
}

#[test]
fn closed_form_mechanism_with_true_labels_matches_population_identity() {
    let (_, data) = separable(Shape::Reversed, 2);
    let hidden = data.hidden_labels.clone().unwrap();
    let mut state = EmState::new(ClassifierParams::zeros(Architecture::Linear, 2, 0, 3), &data, 1e-6).unwrap();
    state.omega = data
        .observations
        .iter()
        .zip(&hidden)
        .filter(|(o, _)| !o.is_labeled())
        .map(|(_, h)| (0..3).map(|k| if Some(k) == *h { 1.0 } else { 0.0 }).collect())
        .collect();
    let cfg = TrainConfig {
        clip_floor: 1e-6,
        ..TrainConfig::default()
    };
    let next = m_step(&state, &data, &cfg, Variant::Plain).unwrap();
    let truth = data.truth.as_ref().unwrap();
    for c in 0..3 {
        let expect = truth.p_labeled * truth.labeled_prior[c] / truth.combined_prior[c];
        assert!((next.mechanism.propensity(c) - expect).abs() < 1e-12);
        assert!((truth.propensity[c] - expect).abs() < 1e-12);
    }
}

#[test]
fn full_batch_em_is_monotone() {
    let (_, data) = separable(Shape::Uniform, 3);
    let cfg = TrainConfig {
        batch_size: 0,
        epochs: 25,
        warmup_epochs: 2,
        ..TrainConfig::default()
    };
    let model = train_em(&data, &cfg, Variant::Plain).unwrap();
    // history stores −loglik / N
    for w in model.history.windows(2) {
        assert!(w[1].loss <= w[0].loss + 1e-8 / data.len() as f64, "{} -> {}", w[0].loss, w[1].loss);
    }
}

#[test]
fn em_recovers_uniform_shape() {
    let (_, data) = separable(Shape::Uniform, 4);
    let model = train_em(&data, &quick_cfg(), Variant::Plain).unwrap();
    let truth = &data.truth.as_ref().unwrap().unlabeled_prior;
    let tv = tv_distance(&model.unlabeled_prior, truth).unwrap();
    assert!(tv <= 0.03, "tv {tv}");
}

#[test]
fn mle_recovers_consistent_shape() {
    let (_, data) = separable(Shape::Consistent, 5);
    let model = train_mle(&data, &quick_cfg()).unwrap();
    let truth = &data.truth.as_ref().unwrap().unlabeled_prior;
    let tv = tv_distance(&model.unlabeled_prior, truth).unwrap();
    assert!(tv <= 0.05, "tv {tv}");
    for p in model.mechanism.propensities() {
        assert!((1e-3..=1.0).contains(&p));
    }
}

#[test]
fn em_fixed_point_at_the_truth() {
    let mix = MixtureSpec::spread(3, 2, 3.0, 1.0, 8).unwrap();
    let pop = Population {
        prior: ClassDistribution::new(vec![0.5, 0.3, 0.2]).unwrap(),
        propensity: vec![0.4, 0.2, 0.1],
    };
    let data = sample_iid(&mix, &pop, 20_000, &mut rng::stream(1, "fixed-point")).unwrap();
    let truth_mech = MissingnessMechanism::new(pop.propensity.clone(), pop.p_labeled(), 1e-3).unwrap();
    let init = EmInit {
        classifier: Some(ClassifierParams::bayes_linear(&mix, &pop.prior).unwrap()),
        mechanism: Some(truth_mech.clone()),
        prior: None,
    };
    let cfg = TrainConfig {
        batch_size: 0,
        epochs: 10,
        ..TrainConfig::default()
    };
    let model = train_em_from(&data, &cfg, Variant::Plain, EStepPrior::Mechanism, init).unwrap();
    for c in 0..3 {
        let moved = (model.mechanism.propensity(c) - truth_mech.propensity(c)).abs();
        assert!(moved <= 0.02, "class {c} moved {moved}");
    }
}

#[test]
fn zero_unlabeled_rows_reduce_to_supervised() {
    let (_, data) = separable(Shape::Consistent, 6);
    let labeled: Vec<usize> = (0..data.len()).filter(|&i| data.observations[i].is_labeled()).collect();
    let data = data.subset(&labeled).unwrap();
    let cfg = quick_cfg();
    let sup = train_supervised(&data, &cfg).unwrap();
    for model in [train_em(&data, &cfg, Variant::Plain).unwrap(), train_mle(&data, &cfg).unwrap()] {
        assert_eq!(model.classifier, sup.classifier);
        assert_eq!(model.mechanism.propensities(), vec![1.0; 3]);
    }
}

#[test]
fn fixmatch_reduction_under_uniform_propensity() {
    let mut r = rng::stream(4, "fixmatch");
    let clf = ClassifierParams::init(Architecture::Mlp1, 4, 8, 5, 2);
    let clf = ClassifierParams::from_weights(
        Architecture::Mlp1,
        4,
        8,
        5,
        clf.weights.iter().map(|w| w * 8.0).collect(),
    )
    .unwrap();
    let aug = Augmenter::for_mixture_sigma(1.0);
    let xs: Vec<Vec<f64>> = (0..64).map(|_| (0..4).map(|_| r.random_range(-2.0..2.0)).collect()).collect();
    let weak: Vec<Vec<f64>> = xs.iter().map(|x| aug.augment(x, Strength::Weak, &mut r)).collect();
    let strong: Vec<Vec<f64>> = xs.iter().map(|x| aug.augment(x, Strength::Strong, &mut r)).collect();
    let mech = MissingnessMechanism::constant(5, 0.3, 1e-3).unwrap();
    let fm = fixmatch_unlabeled_terms(&clf, &weak, &strong, 0.7);
    let em = em_unlabeled_terms(&clf, &mech, &weak, &strong, 0.7).unwrap();
    assert!(fm.iter().any(|&v| v == 0.0) && fm.iter().any(|&v| v > 0.0), "threshold must be active");
    for (a, b) in fm.iter().zip(&em) {
        assert!((a - b).abs() <= 1e-10);
    }
}

fn random_batch(seed: u64, n: usize, d: usize, c: usize) -> (Vec<Vec<f64>>, Vec<Option<usize>>, Vec<Vec<f64>>) {
    let mut r = rng::stream(seed, "dr-batch");
    let xs = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let labels = (0..n).map(|_| r.random_bool(0.5).then(|| r.random_range(0..c))).collect();
    let pseudo = (0..n)
        .map(|_| (0..c).map(|_| r.random_range(0.0..1.0)).collect())
        .collect();
    (xs, labels, pseudo)
}

#[test]
fn dr_risk_special_rows() {
    let clf = ClassifierParams::init(Architecture::Linear, 2, 0, 3, 1);
    let x = [0.3, -0.7];
    let pseudo = [0.2, 0.5, 0.3];
    let ones = MissingnessMechanism::new(vec![1.0; 3], 0.5, 1e-3).unwrap();
    let logits = clf.forward(&x).unwrap();

    let lab = [DrRiskSample { x: &x, label: Some(2), pseudo: &pseudo }];
    let r = dr_risk_loss_and_grad(&clf, &ones, &lab, None).unwrap();
    let ce = soft_target_ce(&logits, &[0.0, 0.0, 1.0]).0;
    assert!((r.loss - ce).abs() < 1e-12);

    let mech = MissingnessMechanism::new(vec![0.3, 0.2, 0.1], 0.2, 1e-3).unwrap();
    let unl = [DrRiskSample { x: &x, label: None, pseudo: &pseudo }];
    let r = dr_risk_loss_and_grad(&clf, &mech, &unl, None).unwrap();
    assert!((r.loss - soft_target_ce(&logits, &pseudo).0).abs() < 1e-12);
}

#[test]
fn dr_risk_clips_and_counts() {
    let clf = ClassifierParams::init(Architecture::Linear, 1, 0, 2, 1);
    let mech = MissingnessMechanism::new(vec![1e-6, 0.5], 0.5, 1e-3).unwrap();
    let p = [0.5, 0.5];
    let batch = [
        DrRiskSample { x: &[0.1], label: Some(0), pseudo: &p },
        DrRiskSample { x: &[0.2], label: Some(1), pseudo: &p },
    ];
    assert_eq!(dr_risk_loss_and_grad(&clf, &mech, &batch, None).unwrap().clip_events, 1);
}

/// Resampling missingness under the true mechanism leaves the risk unbiased
/// for the all-labeled cross-entropy, whatever the pseudo-labels.
#[test]
fn dr_risk_is_unbiased_for_full_data_risk() {
    let c = 3;
    let clf = ClassifierParams::init(Architecture::Linear, 2, 0, c, 9);
    let (xs, _, _) = random_batch(2, 40, 2, c);
    let mut r = rng::stream(3, "labels");
    let ys: Vec<usize> = (0..xs.len()).map(|_| r.random_range(0..c)).collect();
    // Adversarial pseudo-labels: always the wrong class.
    let pseudo: Vec<Vec<f64>> = ys.iter().map(|&y| (0..c).map(|k| if k == (y + 1) % c { 1.0 } else { 0.0 }).collect()).collect();
    let prop = [0.7, 0.3, 0.15];
    let mech = MissingnessMechanism::new(prop.to_vec(), 0.4, 1e-3).unwrap();
    let full: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(x, &y)| soft_target_ce(&clf.forward(x).unwrap(), &(0..c).map(|k| if k == y { 1.0 } else { 0.0 }).collect::<Vec<_>>()).0)
        .sum::<f64>()
        / xs.len() as f64;
    let reps = 4000;
    let mut vals = Vec::with_capacity(reps);
    for _ in 0..reps {
        let batch: Vec<DrRiskSample> = xs
            .iter()
            .zip(&ys)
            .zip(&pseudo)
            .map(|((x, &y), p)| DrRiskSample {
                x,
                label: r.random_bool(prop[y]).then_some(y),
                pseudo: p,
            })
            .collect();
        vals.push(dr_risk_loss_and_grad(&clf, &mech, &batch, None).unwrap().loss);
    }
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
    assert!((mean - full).abs() <= 3.0 * sd / (reps as f64).sqrt(), "{mean} vs {full}");
}

proptest! {
    #[test]
    fn dr_risk_paths_agree(seed in any::<u64>(), p in prop::collection::vec(0.0005..1.0f64, 4), adjust in any::<bool>()) {
        let c = 4;
        let clf = ClassifierParams::init(Architecture::Mlp1, 3, 5, c, seed);
        let mech = MissingnessMechanism::new(p, 0.4, 1e-3).unwrap();
        let (xs, labels, pseudo) = random_batch(seed, 16, 3, c);
        let batch: Vec<DrRiskSample> = xs.iter().zip(&labels).zip(&pseudo)
            .map(|((x, &label), p)| DrRiskSample { x, label, pseudo: p })
            .collect();
        let shift = [-0.3, -1.2, -2.0, -0.9];
        let shift = adjust.then_some(&shift[..]);
        let a = dr_risk_loss_and_grad(&clf, &mech, &batch, shift).unwrap();
        let b = dr_risk_loss_split(&clf, &mech, &batch, shift).unwrap();
        prop_assert!((a.loss - b.loss).abs() <= 1e-10 * a.loss.abs().max(1.0));
        for (g, h) in a.grad.iter().zip(&b.grad) {
            prop_assert!((g - h).abs() <= 1e-10 * g.abs().max(1.0));
        }
        prop_assert_eq!(a.clip_events, b.clip_events);
    }

    #[test]
    fn e_step_rows_are_distributions(seed in any::<u64>(), p in prop::collection::vec(0.0..0.999f64, 3)) {
        let (_, data) = separable(Shape::Middle, seed % 4);
        let mut state = EmState::new(ClassifierParams::init(Architecture::Linear, 2, 0, 3, seed), &data, 1e-3).unwrap();
        state.mechanism = MissingnessMechanism::new(p, 0.3, 1e-3).unwrap();
        for row in e_step(&state, &data, Variant::Plain, 0.95).unwrap() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
        }
        for row in e_step(&state, &data, Variant::Simpro, 0.95).unwrap() {
            let s = row.iter().sum::<f64>();
            prop_assert!(s == 0.0 || s == 1.0);
        }
    }
}

#[test]
fn dr_risk_needs_a_mechanism_source() {
    let (_, data) = separable(Shape::Consistent, 7);
    assert!(train(Method::DrRisk, &data, &quick_cfg(), None).is_err());
}

#[test]
fn two_stage_records_both_stages() {
    let (_, data) = separable(Shape::Reversed, 8);
    let cfg = TwoStageConfig::from_stage2(TrainConfig {
        architecture: Architecture::Mlp1,
        hidden: 8,
        ..quick_cfg()
    });
    let model = two_stage(&data, &cfg).unwrap();
    let first = model.stage1.as_ref().unwrap();
    assert_eq!(first.classifier.architecture, Architecture::Linear);
    assert_eq!(model.classifier.architecture, Architecture::Mlp1);
    let frozen = model.frozen_prior.as_ref().unwrap();
    assert_eq!(model.method, Method::TwoStage);
    let (mech, prior) = stage1_nuisances(&model);
    assert_eq!(&prior, frozen);
    assert_eq!(mech, first.mechanism);
    let dr = train(Method::DrRisk, &data, &quick_cfg(), Some(&model)).unwrap();
    assert_eq!(dr.frozen_prior.as_ref(), Some(frozen));
}

#[test]
fn batch_update_without_momentum_is_simpro_with_fixed_prior() {
    let (_, data) = separable(Shape::Headtail, 9);
    let cfg = TrainConfig {
        dr_momentum: 1.0,
        ..quick_cfg()
    };
    let bu = train_batch_update(&data, &cfg).unwrap();
    let fixed = train_em_from(
        &data,
        &cfg,
        Variant::Simpro,
        EStepPrior::Frozen(data.labeled_prior()),
        EmInit::default(),
    )
    .unwrap();
    assert_eq!(bu.classifier, fixed.classifier);
}

#[test]
fn training_is_deterministic() {
    let (_, data) = separable(Shape::Middle, 10);
    for m in [Method::Mle, Method::Em, Method::Simpro, Method::BatchUpdate] {
        let a = train(m, &data, &quick_cfg(), None).unwrap();
        let b = train(m, &data, &quick_cfg(), None).unwrap();
        assert_eq!(a, b, "{m}");
    }
}

#[test]
fn uniform_test_eval_examples() {
    let mix = MixtureSpec::spread(3, 2, 8.0, 0.5, 1).unwrap();
    let data = generate(
        &mix,
        &ShiftConfig { gamma_l: 1.0, gamma_u: 1.0, shape: Shape::Consistent, n1: 20, m1: 20, seed: 0 },
    )
    .unwrap();
    let mut model = train_supervised(&data, &quick_cfg()).unwrap();
    model.classifier = ClassifierParams::bayes_linear(&mix, &ClassDistribution::uniform(3)).unwrap();
    assert!(uniform_test_eval(&model, &mix, 3000, 1).unwrap() >= 0.99);

    // A classifier that ignores its input predicts one class: accuracy 1/C
    // on a balanced set.
    model.classifier = ClassifierParams::zeros(Architecture::Linear, 2, 0, 3);
    let acc = uniform_test_eval(&model, &mix, 3000, 1).unwrap();
    let sigma = (1.0 / 3.0 * 2.0 / 3.0 / 3000.0f64).sqrt();
    assert!((acc - 1.0 / 3.0).abs() <= 3.0 * sigma);
    assert_eq!(uniform_test_eval(&model, &mix, 3000, 1).unwrap(), acc);
}

#[test]
fn posthoc_adjustment_helps_on_reversed_shape() {
    let mix = MixtureSpec::spread(3, 2, 2.0, 1.0, 4).unwrap();
    let data = generate(
        &mix,
        &ShiftConfig { gamma_l: 20.0, gamma_u: 20.0, shape: Shape::Reversed, n1: 400, m1: 400, seed: 3 },
    )
    .unwrap();
    let model = train_em(&data, &quick_cfg(), Variant::Plain).unwrap();
    let (xs, ys) = lsdr_core::report::balanced_test_set(&mix, 6000, 2).unwrap();
    let acc = |f: &dyn Fn(&[f64]) -> usize| xs.iter().zip(&ys).filter(|(x, y)| f(x) == **y).count() as f64 / xs.len() as f64;
    let adjusted = acc(&|x| model.predict(x));
    let raw = acc(&|x| model.predict_unadjusted(x));
    assert!(adjusted >= raw, "{adjusted} < {raw}");
}
