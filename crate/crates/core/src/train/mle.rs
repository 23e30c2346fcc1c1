//! Direct maximization of the observed-data likelihood over the classifier
//! and a sigmoid-parameterized mechanism, both by mini-batch Adam.

use super::likelihood::{marginal_loglik_and_grad, sigmoid};
use super::{
    check_finite, fit_labeled, supervised_as, implied_prior, init_classifier, shuffle, tv_to_truth,
    unlabeled_prior_from, EpochRecord, Method, TrainedModel,
};
use crate::data::{Dataset, Observation};
use crate::distribution::MissingnessMechanism;
use crate::error::Result;
use crate::model::{Optimizer, TrainConfig};
use crate::rng;

pub fn train_mle(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    if dataset.num_unlabeled() == 0 {
        return supervised_as(dataset, cfg, Method::Mle);
    }
    let c = dataset.num_classes;
    let p_a1 = dataset.p_labeled();
    let mut classifier = init_classifier(dataset, cfg);
    fit_labeled(&mut classifier, dataset, cfg, cfg.warmup_epochs, None, "warmup")?;

    let start = (p_a1 / (1.0 - p_a1)).ln();
    let mut eta = vec![start; c];
    let mut opt_w = Optimizer::new(cfg, classifier.weights.len());
    let mut opt_eta = Optimizer::with_rate(cfg, cfg.mechanism_learning_rate, c);
    let mut rng = rng::stream(cfg.seed, "batch");
    let n = dataset.len();
    let bs = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mechanism_of = |eta: &[f64]| {
        MissingnessMechanism::new(eta.iter().map(|&z| sigmoid(z)).collect(), p_a1, cfg.clip_floor)
    };

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let rows: Vec<&Observation> = chunk.iter().map(|&i| &dataset.observations[i]).collect();
            let (ll, mut g_w, mut g_eta) = marginal_loglik_and_grad(&classifier, &eta, &rows, None);
            check_finite(ll, epoch)?;
            // ascend the likelihood
            g_w.iter_mut().for_each(|g| *g = -*g);
            g_eta.iter_mut().for_each(|g| *g = -*g);
            opt_w.step(&mut classifier.weights, &g_w);
            opt_eta.step(&mut eta, &g_eta);
            total -= ll;
            batches += 1;
        }
        let prior = implied_prior(&classifier, dataset);
        let q = unlabeled_prior_from(&prior, &mechanism_of(&eta)?);
        history.push(EpochRecord {
            epoch,
            loss: total / batches.max(1) as f64,
            tv_to_truth: tv_to_truth(dataset, &q),
        });
    }
    let mechanism = mechanism_of(&eta)?;
    let train_prior = implied_prior(&classifier, dataset);
    let unlabeled_prior = unlabeled_prior_from(&train_prior, &mechanism);
    Ok(TrainedModel {
        method: Method::Mle,
        classifier,
        mechanism,
        logit_adjusted: false,
        train_prior,
        unlabeled_prior,
        frozen_prior: None,
        stage1: None,
        history,
        config: cfg.clone(),
    })
}
