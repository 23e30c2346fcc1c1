//! Doubly robust risk: every row carries a pseudo-label `ŷ`; labeled rows
//! additionally carry an inverse-propensity correction toward the true
//! label,
//!
//! `R = mean[ l(x, ŷ) + 1(a=1)/P(A=1|y) · (l(x, y) − l(x, ŷ)) ]`.
//!
//! Because cross-entropy is linear in its target, the same risk is a single
//! cross-entropy against the signed meta-label `ŷ + 1(a=1)/P(A=1|y) (e_y − ŷ)`.
//! Both evaluation paths are exposed so they can check each other.

use super::em::{simpro_row, track_prior};
use super::{
    check_finite, fit_labeled, floor_prior, init_classifier, shuffle, tv_to_truth, EpochRecord,
    Method, TrainedModel,
};
use crate::data::Dataset;
use crate::distribution::{ClassDistribution, MissingnessMechanism};
use crate::error::{check_dim, Result};
use crate::model::{soft_target_ce, ClassifierParams, Optimizer, TrainConfig};
use crate::rng;
use crate::synth::{Augmenter, Strength};

#[derive(Debug, Clone, PartialEq)]
pub struct DrRiskSample<'a> {
    pub x: &'a [f64],
    /// Observed label; `None` for unlabeled rows.
    pub label: Option<usize>,
    /// Pseudo-label `ŷ` (soft or one-hot; all zeros allowed).
    pub pseudo: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrRiskLoss {
    pub loss: f64,
    pub grad: Vec<f64>,
    /// Labeled rows whose propensity was raised to the clip floor.
    pub clip_events: usize,
}

fn validate(classifier: &ClassifierParams, mechanism: &MissingnessMechanism, batch: &[DrRiskSample<'_>]) -> Result<()> {
    check_dim(classifier.num_classes, mechanism.num_classes())?;
    for s in batch {
        check_dim(classifier.input_dim, s.x.len())?;
        check_dim(classifier.num_classes, s.pseudo.len())?;
        if let Some(y) = s.label {
            if y >= classifier.num_classes {
                return Err(crate::error::domain(format!("label {y} out of range")));
            }
        }
    }
    Ok(())
}

fn shifted_logits(classifier: &ClassifierParams, x: &[f64], shift: Option<&[f64]>) -> Vec<f64> {
    let mut logits = classifier.forward_unchecked(x);
    if let Some(s) = shift {
        logits.iter_mut().zip(s).for_each(|(l, a)| *l += a);
    }
    logits
}

/// Risk and gradient through the meta-label form. `shift` is an optional
/// logit adjustment (`log P(Y)`).
pub fn dr_risk_loss_and_grad(
    classifier: &ClassifierParams,
    mechanism: &MissingnessMechanism,
    batch: &[DrRiskSample<'_>],
    shift: Option<&[f64]>,
) -> Result<DrRiskLoss> {
    validate(classifier, mechanism, batch)?;
    let c = classifier.num_classes;
    let mut grad = vec![0.0; classifier.weights.len()];
    let mut loss = 0.0;
    let mut clip_events = 0;
    if batch.is_empty() {
        return Ok(DrRiskLoss { loss, grad, clip_events });
    }
    let scale = 1.0 / batch.len() as f64;
    let mut target = vec![0.0; c];
    for s in batch {
        target.copy_from_slice(s.pseudo);
        if let Some(y) = s.label {
            if mechanism.is_clipped(y) {
                clip_events += 1;
            }
            let w = 1.0 / mechanism.propensity(y);
            for (k, t) in target.iter_mut().enumerate() {
                let e = if k == y { 1.0 } else { 0.0 };
                *t += w * (e - s.pseudo[k]);
            }
        }
        let logits = shifted_logits(classifier, s.x, shift);
        let (l, dl) = soft_target_ce(&logits, &target);
        loss += l;
        classifier.backward(s.x, &dl, scale, &mut grad);
    }
    Ok(DrRiskLoss {
        loss: loss * scale,
        grad,
        clip_events,
    })
}

/// Risk and gradient evaluated term by term:
/// `l(x, ŷ)` plus the weighted difference `l(x, y) − l(x, ŷ)`.
pub fn dr_risk_loss_split(
    classifier: &ClassifierParams,
    mechanism: &MissingnessMechanism,
    batch: &[DrRiskSample<'_>],
    shift: Option<&[f64]>,
) -> Result<DrRiskLoss> {
    validate(classifier, mechanism, batch)?;
    let c = classifier.num_classes;
    let mut grad = vec![0.0; classifier.weights.len()];
    let mut loss = 0.0;
    let mut clip_events = 0;
    if batch.is_empty() {
        return Ok(DrRiskLoss { loss, grad, clip_events });
    }
    let scale = 1.0 / batch.len() as f64;
    for s in batch {
        let logits = shifted_logits(classifier, s.x, shift);
        let (l_hat, d_hat) = soft_target_ce(&logits, s.pseudo);
        let mut row_loss = l_hat;
        let mut row_grad = d_hat.clone();
        if let Some(y) = s.label {
            if mechanism.is_clipped(y) {
                clip_events += 1;
            }
            let w = 1.0 / mechanism.propensity(y);
            let mut onehot = vec![0.0; c];
            onehot[y] = 1.0;
            let (l_y, d_y) = soft_target_ce(&logits, &onehot);
            row_loss += w * (l_y - l_hat);
            for k in 0..c {
                row_grad[k] += w * (d_y[k] - d_hat[k]);
            }
        }
        loss += row_loss;
        classifier.backward(s.x, &row_grad, scale, &mut grad);
    }
    Ok(DrRiskLoss {
        loss: loss * scale,
        grad,
        clip_events,
    })
}

/// SimPro-style training whose loss is the doubly robust risk. The
/// mechanism and the E-step `P(Y|A=0)` come from a previous stage and stay
/// fixed; the logit-adjustment prior keeps its running update.
pub fn train_dr_risk(
    dataset: &Dataset,
    cfg: &TrainConfig,
    mechanism: &MissingnessMechanism,
    unlabeled_prior: &ClassDistribution,
) -> Result<TrainedModel> {
    cfg.validate()?;
    check_dim(dataset.num_classes, mechanism.num_classes())?;
    check_dim(dataset.num_classes, unlabeled_prior.num_classes())?;
    let c = dataset.num_classes;
    let n = dataset.len();
    let labeled_prior = dataset.labeled_prior();
    let mut classifier = init_classifier(dataset, cfg);
    fit_labeled(&mut classifier, dataset, cfg, cfg.warmup_epochs, Some(&labeled_prior), "warmup")?;

    let aug = Augmenter {
        sigma_weak: cfg.sigma_weak,
        sigma_strong: cfg.sigma_strong,
    };
    let factor = unlabeled_prior.probs().to_vec();
    let mut running_prior = labeled_prior.clone();
    let mut batch_rng = rng::stream(cfg.seed, "batch");
    let mut aug_rng = rng::stream(cfg.seed, "augment");
    let mut opt = Optimizer::new(cfg, classifier.weights.len());
    let bs = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut batch_rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let mut inputs = Vec::with_capacity(chunk.len());
            let mut pseudo = Vec::with_capacity(chunk.len());
            let mut labels = Vec::with_capacity(chunk.len());
            let mut zl = vec![0.0; c];
            let mut tu = vec![0.0; c];
            for &i in chunk {
                let o = &dataset.observations[i];
                let weak = aug.augment(&o.x, Strength::Weak, &mut aug_rng);
                let (_, t) = simpro_row(&classifier, &weak, &factor, cfg.confidence_threshold, i)?;
                match o.label() {
                    Some(y) => {
                        zl[y] += 1.0;
                        inputs.push(weak);
                    }
                    None => {
                        tu.iter_mut().zip(&t).for_each(|(z, v)| *z += v);
                        inputs.push(aug.augment(&o.x, Strength::Strong, &mut aug_rng));
                    }
                }
                labels.push(o.label());
                pseudo.push(t);
            }
            let batch: Vec<DrRiskSample> = inputs
                .iter()
                .zip(&pseudo)
                .zip(&labels)
                .map(|((x, p), &label)| DrRiskSample { x, label, pseudo: p })
                .collect();
            let shift: Vec<f64> = floor_prior(&running_prior).probs().iter().map(|p| p.ln()).collect();
            let out = dr_risk_loss_and_grad(&classifier, mechanism, &batch, Some(&shift))?;
            check_finite(out.loss, epoch)?;
            opt.step(&mut classifier.weights, &out.grad);
            total += out.loss;
            batches += 1;
            running_prior = track_prior(&running_prior, &zl, &tu, cfg.prior_momentum)?;
        }
        history.push(EpochRecord {
            epoch,
            loss: total / batches.max(1) as f64,
            tv_to_truth: tv_to_truth(dataset, unlabeled_prior),
        });
    }
    Ok(TrainedModel {
        method: Method::DrRisk,
        classifier,
        mechanism: mechanism.clone(),
        logit_adjusted: true,
        train_prior: running_prior,
        unlabeled_prior: unlabeled_prior.clone(),
        frozen_prior: Some(unlabeled_prior.clone()),
        stage1: None,
        history,
        config: cfg.clone(),
    })
}
