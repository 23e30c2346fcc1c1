use super::{log_softmax, ClassifierParams};
use crate::distribution::{argmax, ClassDistribution};
use crate::error::{check_dim, domain, Result};

/// One weighted training example with a soft target.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub x: &'a [f64],
    pub target: &'a [f64],
    pub weight: f64,
}

/// `−Σ_c t_c log softmax(logits)_c` and its gradient `(Σ t) · s − t`.
///
/// The target may be any real vector: sub-probability pseudo-labels,
/// all-zero thresholded rows, or the signed labels of the doubly robust risk.
pub fn soft_target_ce(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let logp = log_softmax(logits);
    let mass: f64 = target.iter().sum();
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(logits.len());
    for (lp, t) in logp.iter().zip(target) {
        if *t != 0.0 {
            loss -= t * lp;
        }
        grad.push(mass * lp.exp() - t);
    }
    (loss, grad)
}

/// Mean over the batch of `w_i · CE(target_i, softmax(f(x_i) + shift))`.
/// `shift` is the logit adjustment (`log prior`), or `None` for plain CE.
pub fn batch_loss_and_grad(
    params: &ClassifierParams,
    batch: &[Sample<'_>],
    shift: Option<&[f64]>,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; params.weights.len()];
    if batch.is_empty() {
        return (0.0, grad);
    }
    let scale = 1.0 / batch.len() as f64;
    let mut loss = 0.0;
    for s in batch {
        if s.weight == 0.0 || s.target.iter().all(|&t| t == 0.0) {
            continue;
        }
        let mut logits = params.forward_unchecked(s.x);
        if let Some(shift) = shift {
            logits.iter_mut().zip(shift).for_each(|(l, a)| *l += a);
        }
        let (l, dl) = soft_target_ce(&logits, s.target);
        loss += s.weight * l;
        params.backward(s.x, &dl, s.weight * scale, &mut grad);
    }
    (loss * scale, grad)
}

fn validate_batch(params: &ClassifierParams, batch: &[Sample<'_>]) -> Result<()> {
    for s in batch {
        check_dim(params.input_dim, s.x.len())?;
        check_dim(params.num_classes, s.target.len())?;
    }
    Ok(())
}

/// Weighted cross-entropy against sub-probability targets.
pub fn weighted_ce_loss_and_grad(
    params: &ClassifierParams,
    batch: &[Sample<'_>],
) -> Result<(f64, Vec<f64>)> {
    validate_batch(params, batch)?;
    for s in batch {
        let mass: f64 = s.target.iter().sum();
        if s.target.iter().any(|&t| t < 0.0) || mass > 1.0 + 1e-9 {
            return Err(domain("targets must be sub-probability vectors"));
        }
    }
    Ok(batch_loss_and_grad(params, batch, None))
}

/// Cross-entropy on `softmax(f(x) + log prior)`. Training on data whose
/// class distribution is `prior` makes `softmax(f(x))` estimate the
/// posterior under a uniform class distribution.
pub fn logit_adjusted_loss_and_grad(
    params: &ClassifierParams,
    batch: &[Sample<'_>],
    prior: &ClassDistribution,
) -> Result<(f64, Vec<f64>)> {
    validate_batch(params, batch)?;
    check_dim(params.num_classes, prior.num_classes())?;
    if prior.probs().iter().any(|&p| p <= 0.0) {
        return Err(domain("logit adjustment needs a strictly positive prior"));
    }
    let shift: Vec<f64> = prior.probs().iter().map(|p| p.ln()).collect();
    Ok(batch_loss_and_grad(params, batch, Some(&shift)))
}

/// Convert a posterior from one class distribution to another:
/// `∝ posterior · to / from`.
pub fn posthoc_adjust(
    posterior: &ClassDistribution,
    from_prior: &ClassDistribution,
    to_prior: &ClassDistribution,
) -> Result<ClassDistribution> {
    check_dim(posterior.num_classes(), from_prior.num_classes())?;
    check_dim(posterior.num_classes(), to_prior.num_classes())?;
    if from_prior.probs().iter().any(|&p| p <= 0.0) {
        return Err(domain("post-hoc adjustment from a prior with a zero entry"));
    }
    let w: Vec<f64> = posterior
        .probs()
        .iter()
        .zip(from_prior.probs())
        .zip(to_prior.probs())
        .map(|((p, f), t)| p * t / f)
        .collect();
    ClassDistribution::from_weights(&w)
}

/// Confidence-thresholded one-hot: the argmax class if its probability is
/// at least `tau`, otherwise all zeros. Ties go to the lowest class index.
pub fn pseudo_label(posterior: &[f64], tau: f64) -> Vec<f64> {
    let mut out = vec![0.0; posterior.len()];
    let k = argmax(posterior);
    if posterior[k] >= tau {
        out[k] = 1.0;
    }
    out
}
