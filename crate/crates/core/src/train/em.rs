//! Label-shift EM. The E-step turns each unlabeled row into class weights
//! `ω(x, c) ∝ P(Y=c|x) P(A=0|Y=c)`; the M-step fits the classifier to the
//! labeled one-hots plus those weights by cross-entropy and sets the
//! mechanism in closed form from the class masses
//! `P(A=1|Y=c) = ζ_c(1) / (ζ_c(1) + ζ_c(0))`.
//!
//! The SimPro-style variant keeps a classifier that targets the uniform
//! class distribution (logit-adjusted loss against a running `P(Y)`),
//! computes weights on a weakly augmented input as
//! `ω ∝ P_uniform(Y|x) P(Y|A=0)`, thresholds them into one-hot pseudo
//! labels and trains on a strongly augmented input.

use serde::{Deserialize, Serialize};

use super::{
    check_finite, fit_labeled, floor_prior, implied_prior, init_classifier, shuffle, tv_to_truth,
    EpochRecord, Method, TrainedModel,
};
use crate::data::Dataset;
use crate::distribution::{recover_unlabeled_raw, ClassDistribution, MissingnessMechanism};
use crate::error::{domain, Error, Result};
use crate::model::{
    batch_loss_and_grad, log_softmax, pseudo_label, softmax, ClassifierParams, MechanismUpdate,
    Optimizer, Sample, TrainConfig,
};
use crate::rng;
use crate::synth::{Augmenter, Strength};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Plain,
    Simpro,
}

/// Where the E-step takes its class-distribution factor from.
#[derive(Debug, Clone, PartialEq)]
pub enum EStepPrior {
    /// The current mechanism estimate.
    Mechanism,
    /// A fixed `P(Y|A=0)` supplied from outside (stage 2 of the pipeline).
    Frozen(ClassDistribution),
    /// An exponential moving average of per-batch doubly robust estimates.
    BatchDr { momentum: f64 },
}

/// Full-batch EM state.
#[derive(Debug, Clone, PartialEq)]
pub struct EmState {
    pub classifier: ClassifierParams,
    pub mechanism: MissingnessMechanism,
    /// E-step weights, one row per unlabeled observation in dataset order.
    pub omega: Vec<Vec<f64>>,
    /// `ζ_c(1)`: labeled count of class c.
    pub zeta_labeled: Vec<f64>,
    /// `ζ_c(0)`: pseudo-labeled mass of class c.
    pub zeta_unlabeled: Vec<f64>,
    /// Running `P(Y)` of the logit-adjusted loss.
    pub running_prior: ClassDistribution,
    /// Current `P(Y|A=0)`.
    pub unlabeled_prior: ClassDistribution,
    pub iteration: usize,
}

impl EmState {
    /// Start from a classifier, assuming the unlabeled class distribution
    /// equals the labeled one.
    pub fn new(classifier: ClassifierParams, dataset: &Dataset, clip_floor: f64) -> Result<Self> {
        let c = dataset.num_classes;
        let labeled = dataset.labeled_prior();
        Ok(Self {
            classifier,
            mechanism: MissingnessMechanism::constant(c, dataset.p_labeled(), clip_floor)?,
            omega: Vec::new(),
            zeta_labeled: dataset.labeled_counts().iter().map(|&n| n as f64).collect(),
            zeta_unlabeled: vec![0.0; c],
            running_prior: labeled.clone(),
            unlabeled_prior: labeled,
            iteration: 0,
        })
    }
}

fn normalize_row(w: &mut [f64], row: usize) -> Result<()> {
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegeneratePosterior { row });
    }
    w.iter_mut().for_each(|v| *v /= total);
    Ok(())
}

/// Soft E-step weights for one unlabeled input. `factor` is
/// `1 − P(A=1|Y)` (plain) or `P(Y|A=0)` (SimPro-style, uniform-targeting
/// classifier).
fn posterior_weights(classifier: &ClassifierParams, x: &[f64], factor: &[f64], row: usize) -> Result<Vec<f64>> {
    let s = classifier.predict_proba(x);
    let mut w: Vec<f64> = s.iter().zip(factor).map(|(a, b)| a * b).collect();
    normalize_row(&mut w, row)?;
    Ok(w)
}

/// Training target from soft weights: unchanged for plain EM, the
/// confidence-thresholded one-hot for the SimPro-style variant.
fn target_of(weights: &[f64], variant: Variant, tau: f64) -> Vec<f64> {
    match variant {
        Variant::Plain => weights.to_vec(),
        Variant::Simpro => pseudo_label(weights, tau),
    }
}

/// Soft weights and SimPro-style thresholded target for a given `P(Y|A=0)`.
pub(super) fn simpro_row(
    classifier: &ClassifierParams,
    x: &[f64],
    unlabeled_prior: &[f64],
    tau: f64,
    row: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let w = posterior_weights(classifier, x, unlabeled_prior, row)?;
    let t = pseudo_label(&w, tau);
    Ok((w, t))
}

fn missing_factor(mechanism: &MissingnessMechanism) -> Vec<f64> {
    mechanism.propensities().iter().map(|p| 1.0 - p).collect()
}

fn estep_factor(state: &EmState, variant: Variant) -> Vec<f64> {
    match variant {
        Variant::Plain => missing_factor(&state.mechanism),
        Variant::Simpro => state.unlabeled_prior.probs().to_vec(),
    }
}

fn soft_weights(state: &EmState, dataset: &Dataset, variant: Variant) -> Result<Vec<Vec<f64>>> {
    let factor = estep_factor(state, variant);
    dataset
        .observations
        .iter()
        .filter(|o| !o.is_labeled())
        .enumerate()
        .map(|(row, o)| posterior_weights(&state.classifier, &o.x, &factor, row))
        .collect()
}

/// Full-batch E-step on un-augmented inputs: the training target of each
/// unlabeled row (soft weights for plain EM, thresholded one-hots for the
/// SimPro-style variant).
pub fn e_step(state: &EmState, dataset: &Dataset, variant: Variant, tau: f64) -> Result<Vec<Vec<f64>>> {
    Ok(soft_weights(state, dataset, variant)?
        .iter()
        .map(|w| target_of(w, variant, tau))
        .collect())
}

/// Closed-form mechanism from class masses.
fn mechanism_from_masses(
    labeled: &[f64],
    unlabeled: &[f64],
    p_labeled: f64,
    clip_floor: f64,
) -> Result<MissingnessMechanism> {
    let mut prop = Vec::with_capacity(labeled.len());
    for (c, (l, u)) in labeled.iter().zip(unlabeled).enumerate() {
        let total = l + u;
        if !(total > 0.0) {
            return Err(Error::ClassMass { class: c });
        }
        prop.push(l / total);
    }
    MissingnessMechanism::new(prop, p_labeled, clip_floor)
}

/// One EMA step of the logit-adjustment prior toward the class
/// distribution of a batch's training targets.
pub(super) fn track_prior(
    prior: &ClassDistribution,
    labeled: &[f64],
    targets: &[f64],
    momentum: f64,
) -> Result<ClassDistribution> {
    let mass: Vec<f64> = labeled.iter().zip(targets).map(|(a, b)| a + b).collect();
    match ClassDistribution::from_weights(&mass) {
        Ok(est) => est.mix(prior, 1.0 - momentum),
        Err(_) => Ok(prior.clone()),
    }
}

fn shift_of(prior: &ClassDistribution) -> Vec<f64> {
    floor_prior(prior).probs().iter().map(|p| p.ln()).collect()
}

/// Full-batch gradient descent with Armijo backtracking; never increases
/// the loss.
fn descend(
    classifier: &mut ClassifierParams,
    batch: &[Sample<'_>],
    shift: Option<&[f64]>,
    steps: usize,
) -> f64 {
    let mut rate = 1.0;
    let (mut loss, mut grad) = batch_loss_and_grad(classifier, batch, shift);
    for _ in 0..steps {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 < 1e-24 {
            break;
        }
        let mut accepted = false;
        while rate > 1e-12 {
            let mut trial = classifier.clone();
            trial
                .weights
                .iter_mut()
                .zip(&grad)
                .for_each(|(w, g)| *w -= rate * g);
            let (l, g) = batch_loss_and_grad(&trial, batch, shift);
            if l <= loss - 1e-4 * rate * g2 {
                *classifier = trial;
                loss = l;
                grad = g;
                rate *= 2.0;
                accepted = true;
                break;
            }
            rate *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    loss
}

/// Full-batch M-step: descend the classifier on the cross-entropy against
/// the E-step targets, then set the mechanism from the class masses. The
/// masses always use the soft E-step weights; thresholding only shapes the
/// classifier's targets (and, for the SimPro-style variant, the running
/// `P(Y)` of the logit adjustment, which tracks the target distribution).
pub fn m_step(state: &EmState, dataset: &Dataset, cfg: &TrainConfig, variant: Variant) -> Result<EmState> {
    let c = dataset.num_classes;
    let n_unlabeled = dataset.num_unlabeled();
    if state.omega.len() != n_unlabeled {
        return Err(domain("m_step needs one E-step row per unlabeled observation"));
    }
    let soft = match variant {
        Variant::Plain => state.omega.clone(),
        Variant::Simpro => soft_weights(state, dataset, variant)?,
    };
    let mut targets: Vec<Vec<f64>> = Vec::with_capacity(dataset.len());
    let mut zeta_l = vec![0.0; c];
    let mut zeta_u = vec![0.0; c];
    let mut target_mass = vec![0.0; c];
    let mut u = 0;
    for o in &dataset.observations {
        match o.label() {
            Some(y) => {
                let mut t = vec![0.0; c];
                t[y] = 1.0;
                zeta_l[y] += 1.0;
                targets.push(t);
            }
            None => {
                let t = &state.omega[u];
                zeta_u.iter_mut().zip(&soft[u]).for_each(|(z, v)| *z += v);
                target_mass.iter_mut().zip(t).for_each(|(z, v)| *z += v);
                u += 1;
                targets.push(t.clone());
            }
        }
    }
    let mut next = state.clone();
    if variant == Variant::Simpro {
        next.running_prior = track_prior(&state.running_prior, &zeta_l, &target_mass, cfg.prior_momentum)?;
    }
    let batch: Vec<Sample> = dataset
        .observations
        .iter()
        .zip(&targets)
        .map(|(o, t)| Sample { x: &o.x, target: t, weight: 1.0 })
        .collect();
    let shift = (variant == Variant::Simpro).then(|| shift_of(&next.running_prior));
    descend(
        &mut next.classifier,
        &batch,
        shift.as_deref(),
        cfg.full_batch_inner_steps,
    );
    next.mechanism = mechanism_from_masses(&zeta_l, &zeta_u, dataset.p_labeled(), cfg.clip_floor)?;
    if zeta_u.iter().sum::<f64>() > 0.0 {
        next.unlabeled_prior = ClassDistribution::from_weights(&zeta_u)?;
    }
    next.zeta_labeled = zeta_l;
    next.zeta_unlabeled = zeta_u;
    next.iteration += 1;
    Ok(next)
}

/// Optional starting point for EM; anything left `None` comes from the
/// supervised warm start and the consistent-shape assumption.
#[derive(Debug, Clone, Default)]
pub struct EmInit {
    pub classifier: Option<ClassifierParams>,
    pub mechanism: Option<MissingnessMechanism>,
    /// Combined `P(Y)` matching `mechanism`.
    pub prior: Option<ClassDistribution>,
}

/// Per-row class masses tracked by mini-batch EM.
#[derive(Debug, Clone)]
struct MassRates {
    labeled: Vec<f64>,
    unlabeled: Vec<f64>,
}

impl MassRates {
    fn from_mechanism(prior: &ClassDistribution, mechanism: &MissingnessMechanism) -> Self {
        let labeled = prior
            .probs()
            .iter()
            .enumerate()
            .map(|(c, p)| p * mechanism.propensity(c))
            .collect();
        let unlabeled = prior
            .probs()
            .iter()
            .enumerate()
            .map(|(c, p)| p * (1.0 - mechanism.propensity(c)))
            .collect();
        Self { labeled, unlabeled }
    }

    fn mechanism(&self, p_labeled: f64, clip_floor: f64) -> Result<MissingnessMechanism> {
        mechanism_from_masses(&self.labeled, &self.unlabeled, p_labeled, clip_floor)
    }

    fn unlabeled_prior(&self) -> Option<ClassDistribution> {
        ClassDistribution::from_weights(&self.unlabeled).ok()
    }

    fn blend(&mut self, labeled: &[f64], unlabeled: &[f64], rows: f64, momentum: f64) {
        for (r, v) in self.labeled.iter_mut().zip(labeled) {
            *r = momentum * *r + (1.0 - momentum) * v / rows;
        }
        for (r, v) in self.unlabeled.iter_mut().zip(unlabeled) {
            *r = momentum * *r + (1.0 - momentum) * v / rows;
        }
    }
}

/// Mini-batch (online) EM shared by the plain, SimPro-style, two-stage and
/// batch-update trainers.
pub(crate) fn online_em(
    dataset: &Dataset,
    cfg: &TrainConfig,
    variant: Variant,
    estep: EStepPrior,
    init: EmInit,
    method: Method,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let c = dataset.num_classes;
    let n = dataset.len();
    let p_a1 = dataset.p_labeled();
    let labeled_prior = dataset.labeled_prior();
    let simpro = variant == Variant::Simpro;

    let classifier = match init.classifier {
        Some(clf) => clf,
        None => {
            let mut clf = init_classifier(dataset, cfg);
            let adjust = simpro.then_some(&labeled_prior);
            fit_labeled(&mut clf, dataset, cfg, cfg.warmup_epochs, adjust, "warmup")?;
            clf
        }
    };
    let mut classifier = classifier;
    let start_mech = match init.mechanism {
        Some(m) => m,
        None => MissingnessMechanism::constant(c, p_a1, cfg.clip_floor)?,
    };
    let start_prior = init.prior.unwrap_or_else(|| labeled_prior.clone());
    let mut rates = MassRates::from_mechanism(&start_prior, &start_mech);
    let mut mechanism = rates.mechanism(p_a1, cfg.clip_floor)?;
    let mut running_prior = start_prior.clone();
    let mut q = match &estep {
        EStepPrior::Frozen(p) => p.clone(),
        _ => rates.unlabeled_prior().unwrap_or_else(|| labeled_prior.clone()),
    };

    let aug = if simpro {
        Augmenter {
            sigma_weak: cfg.sigma_weak,
            sigma_strong: cfg.sigma_strong,
        }
    } else {
        Augmenter::identity()
    };
    let mut batch_rng = rng::stream(cfg.seed, "batch");
    let mut aug_rng = rng::stream(cfg.seed, "augment");
    let mut opt = Optimizer::new(cfg, classifier.weights.len());
    let bs = if cfg.batch_size == 0 { n } else { cfg.batch_size.min(n) };
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        shuffle(&mut order, &mut batch_rng);
        let mut epoch_l = vec![0.0; c];
        let mut epoch_u = vec![0.0; c];
        let mut total_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(bs) {
            let factor: Vec<f64> = if simpro {
                q.probs().to_vec()
            } else {
                missing_factor(&mechanism)
            };
            let mut inputs: Vec<Vec<f64>> = Vec::with_capacity(chunk.len());
            let mut targets: Vec<Vec<f64>> = Vec::with_capacity(chunk.len());
            let mut zl = vec![0.0; c];
            let mut zu = vec![0.0; c];
            let mut tu = vec![0.0; c];
            for &i in chunk {
                let o = &dataset.observations[i];
                match o.label() {
                    Some(y) => {
                        let mut t = vec![0.0; c];
                        t[y] = 1.0;
                        zl[y] += 1.0;
                        inputs.push(aug.augment(&o.x, Strength::Weak, &mut aug_rng));
                        targets.push(t);
                    }
                    None => {
                        let weak = aug.augment(&o.x, Strength::Weak, &mut aug_rng);
                        let w = posterior_weights(&classifier, &weak, &factor, i)?;
                        let t = target_of(&w, variant, cfg.confidence_threshold);
                        zu.iter_mut().zip(&w).for_each(|(z, v)| *z += v);
                        tu.iter_mut().zip(&t).for_each(|(z, v)| *z += v);
                        inputs.push(aug.augment(&o.x, Strength::Strong, &mut aug_rng));
                        targets.push(t);
                    }
                }
            }
            let batch: Vec<Sample> = inputs
                .iter()
                .zip(&targets)
                .map(|(x, t)| Sample { x, target: t, weight: 1.0 })
                .collect();
            let shift = simpro.then(|| shift_of(&running_prior));
            let (loss, grad) = batch_loss_and_grad(&classifier, &batch, shift.as_deref());
            check_finite(loss, epoch)?;
            opt.step(&mut classifier.weights, &grad);
            total_loss += loss;
            batches += 1;

            match cfg.mechanism_update {
                MechanismUpdate::PerBatch => {
                    rates.blend(&zl, &zu, chunk.len() as f64, cfg.mechanism_momentum);
                    mechanism = rates.mechanism(p_a1, cfg.clip_floor)?;
                }
                MechanismUpdate::PerEpoch => {
                    epoch_l.iter_mut().zip(&zl).for_each(|(a, b)| *a += b);
                    epoch_u.iter_mut().zip(&zu).for_each(|(a, b)| *a += b);
                }
            }
            if simpro {
                running_prior = track_prior(&running_prior, &zl, &tu, cfg.prior_momentum)?;
            }
            match &estep {
                EStepPrior::Mechanism => {
                    if let Some(p) = rates.unlabeled_prior() {
                        q = p;
                    }
                }
                EStepPrior::Frozen(_) => {}
                EStepPrior::BatchDr { momentum } => {
                    let est = batch_dr_unlabeled(
                        &classifier,
                        simpro.then_some(&running_prior),
                        &mechanism,
                        dataset,
                        chunk,
                        &labeled_prior,
                        p_a1,
                    )?;
                    q = q.mix(&est, *momentum)?;
                }
            }
        }
        if cfg.mechanism_update == MechanismUpdate::PerEpoch {
            rates.blend(&epoch_l, &epoch_u, n as f64, 0.0);
            mechanism = rates.mechanism(p_a1, cfg.clip_floor)?;
            if let EStepPrior::Mechanism = estep {
                if let Some(p) = rates.unlabeled_prior() {
                    q = p;
                }
            }
        }
        history.push(EpochRecord {
            epoch,
            loss: total_loss / batches.max(1) as f64,
            tv_to_truth: tv_to_truth(dataset, &q),
        });
    }

    let train_prior = if simpro {
        running_prior
    } else {
        implied_prior(&classifier, dataset)
    };
    let frozen_prior = match estep {
        EStepPrior::Frozen(p) => Some(p),
        _ => None,
    };
    Ok(TrainedModel {
        method,
        classifier,
        mechanism,
        logit_adjusted: simpro,
        train_prior,
        unlabeled_prior: q,
        frozen_prior,
        stage1: None,
        history,
        config: cfg.clone(),
    })
}

/// Doubly robust `P(Y|A=0)` from one batch's rows.
fn batch_dr_unlabeled(
    classifier: &ClassifierParams,
    adjust: Option<&ClassDistribution>,
    mechanism: &MissingnessMechanism,
    dataset: &Dataset,
    rows: &[usize],
    labeled_prior: &ClassDistribution,
    p_a1: f64,
) -> Result<ClassDistribution> {
    let c = dataset.num_classes;
    let shift = adjust.map(shift_of);
    let mut raw = vec![0.0; c];
    for &i in rows {
        let o = &dataset.observations[i];
        let mut logits = classifier.forward_unchecked(&o.x);
        if let Some(s) = &shift {
            logits.iter_mut().zip(s).for_each(|(l, a)| *l += a);
        }
        let p = softmax(&logits);
        for k in 0..c {
            raw[k] += p[k];
        }
        if let Some(y) = o.label() {
            let w = 1.0 / mechanism.propensity(y);
            for k in 0..c {
                let ind = if k == y { 1.0 } else { 0.0 };
                raw[k] += w * (ind - p[k]);
            }
        }
    }
    raw.iter_mut().for_each(|v| *v /= rows.len() as f64);
    recover_unlabeled_raw(&raw, labeled_prior, p_a1)
}

/// Plain or SimPro-style EM. A batch size of 0 runs exact full-batch EM
/// (no augmentation), otherwise mini-batch EM.
pub fn train_em(dataset: &Dataset, cfg: &TrainConfig, variant: Variant) -> Result<TrainedModel> {
    train_em_from(dataset, cfg, variant, EStepPrior::Mechanism, EmInit::default())
}

pub fn train_em_from(
    dataset: &Dataset,
    cfg: &TrainConfig,
    variant: Variant,
    estep: EStepPrior,
    init: EmInit,
) -> Result<TrainedModel> {
    let method = match variant {
        Variant::Plain => Method::Em,
        Variant::Simpro => Method::Simpro,
    };
    if variant == Variant::Plain && dataset.num_unlabeled() == 0 {
        cfg.validate()?;
        return super::supervised_as(dataset, cfg, method);
    }
    if cfg.batch_size == 0 {
        return full_batch_em(dataset, cfg, variant, estep, init, method);
    }
    online_em(dataset, cfg, variant, estep, init, method)
}

fn full_batch_em(
    dataset: &Dataset,
    cfg: &TrainConfig,
    variant: Variant,
    estep: EStepPrior,
    init: EmInit,
    method: Method,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let simpro = variant == Variant::Simpro;
    let labeled_prior = dataset.labeled_prior();
    let classifier = match init.classifier {
        Some(clf) => clf,
        None => {
            let mut clf = init_classifier(dataset, cfg);
            fit_labeled(&mut clf, dataset, cfg, cfg.warmup_epochs, simpro.then_some(&labeled_prior), "warmup")?;
            clf
        }
    };
    let mut state = EmState::new(classifier, dataset, cfg.clip_floor)?;
    if let Some(m) = init.mechanism {
        state.mechanism = m;
    }
    if let Some(p) = init.prior {
        state.running_prior = p;
    }
    if let EStepPrior::Frozen(p) = &estep {
        state.unlabeled_prior = p.clone();
    }
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        state.omega = e_step(&state, dataset, variant, cfg.confidence_threshold)?;
        let frozen = state.unlabeled_prior.clone();
        state = m_step(&state, dataset, cfg, variant)?;
        if let EStepPrior::Frozen(_) = estep {
            state.unlabeled_prior = frozen;
        }
        let ll = super::marginal_loglik(&state.classifier, &state.mechanism, dataset)?;
        let loss = -ll.total / dataset.len() as f64;
        history.push(EpochRecord {
            epoch,
            loss,
            tv_to_truth: tv_to_truth(dataset, &state.unlabeled_prior),
        });
    }
    let train_prior = if simpro {
        state.running_prior.clone()
    } else {
        implied_prior(&state.classifier, dataset)
    };
    Ok(TrainedModel {
        method,
        classifier: state.classifier,
        mechanism: state.mechanism,
        logit_adjusted: simpro,
        train_prior,
        unlabeled_prior: state.unlabeled_prior,
        frozen_prior: match estep {
            EStepPrior::Frozen(p) => Some(p),
            _ => None,
        },
        stage1: None,
        history,
        config: cfg.clone(),
    })
}

/// Single-stage SimPro-style training whose E-step prior is a moving
/// average of per-batch doubly robust estimates.
pub fn train_batch_update(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    online_em(
        dataset,
        cfg,
        Variant::Simpro,
        EStepPrior::BatchDr {
            momentum: cfg.dr_momentum,
        },
        EmInit::default(),
        Method::BatchUpdate,
    )
}

/// Per-row unlabeled loss of the FixMatch form:
/// `−Σ_c δ(P(Y|weak))_c log P(Y=c|strong)`.
pub fn fixmatch_unlabeled_terms(
    classifier: &ClassifierParams,
    weak: &[Vec<f64>],
    strong: &[Vec<f64>],
    tau: f64,
) -> Vec<f64> {
    weak.iter()
        .zip(strong)
        .map(|(w, s)| {
            let target = pseudo_label(&classifier.predict_proba(w), tau);
            let logp = log_softmax(&classifier.forward_unchecked(s));
            -target.iter().zip(&logp).map(|(t, l)| t * l).sum::<f64>()
        })
        .collect()
}

/// Per-row unlabeled term of the EM objective with thresholded E-step
/// weights computed on `weak` and the loss evaluated on `strong`.
pub fn em_unlabeled_terms(
    classifier: &ClassifierParams,
    mechanism: &MissingnessMechanism,
    weak: &[Vec<f64>],
    strong: &[Vec<f64>],
    tau: f64,
) -> Result<Vec<f64>> {
    let factor = missing_factor(mechanism);
    weak.iter()
        .zip(strong)
        .enumerate()
        .map(|(row, (w, s))| {
            let omega = posterior_weights(classifier, w, &factor, row)?;
            let target = pseudo_label(&omega, tau);
            let logp = log_softmax(&classifier.forward_unchecked(s));
            Ok(-target.iter().zip(&logp).map(|(t, l)| t * l).sum::<f64>())
        })
        .collect()
}
