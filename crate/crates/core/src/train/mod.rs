//! Training procedures: supervised warm start, direct likelihood
//! maximization, label-shift EM (plain and SimPro-style), doubly robust
//! risk minimization, the two-stage plug-in pipeline and the batch-update
//! ablation.

mod dr_risk;
mod em;
mod likelihood;
mod mle;
mod two_stage;

pub use dr_risk::{dr_risk_loss_and_grad, dr_risk_loss_split, train_dr_risk, DrRiskLoss, DrRiskSample};
pub use em::{
    e_step, em_unlabeled_terms, fixmatch_unlabeled_terms, m_step, train_batch_update, train_em,
    train_em_from, EStepPrior, EmInit, EmState, Variant,
};
pub use likelihood::{marginal_loglik, marginal_loglik_and_grad, LogLikelihood};
pub use mle::train_mle;
pub use two_stage::{stage_one, two_stage, TwoStageConfig};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::distribution::{ClassDistribution, MissingnessMechanism};
use crate::error::{domain, Error, Result};
use crate::estimate::Posterior;
use crate::model::{
    posthoc_adjust, softmax, ClassifierParams, Optimizer, Sample, TrainConfig,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Supervised,
    Mle,
    Em,
    Simpro,
    DrRisk,
    TwoStage,
    BatchUpdate,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Supervised => "supervised",
            Method::Mle => "mle",
            Method::Em => "em",
            Method::Simpro => "simpro",
            Method::DrRisk => "dr-risk",
            Method::TwoStage => "two-stage",
            Method::BatchUpdate => "batch-update",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(Method::Supervised),
            "mle" => Ok(Method::Mle),
            "em" => Ok(Method::Em),
            "simpro" => Ok(Method::Simpro),
            "dr-risk" | "dr_risk" => Ok(Method::DrRisk),
            "two-stage" | "two_stage" => Ok(Method::TwoStage),
            "batch-update" | "batch_update" => Ok(Method::BatchUpdate),
            other => Err(domain(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    /// TV between the model's current `P(Y|A=0)` and the generating truth.
    pub tv_to_truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub method: Method,
    pub classifier: ClassifierParams,
    pub mechanism: MissingnessMechanism,
    /// Whether `softmax(f(x))` already targets the uniform class
    /// distribution (logit-adjusted training).
    pub logit_adjusted: bool,
    /// Class distribution the classifier was fit under: `softmax(f(x) + log
    /// train_prior)` (adjusted) or `softmax(f(x))` (plain) is `P(Y|X)`.
    pub train_prior: ClassDistribution,
    /// The model's own running estimate of `P(Y|A=0)`.
    pub unlabeled_prior: ClassDistribution,
    pub frozen_prior: Option<ClassDistribution>,
    pub stage1: Option<Box<TrainedModel>>,
    pub history: Vec<EpochRecord>,
    pub config: TrainConfig,
}

impl TrainedModel {
    /// `P(Y | X=x)` for the combined training population.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut logits = self.classifier.forward_unchecked(x);
        if self.logit_adjusted {
            for (l, p) in logits.iter_mut().zip(self.train_prior.probs()) {
                *l += p.max(1e-300).ln();
            }
        }
        softmax(&logits)
    }

    /// Posterior under a uniform class distribution, used for test-time
    /// predictions.
    pub fn uniform_posterior(&self, x: &[f64]) -> Vec<f64> {
        let p = self.classifier.predict_proba(x);
        if self.logit_adjusted {
            return p;
        }
        let c = p.len();
        let from = floor_prior(&self.train_prior);
        posthoc_adjust(
            &ClassDistribution::from_weights(&p).expect("softmax is a distribution"),
            &from,
            &ClassDistribution::uniform(c),
        )
        .map(ClassDistribution::into_vec)
        .unwrap_or(p)
    }

    /// Argmax of the raw classifier softmax, without any adjustment.
    pub fn predict_unadjusted(&self, x: &[f64]) -> usize {
        crate::distribution::argmax(&self.classifier.predict_proba(x))
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        crate::distribution::argmax(&self.uniform_posterior(x))
    }
}

impl Posterior for TrainedModel {
    fn posterior(&self, x: &[f64]) -> Vec<f64> {
        TrainedModel::posterior(self, x)
    }
}

/// Keep every entry of a prior strictly positive so it can sit in a
/// logarithm or a denominator.
pub(crate) fn floor_prior(p: &ClassDistribution) -> ClassDistribution {
    let floor = 1e-6;
    if p.probs().iter().all(|&v| v >= floor) {
        return p.clone();
    }
    let w: Vec<f64> = p.probs().iter().map(|&v| v.max(floor)).collect();
    ClassDistribution::from_weights(&w).expect("floored weights are positive")
}

/// Mean classifier softmax over every row: the training prior a plain
/// classifier implicitly carries.
pub(crate) fn implied_prior(classifier: &ClassifierParams, dataset: &Dataset) -> ClassDistribution {
    let c = dataset.num_classes;
    let mut acc = vec![0.0; c];
    for o in &dataset.observations {
        for (a, p) in acc.iter_mut().zip(classifier.predict_proba(&o.x)) {
            *a += p;
        }
    }
    ClassDistribution::from_weights(&acc).expect("softmax mass is positive")
}

/// `P(Y|A=0) ∝ P(Y) (1 − P(A=1|Y))`.
pub(crate) fn unlabeled_prior_from(
    prior: &ClassDistribution,
    mechanism: &MissingnessMechanism,
) -> ClassDistribution {
    let w: Vec<f64> = prior
        .probs()
        .iter()
        .enumerate()
        .map(|(c, p)| p * (1.0 - mechanism.propensity(c)))
        .collect();
    ClassDistribution::from_weights(&w).unwrap_or_else(|_| prior.clone())
}

pub(crate) fn tv_to_truth(dataset: &Dataset, estimate: &ClassDistribution) -> Option<f64> {
    dataset
        .truth
        .as_ref()
        .and_then(|t| crate::distribution::tv_distance(estimate, &t.unlabeled_prior).ok())
}

pub(crate) fn check_finite(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::Training {
            epoch,
            reason: format!("loss became {loss}"),
        })
    }
}

/// Mini-batch cross-entropy on the labeled rows only. With `adjust_to`
/// the loss is logit adjusted to that prior.
pub(crate) fn fit_labeled(
    classifier: &mut ClassifierParams,
    dataset: &Dataset,
    cfg: &TrainConfig,
    epochs: usize,
    adjust_to: Option<&ClassDistribution>,
    stream: &str,
) -> Result<Vec<EpochRecord>> {
    let c = dataset.num_classes;
    let labeled: Vec<(&[f64], Vec<f64>)> = dataset
        .observations
        .iter()
        .filter_map(|o| {
            o.label().map(|y| {
                let mut t = vec![0.0; c];
                t[y] = 1.0;
                (o.x.as_slice(), t)
            })
        })
        .collect();
    let shift: Option<Vec<f64>> =
        adjust_to.map(|p| floor_prior(p).probs().iter().map(|v| v.ln()).collect());
    let mut opt = Optimizer::new(cfg, classifier.weights.len());
    let mut rng = rng::stream(cfg.seed, stream);
    let bs = if cfg.batch_size == 0 { labeled.len() } else { cfg.batch_size };
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    let mut history = Vec::with_capacity(epochs);
    for epoch in 0..epochs {
        shuffle(&mut order, &mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(bs) {
            let batch: Vec<Sample> = chunk
                .iter()
                .map(|&i| Sample {
                    x: labeled[i].0,
                    target: &labeled[i].1,
                    weight: 1.0,
                })
                .collect();
            let (loss, grad) =
                crate::model::batch_loss_and_grad(classifier, &batch, shift.as_deref());
            check_finite(loss, epoch)?;
            opt.step(&mut classifier.weights, &grad);
            total += loss;
            batches += 1;
        }
        history.push(EpochRecord {
            epoch,
            loss: total / batches.max(1) as f64,
            tv_to_truth: None,
        });
    }
    Ok(history)
}

pub(crate) fn shuffle(v: &mut [usize], rng: &mut rng::Rng) {
    use rand::seq::SliceRandom;
    v.shuffle(rng);
}

pub(crate) fn init_classifier(dataset: &Dataset, cfg: &TrainConfig) -> ClassifierParams {
    ClassifierParams::init(
        cfg.architecture,
        dataset.feature_dim,
        cfg.hidden,
        dataset.num_classes,
        cfg.seed,
    )
}

/// Labeled-only training; the mechanism assumes the unlabeled set has the
/// labeled class distribution.
pub fn train_supervised(dataset: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.validate()?;
    let mut classifier = init_classifier(dataset, cfg);
    let history = fit_labeled(&mut classifier, dataset, cfg, cfg.epochs, None, "supervised")?;
    let labeled_prior = dataset.labeled_prior();
    Ok(TrainedModel {
        method: Method::Supervised,
        classifier,
        mechanism: MissingnessMechanism::constant(
            dataset.num_classes,
            dataset.p_labeled(),
            cfg.clip_floor,
        )?,
        logit_adjusted: false,
        train_prior: labeled_prior.clone(),
        unlabeled_prior: labeled_prior,
        frozen_prior: None,
        stage1: None,
        history,
        config: cfg.clone(),
    })
}

/// With no unlabeled rows the likelihood has no missing-data term and EM
/// and MLE reduce to supervised training (every propensity is 1).
pub(crate) fn supervised_as(dataset: &Dataset, cfg: &TrainConfig, method: Method) -> Result<TrainedModel> {
    let mut model = train_supervised(dataset, cfg)?;
    model.method = method;
    Ok(model)
}

/// The mechanism and `P(Y|A=0)` a previously trained model hands to the
/// doubly robust risk: a two-stage model passes its stage-1 mechanism and
/// frozen estimate, any other model its own.
pub fn stage1_nuisances(model: &TrainedModel) -> (MissingnessMechanism, ClassDistribution) {
    match (&model.stage1, &model.frozen_prior) {
        (Some(first), Some(q)) => (first.mechanism.clone(), q.clone()),
        _ => (model.mechanism.clone(), model.unlabeled_prior.clone()),
    }
}

/// Dispatch by method. `stage1` supplies the mechanism and prior for the
/// doubly robust risk; the two-stage pipeline uses `cfg` for stage 2 and a
/// linear copy of it for stage 1.
pub fn train(
    method: Method,
    dataset: &Dataset,
    cfg: &TrainConfig,
    stage1: Option<&TrainedModel>,
) -> Result<TrainedModel> {
    match method {
        Method::Supervised => train_supervised(dataset, cfg),
        Method::Mle => train_mle(dataset, cfg),
        Method::Em => train_em(dataset, cfg, Variant::Plain),
        Method::Simpro => train_em(dataset, cfg, Variant::Simpro),
        Method::BatchUpdate => train_batch_update(dataset, cfg),
        Method::DrRisk => {
            let s1 = stage1.ok_or_else(|| {
                domain("dr-risk training needs a stage-1 mechanism source")
            })?;
            let (mechanism, prior) = stage1_nuisances(s1);
            train_dr_risk(dataset, cfg, &mechanism, &prior)
        }
        Method::TwoStage => {
            let tcfg = TwoStageConfig::from_stage2(cfg.clone());
            two_stage(dataset, &tcfg)
        }
    }
}
