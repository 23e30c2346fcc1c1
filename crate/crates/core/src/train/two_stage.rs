//! Two-stage plug-in pipeline. Stage 1 runs SimPro-style EM (a small model
//! is enough) and turns its nuisances into a doubly robust estimate of
//! `P(Y|A=0)`; stage 2 reruns SimPro-style EM with that estimate frozen in
//! the E-step while the logit-adjustment prior keeps its running update.

use serde::{Deserialize, Serialize};

use super::em::{online_em, EStepPrior, EmInit, Variant};
use super::{train_em, Method, TrainedModel};
use crate::data::Dataset;
use crate::distribution::ClassDistribution;
use crate::error::Result;
use crate::estimate::{estimate, Estimator, FittedNuisance, NuisancePair, NuisanceSource};
use crate::model::{Architecture, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoStageConfig {
    pub stage1: TrainConfig,
    pub stage2: TrainConfig,
    /// Cross-fitting folds for the stage-1 estimate; 0 evaluates the
    /// stage-1 fit on the data it was trained on.
    pub cross_fit: usize,
}

impl TwoStageConfig {
    /// Stage 2 as given, stage 1 the same settings with a linear model.
    pub fn from_stage2(stage2: TrainConfig) -> Self {
        let mut stage1 = stage2.clone();
        stage1.architecture = Architecture::Linear;
        Self {
            stage1,
            stage2,
            cross_fit: 0,
        }
    }
}

/// Stage 1 alone: the SimPro-style model and its doubly robust
/// `P(Y|A=0)`.
pub fn stage_one(dataset: &Dataset, cfg: &TwoStageConfig) -> Result<(TrainedModel, ClassDistribution)> {
    let first = train_em(dataset, &cfg.stage1, Variant::Simpro)?;
    let report = if cfg.cross_fit == 0 {
        let pair = NuisancePair {
            posterior: &first,
            mechanism: first.mechanism.clone(),
        };
        estimate(Estimator::Dr, NuisanceSource::Fixed(&pair), dataset, 0, cfg.stage1.seed)?
    } else {
        let fitter = |train: &Dataset| -> Result<FittedNuisance> {
            let m = train_em(train, &cfg.stage1, Variant::Simpro)?;
            let mechanism = m.mechanism.clone();
            Ok(FittedNuisance {
                posterior: Box::new(m),
                mechanism,
            })
        };
        estimate(
            Estimator::Dr,
            NuisanceSource::Refit(&fitter),
            dataset,
            cfg.cross_fit,
            cfg.stage1.seed,
        )?
    };
    Ok((first, report.p_unlabeled))
}

pub fn two_stage(dataset: &Dataset, cfg: &TwoStageConfig) -> Result<TrainedModel> {
    let (first, prior) = stage_one(dataset, cfg)?;
    let mut second = online_em(
        dataset,
        &cfg.stage2,
        Variant::Simpro,
        EStepPrior::Frozen(prior),
        EmInit::default(),
        Method::TwoStage,
    )?;
    second.stage1 = Some(Box::new(first));
    Ok(second)
}
