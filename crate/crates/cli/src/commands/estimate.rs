use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use lsdr_core::estimate::{
    confidence_interval, estimate, EstimateReport, Estimator, FittedNuisance, NuisancePair,
    NuisanceSource, OraclePosterior,
};
use lsdr_core::train::{train, train_dr_risk, two_stage, Method, TrainedModel, TwoStageConfig};
use lsdr_core::{tv_distance, ClassDistribution, Dataset, MissingnessMechanism};
use serde::Serialize;

use super::fmt_probs;
use super::train::load_checkpoint;
use crate::io::{read_dataset, write_document, InputRef, ESTIMATE_FORMAT};
use crate::Outcome;

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// Checkpoint supplying the nuisances (and, for K ≥ 2, the recipe to
    /// refit them per fold).
    #[arg(long, conflicts_with = "oracle", required_unless_present = "oracle")]
    #[serde(skip)]
    pub model: Option<PathBuf>,
    /// Use the generating posterior and propensities from the dataset
    /// header instead of a model. Requires --cross-fit 0.
    #[arg(long)]
    pub oracle: bool,
    /// or, ipw or dr.
    #[arg(long, default_value = "dr")]
    pub estimator: Estimator,
    /// Cross-fitting folds K: 0 = single fit, K ≥ 2 refits per fold.
    #[arg(long, default_value_t = 2)]
    pub cross_fit: usize,
    /// Propensity clip floor ε (default: the model's own floor, 0.001).
    #[arg(long)]
    pub clip: Option<f64>,
    /// Fold-assignment seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Two-sided confidence level of the reported intervals.
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a EstimateArgs,
    data: InputRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<InputRef>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model_method: Option<Method>,
    clip_floor: f64,
}

#[derive(Serialize)]
struct TruthCheck {
    p_combined: Vec<f64>,
    p_unlabeled: Vec<f64>,
    tv_unlabeled: f64,
    /// Whether each class's interval contains the true `P(Y=c)`.
    #[serde(skip_serializing_if = "Option::is_none")]
    covered: Option<Vec<bool>>,
}

#[derive(Serialize)]
struct Body {
    #[serde(flatten)]
    report: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    confidence_intervals: Option<Vec<(f64, f64)>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    truth: Option<TruthCheck>,
}

/// Retrain a checkpoint's method with its own settings on a fold.
fn refit(model: &TrainedModel, fold: &Dataset, clip: f64) -> lsdr_core::Result<FittedNuisance> {
    let m = match model.method {
        Method::TwoStage => {
            let stage1 = model.stage1.as_ref().map_or_else(|| model.config.clone(), |s| s.config.clone());
            let cfg = TwoStageConfig {
                stage1,
                stage2: model.config.clone(),
                cross_fit: 0,
            };
            two_stage(fold, &cfg)?
        }
        Method::DrRisk => train_dr_risk(fold, &model.config, &model.mechanism, &model.unlabeled_prior)?,
        m => train(m, fold, &model.config, None)?,
    };
    let mechanism = m.mechanism.with_clip_floor(clip)?;
    Ok(FittedNuisance {
        posterior: Box::new(m),
        mechanism,
    })
}

pub fn run(a: &EstimateArgs) -> Result<Outcome> {
    let data = read_dataset(&a.data)?;
    let report;
    let mut model_ref = None;
    let mut model_method = None;
    let clip;
    if a.oracle {
        if a.cross_fit != 0 {
            bail!("oracle nuisances are fixed; cross-fitting does not apply (use --cross-fit 0)");
        }
        let truth = data.truth.as_ref().context("--oracle needs a dataset header with truth")?;
        clip = a.clip.unwrap_or(lsdr_core::distribution::DEFAULT_CLIP_FLOOR);
        let posterior = OraclePosterior {
            mixture: truth.mixture.clone(),
            prior: truth.combined_prior.clone(),
        };
        let pair = NuisancePair {
            posterior: &posterior,
            mechanism: MissingnessMechanism::new(truth.propensity.clone(), data.p_labeled(), clip)?,
        };
        report = estimate(a.estimator, NuisanceSource::Fixed(&pair), &data, 0, a.seed)?;
    } else {
        let path = a.model.as_ref().expect("clap enforces --model or --oracle");
        let model = load_checkpoint(path)?;
        model_ref = Some(InputRef::of(path)?);
        model_method = Some(model.method);
        clip = a.clip.unwrap_or(model.mechanism.clip_floor());
        if a.cross_fit == 0 {
            let pair = NuisancePair {
                posterior: &model,
                mechanism: model.mechanism.with_clip_floor(clip)?,
            };
            report = estimate(a.estimator, NuisanceSource::Fixed(&pair), &data, 0, a.seed)?;
        } else {
            let fitter = |fold: &Dataset| refit(&model, fold, clip);
            report = estimate(a.estimator, NuisanceSource::Refit(&fitter), &data, a.cross_fit, a.seed)?;
        }
    }
    let intervals = match a.estimator {
        Estimator::Or => None,
        _ => Some(confidence_interval(&report, a.level)?),
    };
    let truth = match &data.truth {
        Some(t) => Some(TruthCheck {
            p_combined: t.combined_prior.probs().to_vec(),
            p_unlabeled: t.unlabeled_prior.probs().to_vec(),
            tv_unlabeled: tv_distance(&report.p_unlabeled, &t.unlabeled_prior)?,
            covered: intervals.as_ref().map(|ci| {
                ci.iter()
                    .zip(t.combined_prior.probs())
                    .map(|(&(lo, hi), &p)| lo <= p && p <= hi)
                    .collect()
            }),
        }),
        None => None,
    };
    let config = Resolved {
        command: a,
        data: InputRef::of(&a.data)?,
        model: model_ref,
        model_method,
        clip_floor: clip,
    };
    let body = Body {
        report,
        confidence_intervals: intervals,
        truth,
    };
    write_document(&a.out, ESTIMATE_FORMAT, &config, &body)?;
    print_report(&body.report, body.confidence_intervals.as_deref(), a.level);
    if let Some(t) = &body.truth {
        println!("TV(P(Y|A=0) estimate, truth) = {:.4}", t.tv_unlabeled);
    }
    Ok(Outcome::Complete)
}

fn print_report(r: &EstimateReport, ci: Option<&[(f64, f64)]>, level: f64) {
    println!(
        "{} estimate, N = {}, K = {}, clip events = {}",
        r.estimator, r.n, r.cross_fit_folds, r.clip_events
    );
    println!("P(Y)     = {}", fmt_probs(r.p_combined.probs()));
    println!("P(Y|A=0) = {}", fmt_probs(ClassDistribution::probs(&r.p_unlabeled)));
    if let Some(ci) = ci {
        for (c, (lo, hi)) in ci.iter().enumerate() {
            println!("  class {c}: raw {:.4}  {:.0}% CI [{lo:.4}, {hi:.4}]", r.raw[c], level * 100.0);
        }
    }
}
