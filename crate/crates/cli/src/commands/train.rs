use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::Args;
use lsdr_core::model::Architecture;
use lsdr_core::train::{stage1_nuisances, train, train_dr_risk, two_stage, Method, TrainedModel, TwoStageConfig};
use lsdr_core::tv_distance;
use serde::{Deserialize, Serialize};

use super::fmt_dist;
use crate::args::TrainArgs;
use crate::io::{read_dataset, read_document, write_document, InputRef, CHECKPOINT_FORMAT, HISTORY_FORMAT};
use crate::Outcome;

#[derive(Args, Debug, Serialize)]
pub struct TrainCmd {
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// supervised, mle, em, simpro, dr-risk, two-stage or batch-update.
    #[arg(long)]
    pub method: Method,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Two-stage only: stage-1 architecture.
    #[arg(long, default_value = "linear")]
    pub stage1_arch: Architecture,
    /// Two-stage only: stage-2 architecture.
    #[arg(long, default_value = "mlp1")]
    pub stage2_arch: Architecture,
    /// Two-stage only: cross-fitting folds of the stage-1 DR estimate.
    #[arg(long, default_value_t = 0)]
    pub cross_fit: usize,
    /// dr-risk only: `from:<checkpoint>` supplying the stage-1 mechanism
    /// and frozen P(Y|A=0).
    #[arg(long)]
    #[serde(skip)]
    pub mechanism: Option<String>,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
    /// Also write the per-epoch history to this file.
    #[arg(long)]
    #[serde(skip)]
    pub history: Option<PathBuf>,
}

#[derive(Serialize, Deserialize)]
pub struct Checkpoint {
    pub model: TrainedModel,
}

#[derive(Serialize)]
struct ResolvedTrain<'a> {
    command: &'a TrainCmd,
    data: InputRef,
    #[serde(skip_serializing_if = "Option::is_none")]
    mechanism_source: Option<InputRef>,
    train_config: serde_json::Value,
}

pub fn load_checkpoint(path: &Path) -> Result<TrainedModel> {
    Ok(read_document::<Checkpoint>(path, CHECKPOINT_FORMAT)?.body.model)
}

fn mechanism_path(spec: &str) -> Result<PathBuf> {
    spec.strip_prefix("from:")
        .filter(|p| !p.is_empty())
        .map(PathBuf::from)
        .with_context(|| format!("--mechanism expects from:<checkpoint>, got '{spec}'"))
}

pub fn run(a: &TrainCmd) -> Result<Outcome> {
    if a.method == Method::DrRisk && a.mechanism.is_none() {
        bail!("--method dr-risk needs --mechanism from:<checkpoint> (a stage-1 model)");
    }
    if a.method != Method::DrRisk && a.mechanism.is_some() {
        bail!("--mechanism is only used by --method dr-risk");
    }
    let data = read_dataset(&a.data)?;
    let cfg = a.train.resolve(a.seed);
    let mut mechanism_source = None;
    let (model, train_config) = match a.method {
        Method::TwoStage => {
            ensure!(a.train.arch.is_none(), "two-stage takes --stage1-arch/--stage2-arch, not --arch");
            let mut tcfg = TwoStageConfig::from_stage2(cfg);
            tcfg.stage1.architecture = a.stage1_arch;
            tcfg.stage2.architecture = a.stage2_arch;
            tcfg.cross_fit = a.cross_fit;
            (two_stage(&data, &tcfg)?, serde_json::to_value(&tcfg)?)
        }
        Method::DrRisk => {
            let path = mechanism_path(a.mechanism.as_deref().unwrap_or_default())?;
            let source = load_checkpoint(&path)?;
            ensure!(
                source.mechanism.num_classes() == data.num_classes,
                "mechanism checkpoint has {} classes, data has {}",
                source.mechanism.num_classes(),
                data.num_classes
            );
            mechanism_source = Some(InputRef::of(&path)?);
            let (mech, prior) = stage1_nuisances(&source);
            (train_dr_risk(&data, &cfg, &mech, &prior)?, serde_json::to_value(&cfg)?)
        }
        m => (train(m, &data, &cfg, None)?, serde_json::to_value(&cfg)?),
    };
    let config = ResolvedTrain {
        command: a,
        data: InputRef::of(&a.data)?,
        mechanism_source,
        train_config,
    };
    write_document(&a.out, CHECKPOINT_FORMAT, &config, &Checkpoint { model: model.clone() })?;
    if let Some(h) = &a.history {
        #[derive(Serialize)]
        struct History<'a> {
            method: Method,
            history: &'a [lsdr_core::train::EpochRecord],
        }
        write_document(h, HISTORY_FORMAT, &config, &History { method: model.method, history: &model.history })?;
    }
    println!("method {}: {} epochs recorded", model.method, model.history.len());
    println!("P(Y|A=0) estimate = {}", fmt_dist(&model.unlabeled_prior));
    if let Some(q) = &model.frozen_prior {
        println!("frozen prior       = {}", fmt_dist(q));
    }
    if let Some(t) = &data.truth {
        println!("TV to truth = {:.4}", tv_distance(&model.unlabeled_prior, &t.unlabeled_prior)?);
    }
    Ok(Outcome::Complete)
}
