use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;
use lsdr_core::report::{uniform_test_accuracy, uniform_test_eval};
use lsdr_core::train::Method;
use lsdr_core::tv_distance;
use serde::Serialize;

use super::train::load_checkpoint;
use crate::io::{read_dataset, write_document, InputRef, EVAL_FORMAT};
use crate::Outcome;

#[derive(Args, Debug, Serialize)]
pub struct EvalArgs {
    #[arg(long)]
    #[serde(skip)]
    pub model: PathBuf,
    /// Dataset whose header supplies the generating mixture (and truth).
    #[arg(long)]
    #[serde(skip)]
    pub data: PathBuf,
    /// Size of the class-balanced test set.
    #[arg(long, default_value_t = 10_000)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
}

#[derive(Serialize)]
struct Resolved<'a> {
    command: &'a EvalArgs,
    model: InputRef,
    data: InputRef,
}

#[derive(Serialize)]
struct Body {
    method: Method,
    /// Balanced-test accuracy predicting under a uniform class prior.
    accuracy: f64,
    /// Same test set, raw classifier argmax.
    accuracy_unadjusted: f64,
    tv_unlabeled: f64,
}

pub fn run(a: &EvalArgs) -> Result<Outcome> {
    let model = load_checkpoint(&a.model)?;
    let data = read_dataset(&a.data)?;
    let truth = data.truth.as_ref().context("eval needs a dataset header with truth")?;
    let body = Body {
        method: model.method,
        accuracy: uniform_test_eval(&model, &truth.mixture, a.n_test, a.seed)?,
        accuracy_unadjusted: uniform_test_accuracy(|x| model.predict_unadjusted(x), &truth.mixture, a.n_test, a.seed)?,
        tv_unlabeled: tv_distance(&model.unlabeled_prior, &truth.unlabeled_prior)?,
    };
    println!(
        "{}: accuracy {:.2}% (unadjusted {:.2}%), TV(P(Y|A=0)) {:.4}",
        body.method,
        100.0 * body.accuracy,
        100.0 * body.accuracy_unadjusted,
        body.tv_unlabeled
    );
    if let Some(out) = &a.out {
        let config = Resolved {
            command: a,
            model: InputRef::of(&a.model)?,
            data: InputRef::of(&a.data)?,
        };
        write_document(out, EVAL_FORMAT, &config, &body)?;
    }
    Ok(Outcome::Complete)
}
