//! Browser bindings: simulate a shifted dataset, estimate its unlabeled
//! class prior, and run a small coverage study. Every export returns a JSON
//! string so the page can stay plain JavaScript; seeds are `u32` so they
//! arrive as plain numbers rather than BigInt.

use lsdr_core::estimate::{estimate, Estimator, NuisancePair, NuisanceSource};
use lsdr_core::mc::{run_replications, McScenario, Regime};
use lsdr_core::model::TrainConfig;
use lsdr_core::synth::{generate, MixtureSpec, Population, Shape, ShiftConfig};
use lsdr_core::train::{train, Method};
use lsdr_core::{tv_distance, ClassDistribution, Dataset};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

fn to_json(v: &impl Serialize) -> Result<String, JsError> {
    serde_json::to_string(v).map_err(err)
}

/// Two-dimensional mixture so the page can draw it.
fn mixture(classes: usize) -> Result<MixtureSpec, JsError> {
    MixtureSpec::spread(classes, 2, 3.0, 1.0, 7).map_err(err)
}

fn dataset(classes: usize, shape: &str, gamma_l: f64, gamma_u: f64, n1: usize, m1: usize, seed: u64) -> Result<Dataset, JsError> {
    let cfg = ShiftConfig {
        gamma_l,
        gamma_u,
        shape: shape.parse::<Shape>().map_err(err)?,
        n1,
        m1,
        seed,
    };
    generate(&mixture(classes)?, &cfg).map_err(err)
}

#[derive(Serialize)]
struct Simulated {
    labeled_counts: Vec<usize>,
    unlabeled_counts: Vec<usize>,
    labeled_prior: Vec<f64>,
    unlabeled_prior: Vec<f64>,
    propensity: Vec<f64>,
    /// Up to 600 points `[x0, x1, class, labeled]` for a scatter plot.
    points: Vec<(f64, f64, usize, bool)>,
}

#[wasm_bindgen]
pub fn simulate(classes: usize, shape: &str, gamma_l: f64, gamma_u: f64, n1: usize, m1: usize, seed: u32) -> Result<String, JsError> {
    let data = dataset(classes, shape, gamma_l, gamma_u, n1, m1, seed.into())?;
    let truth = data.truth.as_ref().expect("generated data carries truth");
    let stride = data.len().div_ceil(600).max(1);
    let points = data
        .observations
        .iter()
        .enumerate()
        .step_by(stride)
        .map(|(i, o)| {
            let y = o.label().or_else(|| data.hidden_labels.as_ref().and_then(|h| h[i])).unwrap_or(0);
            (o.x[0], o.x[1], y, o.is_labeled())
        })
        .collect();
    to_json(&Simulated {
        labeled_counts: truth.labeled_counts.clone(),
        unlabeled_counts: truth.unlabeled_counts.clone(),
        labeled_prior: truth.labeled_prior.probs().to_vec(),
        unlabeled_prior: truth.unlabeled_prior.probs().to_vec(),
        propensity: truth.propensity.clone(),
        points,
    })
}

#[derive(Serialize)]
struct PriorEstimate {
    name: String,
    p_unlabeled: Vec<f64>,
    tv: f64,
}

#[derive(Serialize)]
struct Estimated {
    truth: Vec<f64>,
    estimates: Vec<PriorEstimate>,
}

/// Train `method` on the simulated data, then compare its own `P(Y|A=0)`
/// and the OR/IPW/DR estimates built on it against the truth and the
/// labeled-prior baseline.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn estimate_prior(
    classes: usize,
    shape: &str,
    gamma_l: f64,
    gamma_u: f64,
    n1: usize,
    m1: usize,
    seed: u32,
    method: &str,
    epochs: usize,
) -> Result<String, JsError> {
    let data = dataset(classes, shape, gamma_l, gamma_u, n1, m1, seed.into())?;
    let truth = data.truth.clone().expect("generated data carries truth");
    let method = method.parse::<Method>().map_err(err)?;
    if matches!(method, Method::DrRisk | Method::TwoStage) {
        return Err(JsError::new("the demo trains single-stage methods only"));
    }
    let cfg = TrainConfig {
        epochs,
        seed: seed.into(),
        ..TrainConfig::default()
    };
    let model = train(method, &data, &cfg, None).map_err(err)?;
    let row = |name: String, p: &ClassDistribution| -> Result<PriorEstimate, JsError> {
        Ok(PriorEstimate {
            name,
            p_unlabeled: p.probs().to_vec(),
            tv: tv_distance(p, &truth.unlabeled_prior).map_err(err)?,
        })
    };
    let mut estimates = vec![
        row("baseline (labeled prior)".into(), &truth.labeled_prior)?,
        row(format!("{method}"), &model.unlabeled_prior)?,
    ];
    let pair = NuisancePair {
        posterior: &model,
        mechanism: model.mechanism.clone(),
    };
    for e in [Estimator::Or, Estimator::Ipw, Estimator::Dr] {
        let rep = estimate(e, NuisanceSource::Fixed(&pair), &data, 0, seed.into()).map_err(err)?;
        estimates.push(row(format!("{method} + {}", e.name().to_uppercase()), &rep.p_unlabeled)?);
    }
    to_json(&Estimated {
        truth: truth.unlabeled_prior.probs().to_vec(),
        estimates,
    })
}

#[derive(Serialize)]
struct CoverageRow {
    estimator: String,
    bias: Vec<f64>,
    bias_se: Vec<f64>,
    coverage95: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct Coverage {
    truth: Vec<f64>,
    band: (f64, f64),
    rows: Vec<CoverageRow>,
}

/// Repeated i.i.d. draws from a three-class population with fixed
/// (oracle or corrupted) nuisances.
#[wasm_bindgen]
pub fn coverage(regime: &str, n: usize, reps: usize, seed: u32) -> Result<String, JsError> {
    let regime = regime.parse::<Regime>().map_err(err)?;
    if regime == Regime::LearnedBoth {
        return Err(JsError::new("learned nuisances are too slow for the page; use the CLI"));
    }
    let pop = Population {
        prior: ClassDistribution::new(vec![0.5, 0.3, 0.2]).map_err(err)?,
        propensity: vec![0.6, 0.3, 0.1],
    };
    let mix = MixtureSpec::spread(3, 2, 2.0, 1.0, 5).map_err(err)?;
    let rep = run_replications(&McScenario::new(mix, pop, regime, n, reps, seed.into())).map_err(err)?;
    let rows = rep
        .summaries
        .iter()
        .map(|s| CoverageRow {
            estimator: s.estimator.name().to_uppercase(),
            bias: s.bias.clone(),
            bias_se: s.bias_se.clone(),
            coverage95: s.coverage95.clone(),
        })
        .collect();
    to_json(&Coverage {
        truth: rep.truth.clone(),
        band: rep.coverage_band,
        rows,
    })
}
