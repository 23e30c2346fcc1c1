//! Monte Carlo harness for the estimators: replicated coverage and bias
//! studies under oracle, corrupted and learned nuisances, the shrinking-
//! corruption bias-decay study, and the five-shape TV sweep.
//!
//! Every replication draws from its own named RNG stream and results are
//! reduced in replication order, so reports do not depend on scheduling.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, DiscreteCDF};

use crate::data::Dataset;
use crate::distribution::{tv_distance, ClassDistribution, MissingnessMechanism};
use crate::error::{domain, Error, Result};
use crate::estimate::{
    estimate, normal_quantile, EstimateReport, Estimator, FittedNuisance, NuisancePair,
    NuisanceSource, OraclePosterior, Posterior, PoweredPosterior,
};
use crate::model::TrainConfig;
use crate::par;
use crate::report::{config_hash, uniform_test_eval, ExperimentRecord};
use crate::rng;
use crate::synth::{generate, sample_iid, MixtureSpec, Population, Shape, ShiftConfig};
use crate::train::{stage_one, train, train_dr_risk, Method, TwoStageConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Regime {
    OracleBoth,
    /// Oracle posterior, corrupted propensity.
    OraclePosteriorOnly,
    /// Oracle propensity, corrupted posterior.
    OraclePropensityOnly,
    /// Both nuisances fit on the replication's data.
    LearnedBoth,
    /// Both nuisances corrupted.
    Corrupted,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::OracleBoth => "oracle-both",
            Regime::OraclePosteriorOnly => "oracle-posterior-only",
            Regime::OraclePropensityOnly => "oracle-propensity-only",
            Regime::LearnedBoth => "learned-both",
            Regime::Corrupted => "corrupted",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.replace('_', "-").as_str() {
            "oracle-both" => Ok(Regime::OracleBoth),
            "oracle-posterior-only" => Ok(Regime::OraclePosteriorOnly),
            "oracle-propensity-only" => Ok(Regime::OraclePropensityOnly),
            "learned-both" => Ok(Regime::LearnedBoth),
            "corrupted" => Ok(Regime::Corrupted),
            other => Err(domain(format!("unknown regime '{other}'"))),
        }
    }
}

/// How a corrupted nuisance departs from the oracle: posteriors are raised
/// to `posterior_power` and renormalized (power 1/T is temperature T),
/// propensities are multiplied by `propensity_factor` and clipped to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corruption {
    pub posterior_power: f64,
    pub propensity_factor: f64,
}

impl Default for Corruption {
    fn default() -> Self {
        Self {
            posterior_power: 1.0 / 3.0,
            propensity_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McScenario {
    pub mixture: MixtureSpec,
    pub population: Population,
    pub regime: Regime,
    pub corruption: Corruption,
    /// Rows per replication.
    pub n: usize,
    pub replications: usize,
    pub seed: u64,
    /// Cross-fitting folds for learned nuisances (0 = none).
    pub cross_fit: usize,
    /// Trainer for learned nuisances.
    pub learner: Method,
    pub train: TrainConfig,
    pub clip_floor: f64,
}

impl McScenario {
    pub fn new(mixture: MixtureSpec, population: Population, regime: Regime, n: usize, replications: usize, seed: u64) -> Self {
        Self {
            mixture,
            population,
            regime,
            corruption: Corruption::default(),
            n,
            replications,
            seed,
            cross_fit: 0,
            learner: Method::Em,
            train: TrainConfig::default(),
            clip_floor: crate::distribution::DEFAULT_CLIP_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.mixture.num_classes;
        if self.replications < 2 {
            return Err(domain(format!("need at least 2 replications, got {}", self.replications)));
        }
        if self.n < 10 * c {
            return Err(domain(format!("N = {} is below 10·C = {}", self.n, 10 * c)));
        }
        if self.population.prior.num_classes() != c || self.population.propensity.len() != c {
            return Err(Error::Dimension {
                expected: c,
                got: self.population.propensity.len(),
            });
        }
        if self.cross_fit == 1 {
            return Err(Error::InvalidFolds(1));
        }
        Ok(())
    }

    fn oracle_mechanism(&self, p_labeled: f64) -> Result<MissingnessMechanism> {
        MissingnessMechanism::new(self.population.propensity.clone(), p_labeled, self.clip_floor)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub replication: usize,
    pub error: String,
}

/// One estimator's result in one replication.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub replication: usize,
    pub estimator: Estimator,
    pub raw: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence_variance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_half_width: Option<Vec<f64>>,
    pub clip_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub estimator: Estimator,
    /// Mean of `raw − truth`.
    pub bias: Vec<f64>,
    /// Standard error of that mean across replications.
    pub bias_se: Vec<f64>,
    pub rmse: Vec<f64>,
    /// Mean and variance of `√N (raw − truth)`.
    pub scaled_error_mean: Vec<f64>,
    pub scaled_error_variance: Vec<f64>,
    /// Standardized third moment and excess kurtosis of `√N (raw − truth)`.
    pub skewness: Vec<f64>,
    pub excess_kurtosis: Vec<f64>,
    /// Mean plug-in influence variance and the empirical/plug-in ratio.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_influence_variance: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<Vec<f64>>,
    /// Empirical coverage of the 95% and 99% intervals.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage95: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coverage99: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub scenario: McScenario,
    /// `P(Y)` the estimators target.
    pub truth: Vec<f64>,
    pub completed: usize,
    pub failures: Vec<Failure>,
    /// Exact binomial band for 95% coverage at the completed replication
    /// count (3 sigma on each side).
    pub coverage_band: (f64, f64),
    pub summaries: Vec<EstimatorSummary>,
    pub records: Vec<ReplicationRecord>,
}

impl McReport {
    pub fn summary(&self, estimator: Estimator) -> Option<&EstimatorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator)
    }
}

/// `[k_lo / R, k_hi / R]` where `k_lo`, `k_hi` are the Binomial(R, p)
/// quantiles at `Φ(−σ)` and `Φ(σ)`.
pub fn binomial_band(replications: usize, p: f64, sigmas: f64) -> Result<(f64, f64)> {
    if replications == 0 {
        return Err(domain("binomial band needs at least one replication"));
    }
    let dist = Binomial::new(p, replications as u64).map_err(|e| domain(e.to_string()))?;
    let lower_tail = 1.0 - statrs::distribution::ContinuousCDF::cdf(&std_normal(), sigmas);
    let upper_tail = 1.0 - lower_tail;
    let quantile = |q: f64| -> u64 {
        (0..=replications as u64)
            .find(|&k| dist.cdf(k) >= q)
            .unwrap_or(replications as u64)
    };
    let r = replications as f64;
    Ok((quantile(lower_tail) as f64 / r, quantile(upper_tail) as f64 / r))
}

fn std_normal() -> statrs::distribution::Normal {
    statrs::distribution::Normal::new(0.0, 1.0).expect("standard normal")
}

fn scaled_mechanism(oracle: &MissingnessMechanism, factor: f64) -> Result<MissingnessMechanism> {
    oracle.scaled(factor)
}

/// OR, IPW and DR reports for one dataset under the scenario's regime.
fn replicate(scenario: &McScenario, dataset: &Dataset, r: usize) -> Result<Vec<EstimateReport>> {
    let oracle_post = OraclePosterior {
        mixture: scenario.mixture.clone(),
        prior: scenario.population.prior.clone(),
    };
    let oracle_mech = scenario.oracle_mechanism(dataset.p_labeled())?;
    let corrupt_post = PoweredPosterior {
        inner: &oracle_post,
        power: scenario.corruption.posterior_power,
    };
    let corrupt_mech = scaled_mechanism(&oracle_mech, scenario.corruption.propensity_factor)?;
    let seed = rng::child_seed(scenario.seed, &format!("mc/folds/r={r}"));
    let fixed = |post: &dyn Posterior, mech: MissingnessMechanism| -> Result<Vec<EstimateReport>> {
        let pair = NuisancePair {
            posterior: post,
            mechanism: mech,
        };
        Estimator::ALL
            .iter()
            .map(|&e| estimate(e, NuisanceSource::Fixed(&pair), dataset, 0, seed))
            .collect()
    };
    match scenario.regime {
        Regime::OracleBoth => fixed(&oracle_post, oracle_mech),
        Regime::OraclePosteriorOnly => fixed(&oracle_post, corrupt_mech),
        Regime::OraclePropensityOnly => fixed(&corrupt_post, oracle_mech),
        Regime::Corrupted => fixed(&corrupt_post, corrupt_mech),
        Regime::LearnedBoth => {
            let mut cfg = scenario.train.clone();
            cfg.seed = rng::child_seed(scenario.seed, &format!("mc/train/r={r}"));
            cfg.clip_floor = scenario.clip_floor;
            let learner = scenario.learner;
            let fitter = move |train_set: &Dataset| -> Result<FittedNuisance> {
                let m = train(learner, train_set, &cfg, None)?;
                let mechanism = m.mechanism.clone();
                Ok(FittedNuisance {
                    posterior: Box::new(m),
                    mechanism,
                })
            };
            Estimator::ALL
                .iter()
                .map(|&e| estimate(e, NuisanceSource::Refit(&fitter), dataset, scenario.cross_fit, seed))
                .collect()
        }
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Central moments 2..4 (population normalization).
fn central_moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let m = mean(v);
    let n = v.len() as f64;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in v {
        let d = x - m;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    (m, m2 / n, m3 / n, m4 / n)
}

fn summarize(
    estimator: Estimator,
    records: &[&ReplicationRecord],
    truth: &[f64],
    n: usize,
) -> EstimatorSummary {
    let c = truth.len();
    let r = records.len() as f64;
    let root_n = (n as f64).sqrt();
    let z95 = normal_quantile(0.975);
    let z99 = normal_quantile(0.995);
    let mut s = EstimatorSummary {
        estimator,
        bias: Vec::with_capacity(c),
        bias_se: Vec::with_capacity(c),
        rmse: Vec::with_capacity(c),
        scaled_error_mean: Vec::with_capacity(c),
        scaled_error_variance: Vec::with_capacity(c),
        skewness: Vec::with_capacity(c),
        excess_kurtosis: Vec::with_capacity(c),
        mean_influence_variance: None,
        variance_ratio: None,
        coverage95: None,
        coverage99: None,
    };
    let has_var = records.iter().all(|rec| rec.influence_variance.is_some());
    let mut miv = Vec::with_capacity(c);
    let mut ratio = Vec::with_capacity(c);
    let mut cov95 = Vec::with_capacity(c);
    let mut cov99 = Vec::with_capacity(c);
    for k in 0..c {
        let err: Vec<f64> = records.iter().map(|rec| rec.raw[k] - truth[k]).collect();
        let (m, m2, m3, m4) = central_moments(&err);
        let sample_var = m2 * r / (r - 1.0);
        s.bias.push(m);
        s.bias_se.push((sample_var / r).sqrt());
        s.rmse.push((err.iter().map(|e| e * e).sum::<f64>() / r).sqrt());
        s.scaled_error_mean.push(m * root_n);
        s.scaled_error_variance.push(sample_var * n as f64);
        s.skewness.push(if m2 > 0.0 { m3 / m2.powf(1.5) } else { 0.0 });
        s.excess_kurtosis.push(if m2 > 0.0 { m4 / (m2 * m2) - 3.0 } else { 0.0 });
        if has_var {
            let vars: Vec<f64> = records
                .iter()
                .map(|rec| rec.influence_variance.as_ref().expect("checked")[k])
                .collect();
            let mv = mean(&vars);
            miv.push(mv);
            ratio.push(sample_var * n as f64 / mv);
            let covered = |z: f64| {
                records
                    .iter()
                    .zip(&vars)
                    .filter(|(rec, v)| (rec.raw[k] - truth[k]).abs() <= z * (*v / n as f64).sqrt())
                    .count() as f64
                    / r
            };
            cov95.push(covered(z95));
            cov99.push(covered(z99));
        }
    }
    if has_var {
        s.mean_influence_variance = Some(miv);
        s.variance_ratio = Some(ratio);
        s.coverage95 = Some(cov95);
        s.coverage99 = Some(cov99);
    }
    s
}

fn record_of(r: usize, rep: &EstimateReport) -> ReplicationRecord {
    ReplicationRecord {
        replication: r,
        estimator: rep.estimator,
        raw: rep.raw.clone(),
        influence_variance: rep.influence_variance.clone(),
        ci_half_width: rep.ci_half_width.clone(),
        clip_events: rep.clip_events,
    }
}

/// Run `R` independent replications: draw `N` i.i.d. rows from the
/// population, build nuisances per regime, and compute all three estimators.
/// Failed replications are recorded and skipped.
pub fn run_replications(scenario: &McScenario) -> Result<McReport> {
    scenario.validate()?;
    let indices: Vec<usize> = (0..scenario.replications).collect();
    let results = par::map(indices, |r| -> Result<Vec<EstimateReport>> {
        let mut rng = rng::stream(scenario.seed, &format!("mc/r={r}"));
        let data = sample_iid(&scenario.mixture, &scenario.population, scenario.n, &mut rng)?;
        replicate(scenario, &data, r)
    });
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (r, res) in results.into_iter().enumerate() {
        match res {
            Ok(reports) => records.extend(reports.iter().map(|rep| record_of(r, rep))),
            Err(e) => failures.push(Failure {
                replication: r,
                error: e.to_string(),
            }),
        }
    }
    let completed = scenario.replications - failures.len();
    if completed < 2 {
        return Err(domain(format!(
            "only {completed} of {} replications completed",
            scenario.replications
        )));
    }
    let truth = scenario.population.prior.probs().to_vec();
    let summaries = Estimator::ALL
        .iter()
        .map(|&e| {
            let recs: Vec<&ReplicationRecord> = records.iter().filter(|r| r.estimator == e).collect();
            summarize(e, &recs, &truth, scenario.n)
        })
        .collect();
    Ok(McReport {
        scenario: scenario.clone(),
        truth,
        completed,
        failures,
        coverage_band: binomial_band(completed, 0.95, 3.0)?,
        summaries,
        records,
    })
}

/// Where the 95% coverage of one estimator left its binomial band across
/// an N grid. The limit statement only constrains large N, so a miss at the
/// smallest N alone is not the same finding as a miss everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BandVerdict {
    WithinAtAllN,
    ViolatedOnlyAtSmallestN,
    ViolatedAtSomeN,
    ViolatedAtAllN,
}

/// Per-class coverage checked against each report's own band; `reports`
/// must be ordered by increasing N.
pub fn band_verdict(reports: &[McReport], estimator: Estimator) -> Result<BandVerdict> {
    if reports.is_empty() {
        return Err(domain("band verdict needs at least one report"));
    }
    let violated: Vec<bool> = reports
        .iter()
        .map(|rep| {
            let (lo, hi) = rep.coverage_band;
            rep.summary(estimator)
                .and_then(|s| s.coverage95.as_ref())
                .map(|cov| cov.iter().any(|&c| c < lo || c > hi))
                .ok_or_else(|| domain(format!("{estimator} reports carry no coverage")))
        })
        .collect::<Result<_>>()?;
    let count = violated.iter().filter(|&&v| v).count();
    Ok(match count {
        0 => BandVerdict::WithinAtAllN,
        k if k == violated.len() => BandVerdict::ViolatedAtAllN,
        1 if violated[0] => BandVerdict::ViolatedOnlyAtSmallestN,
        _ => BandVerdict::ViolatedAtSomeN,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayConfig {
    pub mixture: MixtureSpec,
    pub population: Population,
    pub ns: Vec<usize>,
    pub replications: usize,
    pub seed: u64,
    /// Corruption magnitude `δ = magnitude · N^exponent` on both nuisances:
    /// posterior power `1 + δ`, propensity factor `1 + δ`.
    pub magnitude: f64,
    pub exponent: f64,
    pub clip_floor: f64,
    /// Acceptance thresholds on the fitted slopes, recorded with the results.
    pub dr_slope_max: f64,
    pub or_slope_min: f64,
}

impl DecayConfig {
    pub fn new(mixture: MixtureSpec, population: Population, seed: u64) -> Self {
        Self {
            mixture,
            population,
            ns: vec![1000, 4000, 16000],
            replications: 200,
            seed,
            magnitude: 0.5,
            exponent: -0.25,
            clip_floor: crate::distribution::DEFAULT_CLIP_FLOOR,
            dr_slope_max: -0.45,
            or_slope_min: -0.35,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub n: usize,
    pub delta: f64,
    pub estimator: Estimator,
    /// Mean of `estimate(corrupted) − estimate(oracle)` on the same data.
    pub bias: Vec<f64>,
    pub bias_se: Vec<f64>,
    /// `Σ_c |bias_c|`.
    pub bias_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub config: DecayConfig,
    pub rows: Vec<DecayRow>,
    /// Least-squares slope of `ln bias_l1` on `ln N`, per estimator.
    pub slopes: Vec<(Estimator, f64)>,
    /// `dr_slope_max − DR slope` and `OR slope − or_slope_min`; both
    /// non-negative when the separation holds.
    pub dr_margin: f64,
    pub or_margin: f64,
    pub failures: Vec<Failure>,
}

impl DecayReport {
    pub fn slope(&self, estimator: Estimator) -> Option<f64> {
        self.slopes.iter().find(|(e, _)| *e == estimator).map(|(_, s)| *s)
    }

    pub fn separated(&self) -> bool {
        self.dr_margin >= 0.0 && self.or_margin >= 0.0
    }
}

pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let mx = mean(&lx);
    let my = mean(&ly);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Bias of each estimator when both nuisances carry an error shrinking
/// like `N^exponent`. Each replication evaluates the corrupted and the
/// oracle estimator on the same data; since the oracle estimators are
/// unbiased the mean difference estimates the bias with far less noise than
/// comparing with the truth.
pub fn bias_decay_study(cfg: &DecayConfig) -> Result<DecayReport> {
    if cfg.ns.len() < 3 {
        return Err(domain("the N grid needs at least 3 points"));
    }
    if cfg.replications < 2 {
        return Err(domain("need at least 2 replications"));
    }
    let c = cfg.mixture.num_classes;
    let oracle_post = OraclePosterior {
        mixture: cfg.mixture.clone(),
        prior: cfg.population.prior.clone(),
    };
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in &cfg.ns {
        let delta = cfg.magnitude * (n as f64).powf(cfg.exponent);
        let jobs: Vec<usize> = (0..cfg.replications).collect();
        let results = par::map(jobs, |r| -> Result<Vec<Vec<f64>>> {
            let mut rng = rng::stream(cfg.seed, &format!("mc/decay/n={n}/r={r}"));
            let data = sample_iid(&cfg.mixture, &cfg.population, n, &mut rng)?;
            let oracle_mech =
                MissingnessMechanism::new(cfg.population.propensity.clone(), data.p_labeled(), cfg.clip_floor)?;
            let bad_post = PoweredPosterior {
                inner: &oracle_post,
                power: 1.0 + delta,
            };
            let oracle = NuisancePair {
                posterior: &oracle_post,
                mechanism: oracle_mech.clone(),
            };
            let corrupt = NuisancePair {
                posterior: &bad_post,
                mechanism: oracle_mech.scaled(1.0 + delta)?,
            };
            Estimator::ALL
                .iter()
                .map(|&e| {
                    let a = estimate(e, NuisanceSource::Fixed(&corrupt), &data, 0, 0)?;
                    let b = estimate(e, NuisanceSource::Fixed(&oracle), &data, 0, 0)?;
                    Ok(a.raw.iter().zip(&b.raw).map(|(x, y)| x - y).collect())
                })
                .collect()
        });
        let mut diffs: Vec<Vec<Vec<f64>>> = Vec::new();
        for (r, res) in results.into_iter().enumerate() {
            match res {
                Ok(d) => diffs.push(d),
                Err(e) => failures.push(Failure {
                    replication: r,
                    error: format!("N={n}: {e}"),
                }),
            }
        }
        if diffs.len() < 2 {
            return Err(domain(format!("too few replications completed at N={n}")));
        }
        for (j, &e) in Estimator::ALL.iter().enumerate() {
            let mut bias = Vec::with_capacity(c);
            let mut se = Vec::with_capacity(c);
            for k in 0..c {
                let v: Vec<f64> = diffs.iter().map(|d| d[j][k]).collect();
                let (m, m2, _, _) = central_moments(&v);
                let r = v.len() as f64;
                bias.push(m);
                se.push((m2 / (r - 1.0)).sqrt());
            }
            rows.push(DecayRow {
                n,
                delta,
                estimator: e,
                bias_l1: bias.iter().map(|b| b.abs()).sum(),
                bias,
                bias_se: se,
            });
        }
    }
    let slopes: Vec<(Estimator, f64)> = Estimator::ALL
        .iter()
        .map(|&e| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.estimator == e)
                .map(|r| (r.n as f64, r.bias_l1))
                .collect();
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            (e, loglog_slope(&xs, &ys))
        })
        .collect();
    let get = |e| slopes.iter().find(|(x, _)| *x == e).map(|(_, s)| *s).unwrap_or(f64::NAN);
    Ok(DecayReport {
        config: cfg.clone(),
        dr_margin: cfg.dr_slope_max - get(Estimator::Dr),
        or_margin: get(Estimator::Or) - cfg.or_slope_min,
        rows,
        slopes,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub mixture: MixtureSpec,
    /// Template; shape and seed are set per cell.
    pub shift: ShiftConfig,
    pub shapes: Vec<Shape>,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub train: TrainConfig,
    /// Folds for the OR/IPW/DR estimates (0 = evaluate the fitted model
    /// directly).
    pub cross_fit: usize,
    pub n_test: usize,
    /// Record per-method training time (makes records irreproducible).
    pub timing: bool,
}

/// Train every method on every (shape, seed) cell and record the TV of its
/// own `P(Y|A=0)` estimate and of the OR/IPW/DR estimates built from its
/// nuisances, plus uniform-test accuracy. Records come back ordered by
/// (shape, seed, method, estimator).
pub fn shape_sweep(cfg: &SweepConfig) -> Result<Vec<ExperimentRecord>> {
    if cfg.cross_fit == 1 {
        return Err(Error::InvalidFolds(1));
    }
    let hash = config_hash(cfg);
    let cells: Vec<(Shape, u64)> = cfg
        .shapes
        .iter()
        .flat_map(|&s| cfg.seeds.iter().map(move |&seed| (s, seed)))
        .collect();
    let results = par::map(cells, |(shape, seed)| -> Result<Vec<ExperimentRecord>> {
        let shift = ShiftConfig {
            shape,
            seed,
            ..cfg.shift.clone()
        };
        let data = generate(&cfg.mixture, &shift)?;
        let truth = data
            .truth
            .as_ref()
            .map(|t| t.unlabeled_prior.clone())
            .ok_or_else(|| domain("generated data lacks truth"))?;
        let mut tcfg = cfg.train.clone();
        tcfg.seed = seed;
        let mut out = Vec::new();
        for &method in &cfg.methods {
            let start = Instant::now();
            let model = if method == Method::DrRisk {
                let (first, prior) = stage_one(&data, &TwoStageConfig::from_stage2(tcfg.clone()))?;
                train_dr_risk(&data, &tcfg, &first.mechanism, &prior)?
            } else {
                train(method, &data, &tcfg, None)?
            };
            let elapsed = start.elapsed().as_secs_f64();
            let accuracy = uniform_test_eval(&model, &cfg.mixture, cfg.n_test, seed)?;
            let base = ExperimentRecord {
                config_hash: hash.clone(),
                method,
                estimator: None,
                shape,
                gamma_l: shift.gamma_l,
                gamma_u: shift.gamma_u,
                seed,
                tv: tv_distance(&model.unlabeled_prior, &truth)?,
                accuracy: Some(accuracy),
                wall_clock_s: cfg.timing.then_some(elapsed),
            };
            out.push(base.clone());
            let estimates = estimates_for(method, &model, &data, &tcfg, cfg.cross_fit, seed)?;
            for rep in estimates {
                out.push(ExperimentRecord {
                    estimator: Some(rep.estimator),
                    tv: tv_distance(&rep.p_unlabeled, &truth)?,
                    ..base.clone()
                });
            }
        }
        Ok(out)
    });
    let mut records = Vec::new();
    for r in results {
        records.extend(r?);
    }
    Ok(records)
}

fn estimates_for(
    method: Method,
    model: &crate::train::TrainedModel,
    data: &Dataset,
    cfg: &TrainConfig,
    k: usize,
    seed: u64,
) -> Result<Vec<EstimateReport>> {
    if k == 0 {
        let pair = NuisancePair {
            posterior: model,
            mechanism: model.mechanism.clone(),
        };
        return Estimator::ALL
            .iter()
            .map(|&e| estimate(e, NuisanceSource::Fixed(&pair), data, 0, seed))
            .collect();
    }
    let fitter = |train_set: &Dataset| -> Result<FittedNuisance> {
        let m = train(method, train_set, cfg, None)?;
        let mechanism = m.mechanism.clone();
        Ok(FittedNuisance {
            posterior: Box::new(m),
            mechanism,
        })
    };
    Estimator::ALL
        .iter()
        .map(|&e| estimate(e, NuisanceSource::Refit(&fitter), data, k, seed))
        .collect()
}

/// `TV(P(Y|A=1), P(Y|A=0))`: what guessing the labeled prior costs.
pub fn baseline_tv(labeled: &ClassDistribution, unlabeled: &ClassDistribution) -> Result<f64> {
    tv_distance(labeled, unlabeled)
}
