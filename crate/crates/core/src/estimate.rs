//! Estimators of the combined class distribution `P(Y)` from a labeled +
//! unlabeled sample, and through it of `P(Y|A=0)`:
//!
//! * outcome regression (OR): the mean model posterior over every row;
//! * inverse probability weighting (IPW): labeled indicators reweighted by
//!   `1/P(A=1|Y)`;
//! * doubly robust (DR): `P(c|x) + 1(a=1)/P(A=1|y) · (1(y=c) − P(c|x))`,
//!   unbiased when either nuisance is right.
//!
//! Every estimator is a sample mean of per-row contributions, so each report
//! also carries the plug-in variance of those contributions and a normal
//! confidence half-width computed on the unprojected estimate.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use std::fmt;
use std::str::FromStr;

use crate::data::Dataset;
use crate::distribution::{project_to_simplex, recover_unlabeled_raw, ClassDistribution, MissingnessMechanism};
use crate::error::{check_dim, domain, Error, Result};
use crate::par;
use crate::rng;
use crate::synth::{bayes_posterior, MixtureSpec};

/// A model of `P(Y | X=x)` for the combined population.
pub trait Posterior: Sync {
    fn posterior(&self, x: &[f64]) -> Vec<f64>;
}

impl<F> Posterior for F
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn posterior(&self, x: &[f64]) -> Vec<f64> {
        self(x)
    }
}

/// Bayes posterior of a known mixture under a known class prior.
#[derive(Debug, Clone, PartialEq)]
pub struct OraclePosterior {
    pub mixture: MixtureSpec,
    pub prior: ClassDistribution,
}

impl Posterior for OraclePosterior {
    fn posterior(&self, x: &[f64]) -> Vec<f64> {
        bayes_posterior(&self.mixture, &self.prior, x)
            .map(ClassDistribution::into_vec)
            .unwrap_or_else(|_| vec![f64::NAN; self.prior.num_classes()])
    }
}

/// `p^power / Σ p^power`: power 1/T is temperature T; power > 1 sharpens.
pub struct PoweredPosterior<'a> {
    pub inner: &'a dyn Posterior,
    pub power: f64,
}

impl Posterior for PoweredPosterior<'_> {
    fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let mut p: Vec<f64> = self
            .inner
            .posterior(x)
            .into_iter()
            .map(|v| v.powf(self.power))
            .collect();
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UniformPosterior(pub usize);

impl Posterior for UniformPosterior {
    fn posterior(&self, _x: &[f64]) -> Vec<f64> {
        vec![1.0 / self.0 as f64; self.0]
    }
}

/// The two nuisance components: `P(Y|X)` and `P(A=1|Y)`.
pub struct NuisancePair<'a> {
    pub posterior: &'a dyn Posterior,
    pub mechanism: MissingnessMechanism,
}

/// Nuisances fit on a training split, owned.
pub struct FittedNuisance {
    pub posterior: Box<dyn Posterior + Send>,
    pub mechanism: MissingnessMechanism,
}

/// Re-fits nuisances on a subset of the data (for cross-fitting).
pub trait NuisanceFitter: Sync {
    fn fit(&self, train: &Dataset) -> Result<FittedNuisance>;
}

impl<F> NuisanceFitter for F
where
    F: Fn(&Dataset) -> Result<FittedNuisance> + Sync,
{
    fn fit(&self, train: &Dataset) -> Result<FittedNuisance> {
        self(train)
    }
}

pub enum NuisanceSource<'a> {
    /// Supplied from outside; only valid without cross-fitting.
    Fixed(&'a NuisancePair<'a>),
    /// Fit on the full data (K = 0) or on each fold's complement (K ≥ 2).
    Refit(&'a dyn NuisanceFitter),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Or,
    Ipw,
    Dr,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Or, Estimator::Ipw, Estimator::Dr];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Or => "or",
            Estimator::Ipw => "ipw",
            Estimator::Dr => "dr",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "or" => Ok(Estimator::Or),
            "ipw" => Ok(Estimator::Ipw),
            "dr" => Ok(Estimator::Dr),
            other => Err(domain(format!("unknown estimator '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: Estimator,
    /// `P(Y)` projected onto the simplex.
    pub p_combined: ClassDistribution,
    /// `P(Y|A=0)` recovered from `raw`, projected onto the simplex.
    pub p_unlabeled: ClassDistribution,
    /// Unprojected estimate of `P(Y)`.
    pub raw: Vec<f64>,
    /// Plug-in variance of the per-row contributions (no d.o.f. correction).
    /// Absent for OR, whose report carries no influence-based interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub influence_variance: Option<Vec<f64>>,
    /// 95% normal half-widths `z · √(V_c / N)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ci_half_width: Option<Vec<f64>>,
    pub n: usize,
    pub cross_fit_folds: usize,
    /// Labeled rows whose propensity sat below the clip floor.
    pub clip_events: usize,
}

/// Per-row contribution of one estimator.
fn contribution(
    estimator: Estimator,
    posterior: &dyn Posterior,
    mechanism: &MissingnessMechanism,
    x: &[f64],
    label: Option<usize>,
    c: usize,
) -> Vec<f64> {
    let ipw_part = |out: &mut Vec<f64>, p: Option<&[f64]>| {
        if let Some(y) = label {
            let w = 1.0 / mechanism.propensity(y);
            for (k, v) in out.iter_mut().enumerate() {
                let ind = if k == y { 1.0 } else { 0.0 };
                *v += w * (ind - p.map_or(0.0, |p| p[k]));
            }
        }
    };
    match estimator {
        Estimator::Or => posterior.posterior(x),
        Estimator::Ipw => {
            let mut out = vec![0.0; c];
            ipw_part(&mut out, None);
            out
        }
        Estimator::Dr => {
            let p = posterior.posterior(x);
            let mut out = p.clone();
            ipw_part(&mut out, Some(&p));
            out
        }
    }
}

fn check_posterior(p: &[f64], c: usize, row: usize) -> Result<()> {
    check_dim(c, p.len())?;
    let total: f64 = p.iter().sum();
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (total - 1.0).abs() > 1e-6 {
        return Err(Error::DegeneratePosterior { row });
    }
    Ok(())
}

const CHUNK: usize = 512;

/// Per-row contributions for `rows` of `dataset`, in row order.
fn contributions(
    estimator: Estimator,
    nuisance: &NuisancePair<'_>,
    dataset: &Dataset,
    rows: &[usize],
) -> Result<Vec<Vec<f64>>> {
    let c = dataset.num_classes;
    check_dim(c, nuisance.mechanism.num_classes())?;
    let chunks: Vec<&[usize]> = rows.chunks(CHUNK).collect();
    let parts = par::map(chunks, |chunk| -> Result<Vec<Vec<f64>>> {
        chunk
            .iter()
            .map(|&i| {
                let o = &dataset.observations[i];
                if estimator != Estimator::Ipw {
                    check_posterior(&nuisance.posterior.posterior(&o.x), c, i)?;
                }
                Ok(contribution(estimator, nuisance.posterior, &nuisance.mechanism, &o.x, o.label(), c))
            })
            .collect()
    });
    let mut out = Vec::with_capacity(rows.len());
    for part in parts {
        out.extend(part?);
    }
    Ok(out)
}

fn clip_events(mechanism: &MissingnessMechanism, dataset: &Dataset, rows: &[usize]) -> usize {
    rows.iter()
        .filter_map(|&i| dataset.observations[i].label())
        .filter(|&y| mechanism.is_clipped(y))
        .count()
}

/// 95% two-sided standard normal quantile.
fn z95() -> f64 {
    normal_quantile(0.975)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("standard normal").inverse_cdf(p)
}

fn mean_and_variance(values: &[Vec<f64>], c: usize) -> (Vec<f64>, Vec<f64>) {
    let n = values.len() as f64;
    let mut mean = vec![0.0; c];
    for v in values {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; c];
    for v in values {
        for k in 0..c {
            let d = v[k] - mean[k];
            var[k] += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s /= n);
    (mean, var)
}

fn build_report(
    estimator: Estimator,
    values: &[Vec<f64>],
    dataset: &Dataset,
    folds: usize,
    clip: usize,
) -> Result<EstimateReport> {
    let c = dataset.num_classes;
    let n = values.len();
    if n == 0 {
        return Err(domain("cannot estimate from an empty dataset"));
    }
    let (raw, var) = mean_and_variance(values, c);
    if raw.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{estimator} estimate is not finite")));
    }
    let z = z95();
    let (var, half) = if estimator == Estimator::Or {
        (None, None)
    } else {
        let half = var.iter().map(|v| z * (v / n as f64).sqrt()).collect();
        (Some(var), Some(half))
    };
    Ok(EstimateReport {
        estimator,
        p_combined: project_to_simplex(&raw)?,
        p_unlabeled: unlabeled_of(&raw, dataset)?,
        raw,
        influence_variance: var,
        ci_half_width: half,
        n,
        cross_fit_folds: folds,
        clip_events: clip,
    })
}

/// `P(Y|A=0)` from a combined estimate. Without unlabeled rows the
/// unlabeled distribution is unidentified; the combined estimate stands in.
fn unlabeled_of(raw: &[f64], dataset: &Dataset) -> Result<ClassDistribution> {
    if dataset.num_unlabeled() == 0 {
        return project_to_simplex(raw);
    }
    recover_unlabeled_raw(raw, &dataset.labeled_prior(), dataset.p_labeled())
}

fn single_fit(estimator: Estimator, nuisance: &NuisancePair<'_>, dataset: &Dataset) -> Result<EstimateReport> {
    let rows: Vec<usize> = (0..dataset.len()).collect();
    let values = contributions(estimator, nuisance, dataset, &rows)?;
    build_report(estimator, &values, dataset, 0, clip_events(&nuisance.mechanism, dataset, &rows))
}

/// `(1/N) Σ_i P(Y|x_i)` over every row.
pub fn or_estimate(nuisance: &NuisancePair<'_>, dataset: &Dataset) -> Result<EstimateReport> {
    single_fit(Estimator::Or, nuisance, dataset)
}

/// `(1/N) Σ_{a_i=1} 1(y_i=c) / P(A=1|y_i)`; the raw vector need not sum to 1.
pub fn ipw_estimate(nuisance: &NuisancePair<'_>, dataset: &Dataset) -> Result<EstimateReport> {
    single_fit(Estimator::Ipw, nuisance, dataset)
}

/// Doubly robust estimate with externally supplied nuisances (no sample
/// splitting). See [`estimate`] for cross-fitting.
pub fn dr_estimate(nuisance: &NuisancePair<'_>, dataset: &Dataset) -> Result<EstimateReport> {
    single_fit(Estimator::Dr, nuisance, dataset)
}

/// Deterministic fold assignment: a seeded shuffle dealt round-robin.
pub fn fold_assignment(n: usize, k: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "folds"));
    let mut folds = vec![Vec::with_capacity(n / k + 1); k];
    for (j, i) in idx.into_iter().enumerate() {
        folds[j % k].push(i);
    }
    folds.iter_mut().for_each(|f| f.sort_unstable());
    folds
}

/// General entry point. `k = 0` uses one nuisance fit for every row;
/// `k ≥ 2` refits the nuisances on each fold's complement and evaluates
/// them on the held-out fold; the pooled mean of all held-out contributions
/// is the size-weighted average of the fold estimates. `k = 1` is an error.
pub fn estimate(
    estimator: Estimator,
    source: NuisanceSource<'_>,
    dataset: &Dataset,
    k: usize,
    seed: u64,
) -> Result<EstimateReport> {
    if k == 1 {
        return Err(Error::InvalidFolds(k));
    }
    match (source, k) {
        (NuisanceSource::Fixed(pair), 0) => single_fit(estimator, pair, dataset),
        (NuisanceSource::Fixed(_), _) => Err(domain(
            "cross-fitting needs a nuisance fitter, not fixed nuisances",
        )),
        (NuisanceSource::Refit(fitter), 0) => {
            let fit = fitter.fit(dataset)?;
            let pair = NuisancePair {
                posterior: fit.posterior.as_ref(),
                mechanism: fit.mechanism,
            };
            single_fit(estimator, &pair, dataset)
        }
        (NuisanceSource::Refit(fitter), k) => {
            if k > dataset.len() {
                return Err(Error::InvalidFolds(k));
            }
            let folds = fold_assignment(dataset.len(), k, seed);
            let mut values = vec![Vec::new(); dataset.len()];
            let mut clip = 0;
            for held in &folds {
                let mut in_fold = vec![false; dataset.len()];
                held.iter().for_each(|&i| in_fold[i] = true);
                let train: Vec<usize> = (0..dataset.len()).filter(|&i| !in_fold[i]).collect();
                let fit = fitter.fit(&dataset.subset(&train)?)?;
                let pair = NuisancePair {
                    posterior: fit.posterior.as_ref(),
                    mechanism: fit.mechanism,
                };
                let vals = contributions(estimator, &pair, dataset, held)?;
                clip += clip_events(&pair.mechanism, dataset, held);
                for (&i, v) in held.iter().zip(vals) {
                    values[i] = v;
                }
            }
            build_report(estimator, &values, dataset, k, clip)
        }
    }
}

/// `φ_i(c) = P(c|x_i) + 1(a_i=1)/P(A=1|y_i) (1(y_i=c) − P(c|x_i)) − p_ref(c)`.
pub fn influence_values(
    nuisance: &NuisancePair<'_>,
    dataset: &Dataset,
    p_reference: &ClassDistribution,
) -> Result<Vec<Vec<f64>>> {
    check_dim(dataset.num_classes, p_reference.num_classes())?;
    let rows: Vec<usize> = (0..dataset.len()).collect();
    let mut values = contributions(Estimator::Dr, nuisance, dataset, &rows)?;
    for v in &mut values {
        v.iter_mut().zip(p_reference.probs()).for_each(|(a, p)| *a -= p);
    }
    Ok(values)
}

/// The influence function split along the factorization `P(X) P(A|Y) P(Y|X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfluenceParts {
    /// `P(c|x) − P(c)`.
    pub marginal: Vec<Vec<f64>>,
    /// `(1(a=1)/P(A=1|y) − 1)(1(y=c) − P(c|x))`.
    pub missingness: Vec<Vec<f64>>,
    /// `1(y=c) − P(c|x)`.
    pub conditional: Vec<Vec<f64>>,
}

/// Unlabeled rows have no observed `y`; there the last two parts cancel,
/// and they are computed from the hidden label when the dataset carries one
/// (zero otherwise).
pub fn influence_decomposition(
    nuisance: &NuisancePair<'_>,
    dataset: &Dataset,
    p_reference: &ClassDistribution,
) -> Result<InfluenceParts> {
    let c = dataset.num_classes;
    check_dim(c, p_reference.num_classes())?;
    check_dim(c, nuisance.mechanism.num_classes())?;
    let mut parts = InfluenceParts {
        marginal: Vec::with_capacity(dataset.len()),
        missingness: Vec::with_capacity(dataset.len()),
        conditional: Vec::with_capacity(dataset.len()),
    };
    for (i, o) in dataset.observations.iter().enumerate() {
        let p = nuisance.posterior.posterior(&o.x);
        check_posterior(&p, c, i)?;
        parts
            .marginal
            .push(p.iter().zip(p_reference.probs()).map(|(a, b)| a - b).collect());
        let hidden = dataset.hidden_labels.as_ref().and_then(|h| h[i]);
        let (y, weight) = match o.label() {
            Some(y) => (Some(y), 1.0 / nuisance.mechanism.propensity(y) - 1.0),
            None => (hidden, -1.0),
        };
        match y {
            Some(y) => {
                let resid: Vec<f64> = (0..c)
                    .map(|k| if k == y { 1.0 } else { 0.0 } - p[k])
                    .collect();
                parts.missingness.push(resid.iter().map(|r| weight * r).collect());
                parts.conditional.push(resid);
            }
            None => {
                parts.missingness.push(vec![0.0; c]);
                parts.conditional.push(vec![0.0; c]);
            }
        }
    }
    Ok(parts)
}

/// Per-class `raw(c) ± z · √(V_c / N)` at the given two-sided level.
pub fn confidence_interval(report: &EstimateReport, level: f64) -> Result<Vec<(f64, f64)>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(domain(format!("confidence level {level} must lie in (0, 1)")));
    }
    if report.n < 2 {
        return Err(Error::VarianceUndefined(report.n));
    }
    let var = report
        .influence_variance
        .as_ref()
        .ok_or_else(|| domain(format!("{} reports carry no influence variance", report.estimator)))?;
    let z = normal_quantile(0.5 + level / 2.0);
    Ok(report
        .raw
        .iter()
        .zip(var)
        .map(|(r, v)| {
            let h = z * (v / report.n as f64).sqrt();
            (r - h, r + h)
        })
        .collect())
}
