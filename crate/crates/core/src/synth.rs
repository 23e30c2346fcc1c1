//! Synthetic label-shift data: a shared isotropic Gaussian mixture for
//! `P(X|Y)`, long-tailed labeled and unlabeled class counts, and
//! feature-space noise augmentations.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation, Truth};
use crate::distribution::ClassDistribution;
use crate::error::{check_dim, domain, Error, Result};
use crate::rng::{self, Rng};

/// Class-conditional Gaussians `N(μ_c, σ² I)` shared by labeled and
/// unlabeled data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_means: Vec<Vec<f64>>,
    pub class_cov_scale: f64,
}

impl MixtureSpec {
    pub fn new(class_means: Vec<Vec<f64>>, class_cov_scale: f64) -> Result<Self> {
        if class_means.len() < 2 {
            return Err(domain("mixture needs at least two classes"));
        }
        if !(class_cov_scale > 0.0 && class_cov_scale.is_finite()) {
            return Err(domain(format!("σ² = {class_cov_scale} must be positive")));
        }
        let d = class_means[0].len();
        if d == 0 {
            return Err(domain("feature dimension must be positive"));
        }
        for m in &class_means {
            check_dim(d, m.len())?;
        }
        for i in 0..class_means.len() {
            for j in (i + 1)..class_means.len() {
                if class_means[i] == class_means[j] {
                    return Err(domain(format!("class means {i} and {j} coincide")));
                }
            }
        }
        Ok(Self {
            num_classes: class_means.len(),
            feature_dim: d,
            class_means,
            class_cov_scale,
        })
    }

    /// Means at `radius` along seeded random directions.
    pub fn spread(
        num_classes: usize,
        feature_dim: usize,
        radius: f64,
        class_cov_scale: f64,
        seed: u64,
    ) -> Result<Self> {
        if feature_dim == 0 {
            return Err(domain("feature dimension must be positive"));
        }
        let mut rng = rng::stream(seed, "mixture");
        let means = (0..num_classes)
            .map(|_| {
                let v: Vec<f64> = (0..feature_dim)
                    .map(|_| rng.sample::<f64, _>(StandardNormal))
                    .collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| radius * x / norm).collect()
            })
            .collect();
        Self::new(means, class_cov_scale)
    }

    pub fn sigma(&self) -> f64 {
        self.class_cov_scale.sqrt()
    }

    /// Per-class log density up to the shared normalizing constant.
    pub fn log_kernel(&self, x: &[f64]) -> Vec<f64> {
        self.class_means
            .iter()
            .map(|mu| {
                let d2: f64 = mu.iter().zip(x).map(|(m, v)| (v - m).powi(2)).sum();
                -d2 / (2.0 * self.class_cov_scale)
            })
            .collect()
    }

    pub fn sample(&self, class: usize, rng: &mut Rng) -> Vec<f64> {
        let s = self.sigma();
        self.class_means[class]
            .iter()
            .map(|m| m + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

/// How the unlabeled class counts are arranged relative to the labeled
/// (descending) counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    Consistent,
    Uniform,
    Reversed,
    Middle,
    #[serde(alias = "head-tail")]
    Headtail,
}

impl Shape {
    pub const ALL: [Shape; 5] = [
        Shape::Consistent,
        Shape::Uniform,
        Shape::Reversed,
        Shape::Middle,
        Shape::Headtail,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Shape::Consistent => "consistent",
            Shape::Uniform => "uniform",
            Shape::Reversed => "reversed",
            Shape::Middle => "middle",
            Shape::Headtail => "headtail",
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Shape {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "consistent" => Ok(Shape::Consistent),
            "uniform" => Ok(Shape::Uniform),
            "reversed" | "reverse" => Ok(Shape::Reversed),
            "middle" => Ok(Shape::Middle),
            "headtail" | "head-tail" | "head_tail" => Ok(Shape::Headtail),
            other => Err(domain(format!("unknown shape '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftConfig {
    pub gamma_l: f64,
    /// Values below 1 are read as `1/γ_u`; the arrangement comes from
    /// `shape`. Ignored for the uniform shape.
    pub gamma_u: f64,
    pub shape: Shape,
    pub n1: usize,
    pub m1: usize,
    pub seed: u64,
}

/// `n_c = round(head · γ^{-(c-1)/(C-1)})`, floored at 1.
pub fn longtail_counts(head: usize, gamma: f64, num_classes: usize) -> Result<Vec<usize>> {
    if num_classes < 2 {
        return Err(domain("long-tailed counts need at least two classes"));
    }
    if head == 0 {
        return Err(domain("head count must be at least 1"));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(domain(format!("imbalance ratio {gamma} must be positive")));
    }
    let denom = (num_classes - 1) as f64;
    Ok((0..num_classes)
        .map(|c| {
            let n = head as f64 * gamma.powf(-(c as f64) / denom);
            (n.round() as usize).max(1)
        })
        .collect())
}

/// Class positions ordered by distance from the center index, nearest
/// first, ties to the lower index.
fn center_out_order(num_classes: usize) -> Vec<usize> {
    let center = (num_classes as f64 - 1.0) / 2.0;
    let mut idx: Vec<usize> = (0..num_classes).collect();
    idx.sort_by(|&a, &b| {
        let da = (a as f64 - center).abs();
        let db = (b as f64 - center).abs();
        da.total_cmp(&db).then(a.cmp(&b))
    });
    idx
}

/// Positions alternating between the two ends, starting at the first class.
fn ends_in_order(num_classes: usize) -> Vec<usize> {
    let (mut lo, mut hi) = (0usize, num_classes - 1);
    let mut out = Vec::with_capacity(num_classes);
    let mut take_lo = true;
    while out.len() < num_classes {
        if take_lo {
            out.push(lo);
            lo += 1;
        } else {
            out.push(hi);
            hi = hi.saturating_sub(1);
        }
        take_lo = !take_lo;
    }
    out
}

/// Rearrange descending counts into the given shape. The k-th largest
/// count goes to the k-th position of the shape's placement order.
pub fn apply_shape(counts: &[usize], shape: Shape) -> Result<Vec<usize>> {
    if counts.windows(2).any(|w| w[0] < w[1]) {
        return Err(domain("apply_shape expects counts in descending order"));
    }
    let c = counts.len();
    let place = |order: Vec<usize>| {
        let mut out = vec![0; c];
        for (k, &pos) in order.iter().enumerate() {
            out[pos] = counts[k];
        }
        out
    };
    Ok(match shape {
        Shape::Consistent | Shape::Uniform => counts.to_vec(),
        Shape::Reversed => counts.iter().rev().copied().collect(),
        Shape::Middle => place(center_out_order(c)),
        Shape::Headtail => place(ends_in_order(c)),
    })
}

/// Unlabeled class counts for a shift configuration.
pub fn unlabeled_counts(cfg: &ShiftConfig, num_classes: usize) -> Result<Vec<usize>> {
    if cfg.shape == Shape::Uniform {
        return Ok(vec![cfg.m1.max(1); num_classes]);
    }
    if !(cfg.gamma_u > 0.0) {
        return Err(domain(format!("γ_u = {} must be positive", cfg.gamma_u)));
    }
    let g = if cfg.gamma_u < 1.0 { 1.0 / cfg.gamma_u } else { cfg.gamma_u };
    apply_shape(&longtail_counts(cfg.m1, g, num_classes)?, cfg.shape)
}

fn truth_from_counts(mix: &MixtureSpec, labeled: Vec<usize>, unlabeled: Vec<usize>) -> Result<Truth> {
    let n_l: usize = labeled.iter().sum();
    let n_u: usize = unlabeled.iter().sum();
    let total: Vec<usize> = labeled.iter().zip(&unlabeled).map(|(a, b)| a + b).collect();
    Ok(Truth {
        labeled_prior: ClassDistribution::from_counts(&labeled)?,
        unlabeled_prior: ClassDistribution::from_counts(&unlabeled)?,
        combined_prior: ClassDistribution::from_counts(&total)?,
        propensity: labeled
            .iter()
            .zip(&total)
            .map(|(&l, &t)| if t > 0 { l as f64 / t as f64 } else { 1.0 })
            .collect(),
        p_labeled: n_l as f64 / (n_l + n_u) as f64,
        labeled_counts: labeled,
        unlabeled_counts: unlabeled,
        mixture: mix.clone(),
    })
}

/// Fixed-count long-tailed dataset: labeled rows first (class order), then
/// unlabeled rows. Features for both sets come from the same mixture.
pub fn generate(mix: &MixtureSpec, cfg: &ShiftConfig) -> Result<Dataset> {
    if cfg.n1 == 0 || cfg.m1 == 0 {
        return Err(domain("head counts n1 and m1 must be at least 1"));
    }
    if cfg.gamma_l < 1.0 {
        return Err(domain(format!("γ_l = {} must be at least 1", cfg.gamma_l)));
    }
    let c = mix.num_classes;
    let labeled = longtail_counts(cfg.n1, cfg.gamma_l, c)?;
    let unlabeled = unlabeled_counts(cfg, c)?;
    let mut rng = rng::stream(cfg.seed, "synth");
    let mut obs = Vec::new();
    let mut hidden = Vec::new();
    for (y, &n) in labeled.iter().enumerate() {
        for _ in 0..n {
            obs.push(Observation::labeled(mix.sample(y, &mut rng), y));
            hidden.push(None);
        }
    }
    for (y, &n) in unlabeled.iter().enumerate() {
        for _ in 0..n {
            obs.push(Observation::unlabeled(mix.sample(y, &mut rng)));
            hidden.push(Some(y));
        }
    }
    let truth = truth_from_counts(mix, labeled, unlabeled)?;
    Dataset::new(obs, c, mix.feature_dim, Some(hidden), Some(truth))
}

/// Population-level label shift: `P(Y)` and `P(A=1|Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub prior: ClassDistribution,
    pub propensity: Vec<f64>,
}

impl Population {
    /// The population whose proportions match a fixed-count configuration.
    pub fn from_truth(truth: &Truth) -> Self {
        Self {
            prior: truth.combined_prior.clone(),
            propensity: truth.propensity.clone(),
        }
    }

    pub fn p_labeled(&self) -> f64 {
        self.prior
            .probs()
            .iter()
            .zip(&self.propensity)
            .map(|(p, a)| p * a)
            .sum()
    }

    pub fn labeled_prior(&self) -> Result<ClassDistribution> {
        let w: Vec<f64> = self
            .prior
            .probs()
            .iter()
            .zip(&self.propensity)
            .map(|(p, a)| p * a)
            .collect();
        ClassDistribution::from_weights(&w)
    }

    pub fn unlabeled_prior(&self) -> Result<ClassDistribution> {
        let w: Vec<f64> = self
            .prior
            .probs()
            .iter()
            .zip(&self.propensity)
            .map(|(p, a)| p * (1.0 - a))
            .collect();
        ClassDistribution::from_weights(&w)
    }
}

/// The population whose class proportions and labeling rates match the
/// counts of a fixed-count configuration.
pub fn population_for(cfg: &ShiftConfig, num_classes: usize) -> Result<Population> {
    let labeled = longtail_counts(cfg.n1, cfg.gamma_l, num_classes)?;
    let unlabeled = unlabeled_counts(cfg, num_classes)?;
    let total: Vec<usize> = labeled.iter().zip(&unlabeled).map(|(a, b)| a + b).collect();
    Ok(Population {
        prior: ClassDistribution::from_counts(&total)?,
        propensity: labeled
            .iter()
            .zip(&total)
            .map(|(&l, &t)| l as f64 / t as f64)
            .collect(),
    })
}

/// I.i.d. draws `Y ~ P(Y)`, `A ~ Bernoulli(P(A=1|Y))`, `X ~ N(μ_Y, σ²I)`.
/// The sampling model behind the asymptotic statements about the
/// estimators, used by the Monte Carlo harness.
pub fn sample_iid(mix: &MixtureSpec, pop: &Population, n: usize, rng: &mut Rng) -> Result<Dataset> {
    let c = mix.num_classes;
    check_dim(c, pop.prior.num_classes())?;
    check_dim(c, pop.propensity.len())?;
    let cdf: Vec<f64> = pop
        .prior
        .probs()
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut obs = Vec::with_capacity(n);
    let mut hidden = Vec::with_capacity(n);
    let mut labeled = vec![0; c];
    let mut unlabeled = vec![0; c];
    for _ in 0..n {
        let u: f64 = rng.random();
        let y = cdf.iter().position(|&v| u < v).unwrap_or(c - 1);
        let a = rng.random::<f64>() < pop.propensity[y];
        let x = mix.sample(y, rng);
        if a {
            obs.push(Observation::labeled(x, y));
            hidden.push(None);
            labeled[y] += 1;
        } else {
            obs.push(Observation::unlabeled(x));
            hidden.push(Some(y));
            unlabeled[y] += 1;
        }
    }
    let truth = Truth {
        labeled_prior: pop.labeled_prior()?,
        unlabeled_prior: pop.unlabeled_prior()?,
        combined_prior: pop.prior.clone(),
        propensity: pop.propensity.clone(),
        p_labeled: pop.p_labeled(),
        labeled_counts: labeled,
        unlabeled_counts: unlabeled,
        mixture: mix.clone(),
    };
    Dataset::new(obs, c, mix.feature_dim, Some(hidden), Some(truth))
}

/// Exact `P(Y | X=x)` under the mixture with class prior `prior`.
pub fn bayes_posterior(mix: &MixtureSpec, prior: &ClassDistribution, x: &[f64]) -> Result<ClassDistribution> {
    check_dim(mix.num_classes, prior.num_classes())?;
    check_dim(mix.feature_dim, x.len())?;
    let logits: Vec<f64> = mix
        .log_kernel(x)
        .into_iter()
        .zip(prior.probs())
        .map(|(k, &p)| if p > 0.0 { k + p.ln() } else { f64::NEG_INFINITY })
        .collect();
    ClassDistribution::new(crate::model::softmax(&logits))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strength {
    Weak,
    Strong,
}

/// Additive Gaussian feature noise standing in for image augmentations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Augmenter {
    pub sigma_weak: f64,
    pub sigma_strong: f64,
}

impl Augmenter {
    /// Weak noise at 0.1σ, strong at 0.5σ of the mixture spread.
    pub fn for_mixture_sigma(sigma: f64) -> Self {
        Self {
            sigma_weak: 0.1 * sigma,
            sigma_strong: 0.5 * sigma,
        }
    }

    pub fn identity() -> Self {
        Self {
            sigma_weak: 0.0,
            sigma_strong: 0.0,
        }
    }

    pub fn augment(&self, x: &[f64], strength: Strength, rng: &mut Rng) -> Vec<f64> {
        let s = match strength {
            Strength::Weak => self.sigma_weak,
            Strength::Strong => self.sigma_strong,
        };
        if s == 0.0 {
            return x.to_vec();
        }
        x.iter()
            .map(|v| v + s * rng.sample::<f64, _>(StandardNormal))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy_mix() -> MixtureSpec {
        MixtureSpec::spread(4, 3, 4.0, 1.0, 11).unwrap()
    }

    #[test]
    fn longtail_examples() {
        let counts = longtail_counts(500, 100.0, 10).unwrap();
        assert_eq!(counts[9], 5);
        // 500 · 100^(-4/9) = 500 · 10^(-8/9) evaluated through a separate route.
        let oracle = (500.0 * 10f64.powf(-8.0 / 9.0)).round() as usize;
        assert_eq!(oracle, 65);
        assert_eq!(counts[4], oracle);
        assert_eq!(longtail_counts(500, 1.0, 10).unwrap(), vec![500; 10]);
        assert!(longtail_counts(500, 100.0, 1).is_err());
        assert!(longtail_counts(1, 1e6, 5).unwrap().iter().all(|&n| n >= 1));
    }

    #[test]
    fn shape_examples() {
        let c = [4, 3, 2, 1];
        assert_eq!(apply_shape(&c, Shape::Consistent).unwrap(), vec![4, 3, 2, 1]);
        assert_eq!(apply_shape(&c, Shape::Reversed).unwrap(), vec![1, 2, 3, 4]);
        // center-first placement for C=4 visits positions 2,3,1,4 (1-based)
        assert_eq!(center_out_order(4), vec![1, 2, 0, 3]);
        assert_eq!(apply_shape(&c, Shape::Middle).unwrap(), vec![2, 4, 3, 1]);
        // ends-first placement visits positions 1,4,2,3
        assert_eq!(apply_shape(&c, Shape::Headtail).unwrap(), vec![4, 2, 1, 3]);
        assert!(apply_shape(&[1, 2], Shape::Middle).is_err());
        assert!("sideways".parse::<Shape>().is_err());
        assert_eq!("head-tail".parse::<Shape>().unwrap(), Shape::Headtail);
    }

    #[test]
    fn generate_examples() {
        let mix = MixtureSpec::spread(2, 2, 3.0, 1.0, 1).unwrap();
        let cfg = ShiftConfig {
            gamma_l: 4.0,
            gamma_u: 4.0,
            shape: Shape::Consistent,
            n1: 100,
            m1: 400,
            seed: 3,
        };
        let d = generate(&mix, &cfg).unwrap();
        let t = d.truth.as_ref().unwrap();
        assert_eq!(t.labeled_counts, vec![100, 25]);
        assert_abs_diff_eq!(t.labeled_prior[0], 0.8, epsilon = 1e-15);
        assert_eq!(t.labeled_prior, t.unlabeled_prior);
        assert_eq!(t.p_labeled, d.p_labeled());
        assert_eq!(d, generate(&mix, &cfg).unwrap());

        let uni = ShiftConfig {
            gamma_u: 1.0,
            shape: Shape::Uniform,
            ..cfg
        };
        let d = generate(&mix, &uni).unwrap();
        assert_eq!(d.truth.unwrap().unlabeled_prior, ClassDistribution::uniform(2));
    }

    #[test]
    fn labeled_and_unlabeled_features_share_class_conditionals() {
        let mix = toy_mix();
        let cfg = ShiftConfig {
            gamma_l: 2.0,
            gamma_u: 2.0,
            shape: Shape::Reversed,
            n1: 800,
            m1: 800,
            seed: 5,
        };
        let d = generate(&mix, &cfg).unwrap();
        let hidden = d.hidden_labels.as_ref().unwrap();
        for c in 0..mix.num_classes {
            let mut sums = [vec![0.0; 3], vec![0.0; 3]];
            let mut counts = [0usize; 2];
            for (o, h) in d.observations.iter().zip(hidden) {
                let (set, y) = match (o.label(), h) {
                    (Some(y), _) => (0, y),
                    (None, Some(y)) => (1, *y),
                    _ => unreachable!(),
                };
                if y == c {
                    counts[set] += 1;
                    for k in 0..3 {
                        sums[set][k] += o.x[k];
                    }
                }
            }
            let min = counts[0].min(counts[1]) as f64;
            for k in 0..3 {
                let diff = sums[0][k] / counts[0] as f64 - sums[1][k] / counts[1] as f64;
                assert!(diff.abs() <= 4.0 * mix.sigma() / min.sqrt(), "class {c} coord {k}: {diff}");
            }
        }
    }

    #[test]
    fn bayes_posterior_examples() {
        let mix = MixtureSpec::new(vec![vec![-1.0], vec![1.0]], 1.0).unwrap();
        let uni = ClassDistribution::uniform(2);
        let p = bayes_posterior(&mix, &uni, &[0.5]).unwrap();
        // direct ratio of the two Gaussian densities at 0.5
        let d0 = (-(1.5f64).powi(2) / 2.0).exp();
        let d1 = (-(0.5f64).powi(2) / 2.0).exp();
        assert_abs_diff_eq!(p[1], d1 / (d0 + d1), epsilon = 1e-14);
        assert_abs_diff_eq!(p[1], 0.731_058_578_630_004_9, epsilon = 1e-12);
        let eq = bayes_posterior(&mix, &uni, &[0.0]).unwrap();
        assert_abs_diff_eq!(eq[0], 0.5, epsilon = 1e-15);

        let far = MixtureSpec::new(vec![vec![0.0, 0.0], vec![50.0, 0.0], vec![0.0, 50.0]], 1.0).unwrap();
        let p = bayes_posterior(&far, &ClassDistribution::uniform(3), &[0.0, 0.0]).unwrap();
        assert!(p[0] > 1.0 - 1e-12);
    }

    #[test]
    fn augmentation_noise_statistics() {
        let aug = Augmenter::for_mixture_sigma(2.0);
        let mut rng = rng::stream(9, "aug");
        let x = [0.5, -1.0];
        assert_eq!(Augmenter::identity().augment(&x, Strength::Weak, &mut rng), x.to_vec());
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in 0..n {
            let z = aug.augment(&x, Strength::Strong, &mut rng)[0] - x[0];
            s += z;
            s2 += z * z;
        }
        let var_target = aug.sigma_strong.powi(2);
        let mean = s / n as f64;
        let var = s2 / n as f64 - mean * mean;
        assert!(mean.abs() < 3.0 * aug.sigma_strong / (n as f64).sqrt());
        // standard error of a Gaussian sample variance: σ² √(2/n)
        assert!((var - var_target).abs() < 3.0 * var_target * (2.0 / n as f64).sqrt());
    }

    #[test]
    fn iid_sampling_tracks_population() {
        let mix = toy_mix();
        let pop = Population {
            prior: ClassDistribution::new(vec![0.4, 0.3, 0.2, 0.1]).unwrap(),
            propensity: vec![0.5, 0.3, 0.2, 0.1],
        };
        let mut rng = rng::stream(1, "iid");
        let d = sample_iid(&mix, &pop, 20_000, &mut rng).unwrap();
        assert!((d.p_labeled() - pop.p_labeled()).abs() < 0.02);
    }

    #[test]
    fn population_for_matches_generated_truth() {
        let mix = toy_mix();
        for shape in Shape::ALL {
            let cfg = ShiftConfig {
                gamma_l: 20.0,
                gamma_u: 5.0,
                shape,
                n1: 200,
                m1: 300,
                seed: 1,
            };
            let from_counts = population_for(&cfg, 4).unwrap();
            let from_data = Population::from_truth(generate(&mix, &cfg).unwrap().truth.as_ref().unwrap());
            for (a, b) in from_counts.prior.probs().iter().zip(from_data.prior.probs()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
            for (a, b) in from_counts.propensity.iter().zip(&from_data.propensity) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn shapes_permute_counts(head in 1usize..2000, gamma in 1.0f64..200.0, c in 2usize..12) {
            let counts = longtail_counts(head, gamma, c).unwrap();
            for shape in Shape::ALL {
                let mut a = apply_shape(&counts, shape).unwrap();
                let mut b = counts.clone();
                a.sort_unstable();
                b.sort_unstable();
                prop_assert_eq!(a, b);
            }
        }
    }
}
