//! Argument groups shared by several subcommands.

use anyhow::{ensure, Result};
use clap::Args;
use lsdr_core::model::{Architecture, OptimizerKind, TrainConfig};
use lsdr_core::synth::{population_for, MixtureSpec, Population, Shape, ShiftConfig};
use lsdr_core::ClassDistribution;
use serde::Serialize;

/// The Gaussian mixture behind `P(X|Y)`: class means at `radius` along
/// seeded random directions.
#[derive(Args, Debug, Clone, Serialize)]
pub struct MixtureArgs {
    #[arg(long, default_value_t = 10)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    #[arg(long, default_value_t = 3.5)]
    pub radius: f64,
    /// Per-class isotropic variance σ².
    #[arg(long, default_value_t = 1.0)]
    pub cov_scale: f64,
    #[arg(long, default_value_t = 7)]
    pub mixture_seed: u64,
}

impl MixtureArgs {
    pub fn build(&self) -> Result<MixtureSpec> {
        Ok(MixtureSpec::spread(self.classes, self.dim, self.radius, self.cov_scale, self.mixture_seed)?)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct ShiftArgs {
    /// Head count of the labeled set.
    #[arg(long, default_value_t = 500)]
    pub n1: usize,
    /// Head count of the unlabeled set.
    #[arg(long, default_value_t = 4000)]
    pub m1: usize,
    #[arg(long, default_value_t = 100.0)]
    pub gamma_l: f64,
    #[arg(long, default_value_t = 100.0)]
    pub gamma_u: f64,
}

impl ShiftArgs {
    pub fn config(&self, shape: Shape, seed: u64) -> ShiftConfig {
        ShiftConfig {
            gamma_l: self.gamma_l,
            gamma_u: self.gamma_u,
            shape,
            n1: self.n1,
            m1: self.m1,
            seed,
        }
    }
}

/// Population for the i.i.d. Monte Carlo studies. A small three-class
/// problem by default; `--prior` and `--propensity` must match `--classes`.
#[derive(Args, Debug, Clone, Serialize)]
pub struct McPopulationArgs {
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 2.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1.0)]
    pub cov_scale: f64,
    #[arg(long, default_value_t = 5)]
    pub mixture_seed: u64,
    /// `P(Y)`, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 0.3, 0.2])]
    pub prior: Vec<f64>,
    /// `P(A=1|Y)`, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [0.6, 0.3, 0.1])]
    pub propensity: Vec<f64>,
    /// Take prior and propensity from a long-tailed count configuration
    /// instead (uses --n1/--m1/--gamma-l/--gamma-u/--shape).
    #[arg(long)]
    pub from_shift: bool,
    #[command(flatten)]
    pub shift: ShiftArgs,
    #[arg(long, default_value = "consistent")]
    pub shape: Shape,
}

impl McPopulationArgs {
    pub fn build(&self) -> Result<(MixtureSpec, Population)> {
        let mix = MixtureSpec::spread(self.classes, self.dim, self.radius, self.cov_scale, self.mixture_seed)?;
        let pop = if self.from_shift {
            population_for(&self.shift.config(self.shape, 0), self.classes)?
        } else {
            ensure!(
                self.prior.len() == self.classes && self.propensity.len() == self.classes,
                "--prior and --propensity need {} entries each",
                self.classes
            );
            ensure!(
                self.propensity.iter().all(|&p| p > 0.0 && p <= 1.0),
                "propensities must lie in (0, 1]"
            );
            Population {
                prior: ClassDistribution::new(self.prior.clone())?,
                propensity: self.propensity.clone(),
            }
        };
        Ok((mix, pop))
    }
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    match s {
        "adam" => Ok(OptimizerKind::Adam),
        "sgd" => Ok(OptimizerKind::Sgd),
        other => Err(format!("unknown optimizer '{other}' (adam or sgd)")),
    }
}

/// Training hyperparameters. Anything left unset keeps the library default.
#[derive(Args, Debug, Clone, Default, Serialize)]
pub struct TrainArgs {
    /// linear or mlp1 [default: linear]
    #[arg(long)]
    pub arch: Option<Architecture>,
    /// Hidden width of mlp1 [default: 16]
    #[arg(long)]
    pub hidden: Option<usize>,
    /// [default: 30]
    #[arg(long)]
    pub epochs: Option<usize>,
    /// [default: 0.01]
    #[arg(long)]
    pub lr: Option<f64>,
    /// 0 = full batch [default: 128]
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// adam or sgd [default: adam]
    #[arg(long, value_parser = parse_optimizer)]
    pub optimizer: Option<OptimizerKind>,
    /// [default: 0]
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// Supervised warm-up epochs, run before the main epochs [default: 30]
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Pseudo-label confidence threshold τ [default: 0.95]
    #[arg(long)]
    pub tau: Option<f64>,
    /// EMA coefficient of the running P(Y) [default: 0.99]
    #[arg(long)]
    pub prior_momentum: Option<f64>,
    /// EMA coefficient of the class masses [default: 0.99]
    #[arg(long)]
    pub mechanism_momentum: Option<f64>,
    /// EMA coefficient of the batch-update DR estimate [default: 0.99]
    #[arg(long)]
    pub dr_momentum: Option<f64>,
    /// Propensity clip floor used during training [default: 0.001]
    #[arg(long)]
    pub propensity_floor: Option<f64>,
}

impl TrainArgs {
    pub fn resolve(&self, seed: u64) -> TrainConfig {
        let mut c = TrainConfig {
            seed,
            ..TrainConfig::default()
        };
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = self.$field { c.$target = v; })*
            };
        }
        set!(
            arch => architecture,
            hidden => hidden,
            epochs => epochs,
            lr => learning_rate,
            batch_size => batch_size,
            optimizer => optimizer,
            weight_decay => weight_decay,
            warmup => warmup_epochs,
            tau => confidence_threshold,
            prior_momentum => prior_momentum,
            mechanism_momentum => mechanism_momentum,
            dr_momentum => dr_momentum,
            propensity_floor => clip_floor
        );
        c
    }
}
