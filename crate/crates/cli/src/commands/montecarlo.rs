use std::path::PathBuf;

use anyhow::{ensure, Result};
use clap::{Args, Subcommand};
use lsdr_core::estimate::Estimator;
use lsdr_core::mc::{
    band_verdict, bias_decay_study, run_replications, shape_sweep, BandVerdict, Corruption,
    DecayConfig, McReport, McScenario, Regime, SweepConfig,
};
use lsdr_core::report::{aggregate, AggregateRow, ExperimentRecord};
use lsdr_core::synth::{longtail_counts, unlabeled_counts, Shape};
use lsdr_core::train::Method;
use lsdr_core::{tv_distance, ClassDistribution};
use serde::{Deserialize, Serialize};

use crate::args::{McPopulationArgs, MixtureArgs, ShiftArgs, TrainArgs};
use crate::io::{companion, write_csv, write_document, MC_FORMAT, SWEEP_FORMAT};
use crate::Outcome;

#[derive(Subcommand)]
pub enum McCommand {
    /// Replicated coverage / bias study at one or more N.
    Coverage(CoverageArgs),
    /// Bias decay with nuisance errors shrinking like N^exponent.
    Decay(DecayArgs),
    /// Train every method on every shape and seed; TV and accuracy records.
    Sweep(SweepArgs),
}

pub fn run(c: &McCommand) -> Result<Outcome> {
    match c {
        McCommand::Coverage(a) => coverage(a),
        McCommand::Decay(a) => decay(a),
        McCommand::Sweep(a) => sweep(a),
    }
}

fn outcome(failures: usize, allow_partial: bool) -> Outcome {
    if failures == 0 || allow_partial {
        Outcome::Complete
    } else {
        Outcome::Partial(failures)
    }
}

#[derive(Args, Debug, Serialize)]
pub struct CoverageArgs {
    #[command(flatten)]
    pub population: McPopulationArgs,
    /// oracle-both, oracle-posterior-only, oracle-propensity-only,
    /// learned-both or corrupted.
    #[arg(long, default_value = "oracle-both")]
    pub regime: Regime,
    /// Rows per replication; several values (comma separated) run an N grid.
    #[arg(long, value_delimiter = ',', default_values_t = [5000])]
    pub n: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Corrupted posterior = oracle^power, renormalized (1/T for temperature T).
    #[arg(long, default_value_t = 1.0 / 3.0)]
    pub posterior_power: f64,
    /// Corrupted propensity = oracle × factor, clipped to 1.
    #[arg(long, default_value_t = 2.0)]
    pub propensity_factor: f64,
    /// Cross-fitting folds for learned nuisances.
    #[arg(long, default_value_t = 0)]
    pub cross_fit: usize,
    /// Trainer for learned nuisances.
    #[arg(long, default_value = "em")]
    pub learner: Method,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long, default_value_t = 1e-3)]
    pub clip: f64,
    /// Accept failed replications (reported in `failures`) with exit 0.
    #[arg(long)]
    pub allow_partial: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize, Deserialize)]
pub struct CoverageBody {
    pub study: String,
    pub failures: usize,
    /// Per interval-bearing estimator, where coverage left its band across N.
    pub band_verdicts: Vec<(Estimator, BandVerdict)>,
    pub runs: Vec<McReport>,
}

#[derive(Serialize)]
struct RecordRow {
    n: usize,
    replication: usize,
    estimator: Estimator,
    class: usize,
    raw: f64,
    truth: f64,
    influence_variance: Option<f64>,
    ci_half_width: Option<f64>,
    clip_events: usize,
}

#[derive(Serialize)]
pub struct SummaryRow {
    pub n: usize,
    pub estimator: Estimator,
    pub class: usize,
    pub truth: f64,
    pub bias: f64,
    pub bias_se: f64,
    pub rmse: f64,
    pub scaled_error_variance: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub mean_influence_variance: Option<f64>,
    pub variance_ratio: Option<f64>,
    pub coverage95: Option<f64>,
    pub coverage99: Option<f64>,
    pub band_lo: f64,
    pub band_hi: f64,
    pub completed: usize,
}

pub fn summary_rows(runs: &[McReport]) -> Vec<SummaryRow> {
    let mut rows = Vec::new();
    for rep in runs {
        for s in &rep.summaries {
            for c in 0..rep.truth.len() {
                let at = |v: &Option<Vec<f64>>| v.as_ref().map(|v| v[c]);
                rows.push(SummaryRow {
                    n: rep.scenario.n,
                    estimator: s.estimator,
                    class: c,
                    truth: rep.truth[c],
                    bias: s.bias[c],
                    bias_se: s.bias_se[c],
                    rmse: s.rmse[c],
                    scaled_error_variance: s.scaled_error_variance[c],
                    skewness: s.skewness[c],
                    excess_kurtosis: s.excess_kurtosis[c],
                    mean_influence_variance: at(&s.mean_influence_variance),
                    variance_ratio: at(&s.variance_ratio),
                    coverage95: at(&s.coverage95),
                    coverage99: at(&s.coverage99),
                    band_lo: rep.coverage_band.0,
                    band_hi: rep.coverage_band.1,
                    completed: rep.completed,
                });
            }
        }
    }
    rows
}

fn coverage(a: &CoverageArgs) -> Result<Outcome> {
    let (mixture, population) = a.population.build()?;
    let mut ns = a.n.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut runs = Vec::new();
    for &n in &ns {
        let mut s = McScenario::new(mixture.clone(), population.clone(), a.regime, n, a.reps, a.seed);
        s.corruption = Corruption {
            posterior_power: a.posterior_power,
            propensity_factor: a.propensity_factor,
        };
        s.cross_fit = a.cross_fit;
        s.learner = a.learner;
        s.train = a.train.resolve(a.seed);
        s.clip_floor = a.clip;
        runs.push(run_replications(&s)?);
    }
    let band_verdicts = [Estimator::Ipw, Estimator::Dr]
        .into_iter()
        .map(|e| Ok((e, band_verdict(&runs, e)?)))
        .collect::<Result<Vec<_>>>()?;
    let failures = runs.iter().map(|r| r.failures.len()).sum();

    let mut records = Vec::new();
    for rep in &runs {
        for r in &rep.records {
            for c in 0..rep.truth.len() {
                records.push(RecordRow {
                    n: rep.scenario.n,
                    replication: r.replication,
                    estimator: r.estimator,
                    class: c,
                    raw: r.raw[c],
                    truth: rep.truth[c],
                    influence_variance: r.influence_variance.as_ref().map(|v| v[c]),
                    ci_half_width: r.ci_half_width.as_ref().map(|v| v[c]),
                    clip_events: r.clip_events,
                });
            }
        }
    }
    let summary = summary_rows(&runs);
    write_csv(&companion(&a.out, "records"), &records)?;
    write_csv(&companion(&a.out, "summary"), &summary)?;
    let body = CoverageBody {
        study: "coverage".into(),
        failures,
        band_verdicts,
        runs,
    };
    write_document(&a.out, MC_FORMAT, a, &body)?;
    print_coverage(&body.runs, &body.band_verdicts);
    Ok(outcome(failures, a.allow_partial))
}

pub fn print_coverage(runs: &[McReport], verdicts: &[(Estimator, BandVerdict)]) {
    for rep in runs {
        println!(
            "N = {}, {} of {} replications, regime {}, 95% band [{:.3}, {:.3}]",
            rep.scenario.n,
            rep.completed,
            rep.scenario.replications,
            rep.scenario.regime,
            rep.coverage_band.0,
            rep.coverage_band.1
        );
        for s in &rep.summaries {
            for c in 0..rep.truth.len() {
                let cov = s.coverage95.as_ref().map_or("   -  ".into(), |v| format!("{:.3}", v[c]));
                let ratio = s.variance_ratio.as_ref().map_or("   -  ".into(), |v| format!("{:.3}", v[c]));
                println!(
                    "  {:>3} class {c}: bias {:+.5} (se {:.5})  cov95 {cov}  var ratio {ratio}",
                    s.estimator, s.bias[c], s.bias_se[c]
                );
            }
        }
    }
    for (e, v) in verdicts {
        println!("{e} band verdict: {}", serde_json::to_value(v).unwrap_or_default().as_str().unwrap_or(""));
    }
}

#[derive(Args, Debug, Serialize)]
pub struct DecayArgs {
    #[command(flatten)]
    pub population: McPopulationArgs,
    #[arg(long, value_delimiter = ',', default_values_t = [1000, 4000, 16000])]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// δ = magnitude · N^exponent.
    #[arg(long, default_value_t = 0.5)]
    pub magnitude: f64,
    #[arg(long, default_value_t = -0.25, allow_hyphen_values = true)]
    pub exponent: f64,
    #[arg(long, default_value_t = -0.45, allow_hyphen_values = true)]
    pub dr_slope_max: f64,
    #[arg(long, default_value_t = -0.35, allow_hyphen_values = true)]
    pub or_slope_min: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub clip: f64,
    #[arg(long)]
    pub allow_partial: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Serialize)]
struct DecayCsvRow {
    n: usize,
    delta: f64,
    estimator: Estimator,
    class: usize,
    bias: f64,
    bias_se: f64,
}

#[derive(Serialize)]
struct SlopeRow {
    estimator: Estimator,
    slope: f64,
}

fn decay(a: &DecayArgs) -> Result<Outcome> {
    let (mixture, population) = a.population.build()?;
    let mut cfg = DecayConfig::new(mixture, population, a.seed);
    cfg.ns = a.ns.clone();
    cfg.replications = a.reps;
    cfg.magnitude = a.magnitude;
    cfg.exponent = a.exponent;
    cfg.dr_slope_max = a.dr_slope_max;
    cfg.or_slope_min = a.or_slope_min;
    cfg.clip_floor = a.clip;
    let rep = bias_decay_study(&cfg)?;
    let rows: Vec<DecayCsvRow> = rep
        .rows
        .iter()
        .flat_map(|r| {
            (0..r.bias.len()).map(move |c| DecayCsvRow {
                n: r.n,
                delta: r.delta,
                estimator: r.estimator,
                class: c,
                bias: r.bias[c],
                bias_se: r.bias_se[c],
            })
        })
        .collect();
    let slopes: Vec<SlopeRow> = rep.slopes.iter().map(|&(estimator, slope)| SlopeRow { estimator, slope }).collect();
    write_csv(&companion(&a.out, "records"), &rows)?;
    write_csv(&companion(&a.out, "summary"), &slopes)?;
    let failures = rep.failures.len();
    #[derive(Serialize)]
    struct Body<'a> {
        study: &'static str,
        failures: usize,
        separated: bool,
        report: &'a lsdr_core::mc::DecayReport,
    }
    let body = Body {
        study: "decay",
        failures,
        separated: rep.separated(),
        report: &rep,
    };
    write_document(&a.out, MC_FORMAT, a, &body)?;
    for r in &rep.rows {
        println!("N = {:>6}  δ = {:.4}  {:>3}  |bias|₁ = {:.3e}", r.n, r.delta, r.estimator, r.bias_l1);
    }
    for s in &slopes {
        println!("{} log-log slope {:+.3}", s.estimator, s.slope);
    }
    println!(
        "separation {} (DR ≤ {}, OR ≥ {})",
        if rep.separated() { "holds" } else { "fails" },
        a.dr_slope_max,
        a.or_slope_min
    );
    Ok(outcome(failures, a.allow_partial))
}

fn parse_shapes(s: &str) -> Result<Vec<Shape>, String> {
    if s == "all" {
        return Ok(Shape::ALL.to_vec());
    }
    s.split(',').map(|p| p.trim().parse::<Shape>().map_err(|e| e.to_string())).collect()
}

fn parse_methods(s: &str) -> Result<Vec<Method>, String> {
    if s == "all" {
        return Ok(ALL_METHODS.to_vec());
    }
    s.split(',').map(|p| p.trim().parse::<Method>().map_err(|e| e.to_string())).collect()
}

const ALL_METHODS: [Method; 7] = [
    Method::Supervised,
    Method::Mle,
    Method::Em,
    Method::Simpro,
    Method::TwoStage,
    Method::BatchUpdate,
    Method::DrRisk,
];

#[derive(Args, Debug, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub mixture: MixtureArgs,
    #[command(flatten)]
    pub shift: ShiftArgs,
    /// `all` or a comma-separated list.
    // Fully qualified so clap treats the parsed list as one value.
    #[arg(long, default_value = "all", value_parser = parse_shapes)]
    pub shapes: std::vec::Vec<Shape>,
    /// `all` or a comma-separated list.
    #[arg(long, default_value = "all", value_parser = parse_methods)]
    pub methods: std::vec::Vec<Method>,
    /// Number of seeds per shape: seed, seed+1, ...
    #[arg(long, default_value_t = 3)]
    pub seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Folds for the OR/IPW/DR estimates (0 = use the fitted model).
    #[arg(long, default_value_t = 0)]
    pub cross_fit: usize,
    #[arg(long, default_value_t = 5000)]
    pub n_test: usize,
    /// Record training wall-clock (records then differ between runs).
    #[arg(long)]
    pub timing: bool,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Baseline {
    pub shape: Shape,
    /// TV between the labeled and unlabeled class distributions.
    pub tv: f64,
}

#[derive(Serialize, Deserialize)]
pub struct SweepBody {
    pub baseline: Vec<Baseline>,
    pub aggregate: Vec<AggregateRow>,
    pub records: Vec<ExperimentRecord>,
}

/// One CSV line per record; the method's own estimate is labelled `own`.
#[derive(Serialize)]
pub struct SweepCsvRow {
    config_hash: String,
    method: Method,
    estimator: String,
    shape: Shape,
    gamma_l: f64,
    gamma_u: f64,
    seed: u64,
    tv: f64,
    accuracy: Option<f64>,
    wall_clock_s: Option<f64>,
}

#[derive(Serialize)]
pub struct AggregateCsvRow {
    method: Method,
    estimator: String,
    shape: Shape,
    gamma_l: f64,
    gamma_u: f64,
    count: usize,
    tv_mean: f64,
    tv_sd: f64,
    accuracy_mean: Option<f64>,
    accuracy_sd: Option<f64>,
}

fn estimator_label(e: Option<Estimator>) -> String {
    e.map_or_else(|| "own".to_string(), |e| e.to_string())
}

pub fn aggregate_csv(rows: &[AggregateRow]) -> Vec<AggregateCsvRow> {
    rows.iter()
        .map(|r| AggregateCsvRow {
            method: r.method,
            estimator: estimator_label(r.estimator),
            shape: r.shape,
            gamma_l: r.gamma_l,
            gamma_u: r.gamma_u,
            count: r.tv.count,
            tv_mean: r.tv.mean,
            tv_sd: r.tv.sd,
            accuracy_mean: r.accuracy.map(|s| s.mean),
            accuracy_sd: r.accuracy.map(|s| s.sd),
        })
        .collect()
}

fn sweep(a: &SweepArgs) -> Result<Outcome> {
    ensure!(a.seeds >= 1, "--seeds must be at least 1");
    let mixture = a.mixture.build()?;
    let cfg = SweepConfig {
        mixture,
        shift: a.shift.config(Shape::Consistent, a.seed),
        shapes: a.shapes.clone(),
        methods: a.methods.clone(),
        seeds: (a.seed..a.seed + a.seeds).collect(),
        train: a.train.resolve(a.seed),
        cross_fit: a.cross_fit,
        n_test: a.n_test,
        timing: a.timing,
    };
    let records = shape_sweep(&cfg)?;
    let baseline = a
        .shapes
        .iter()
        .map(|&shape| {
            let shift = a.shift.config(shape, 0);
            let l = ClassDistribution::from_counts(&longtail_counts(shift.n1, shift.gamma_l, a.mixture.classes)?)?;
            let u = ClassDistribution::from_counts(&unlabeled_counts(&shift, a.mixture.classes)?)?;
            Ok(Baseline { shape, tv: tv_distance(&l, &u)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let agg = aggregate(&records);
    let csv_rows: Vec<SweepCsvRow> = records
        .iter()
        .map(|r| SweepCsvRow {
            config_hash: r.config_hash.clone(),
            method: r.method,
            estimator: estimator_label(r.estimator),
            shape: r.shape,
            gamma_l: r.gamma_l,
            gamma_u: r.gamma_u,
            seed: r.seed,
            tv: r.tv,
            accuracy: r.accuracy,
            wall_clock_s: r.wall_clock_s,
        })
        .collect();
    write_csv(&companion(&a.out, "records"), &csv_rows)?;
    write_csv(&companion(&a.out, "aggregate"), &aggregate_csv(&agg))?;
    println!("{} records over {} shapes × {} seeds", records.len(), a.shapes.len(), a.seeds);
    let body = SweepBody {
        baseline,
        aggregate: agg,
        records,
    };
    write_document(&a.out, SWEEP_FORMAT, &SweepConfigOut { command: a, resolved: &cfg }, &body)?;
    println!("{}", super::report::tv_table(&body));
    Ok(Outcome::Complete)
}

#[derive(Serialize)]
struct SweepConfigOut<'a> {
    command: &'a SweepArgs,
    resolved: &'a SweepConfig,
}
