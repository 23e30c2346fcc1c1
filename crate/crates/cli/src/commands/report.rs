use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use lsdr_core::estimate::Estimator;
use lsdr_core::report::Summary;
use lsdr_core::synth::Shape;
use lsdr_core::train::Method;
use serde::Serialize;

use super::montecarlo::{aggregate_csv, print_coverage, summary_rows, CoverageBody, SweepBody};
use crate::io::{peek_format, read_document, write_csv, write_document, InputRef, MC_FORMAT, REPORT_FORMAT, SWEEP_FORMAT};
use crate::Outcome;

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// A sweep or coverage JSON output.
    #[arg(long)]
    #[serde(skip)]
    pub input: PathBuf,
    /// Write the tables and aggregate rows as JSON.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Write the aggregated rows as CSV.
    #[arg(long)]
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

fn cell(s: &Summary, scale: f64, digits: usize) -> String {
    format!("{:.*} ± {:.*}", digits, s.mean * scale, digits, s.sd * scale)
}

fn shapes_of(body: &SweepBody) -> Vec<Shape> {
    body.aggregate.iter().map(|r| r.shape).collect::<BTreeSet<_>>().into_iter().collect()
}

fn header(shapes: &[Shape]) -> String {
    let mut s = String::from("| method |");
    shapes.iter().for_each(|sh| write!(s, " {sh} |").unwrap());
    s.push_str("\n|---|");
    shapes.iter().for_each(|_| s.push_str("---|"));
    s.push('\n');
    s
}

/// TV to the true `P(Y|A=0)`, mean ± sd over seeds: one row per method
/// estimate plus the labeled-prior baseline.
pub fn tv_table(body: &SweepBody) -> String {
    let shapes = shapes_of(body);
    let mut out = header(&shapes);
    out.push_str("| baseline (labeled prior) |");
    for sh in &shapes {
        match body.baseline.iter().find(|b| b.shape == *sh) {
            Some(b) => write!(out, " {:.4} |", b.tv).unwrap(),
            None => out.push_str(" - |"),
        }
    }
    out.push('\n');
    let keys: BTreeSet<(Method, Option<Estimator>)> = body.aggregate.iter().map(|r| (r.method, r.estimator)).collect();
    for (m, e) in keys {
        let label = match e {
            None => m.to_string(),
            Some(e) => format!("{m} + {}", e.name().to_uppercase()),
        };
        write!(out, "| {label} |").unwrap();
        for sh in &shapes {
            match body.aggregate.iter().find(|r| r.method == m && r.estimator == e && r.shape == *sh) {
                Some(r) => write!(out, " {} |", cell(&r.tv, 1.0, 4)).unwrap(),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Balanced-test top-1 accuracy in percent, mean ± sd over seeds.
pub fn accuracy_table(body: &SweepBody) -> String {
    let shapes = shapes_of(body);
    let mut out = header(&shapes);
    let methods: BTreeSet<Method> = body.aggregate.iter().map(|r| r.method).collect();
    for m in methods {
        write!(out, "| {m} |").unwrap();
        for sh in &shapes {
            let acc = body
                .aggregate
                .iter()
                .find(|r| r.method == m && r.estimator.is_none() && r.shape == *sh)
                .and_then(|r| r.accuracy);
            match acc {
                Some(a) => write!(out, " {} |", cell(&a, 100.0, 2)).unwrap(),
                None => out.push_str(" - |"),
            }
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct SweepReport<'a> {
    kind: &'static str,
    tv_table: String,
    accuracy_table: String,
    aggregate: &'a [lsdr_core::report::AggregateRow],
}

pub fn run(a: &ReportArgs) -> Result<Outcome> {
    let format = peek_format(&a.input)?;
    let config = serde_json::json!({ "input": InputRef::of(&a.input)? });
    match format.as_str() {
        SWEEP_FORMAT => {
            let doc = read_document::<SweepBody>(&a.input, SWEEP_FORMAT)?;
            let body = doc.body;
            let tv = tv_table(&body);
            let acc = accuracy_table(&body);
            println!("TV to the true P(Y|A=0)\n\n{tv}\nBalanced-test accuracy (%)\n\n{acc}");
            if let Some(p) = &a.csv {
                write_csv(p, &aggregate_csv(&body.aggregate))?;
            }
            if let Some(p) = &a.out {
                let rep = SweepReport {
                    kind: "sweep",
                    tv_table: tv,
                    accuracy_table: acc,
                    aggregate: &body.aggregate,
                };
                write_document(p, REPORT_FORMAT, &config, &rep)?;
            }
        }
        MC_FORMAT => {
            let doc = read_document::<serde_json::Value>(&a.input, MC_FORMAT)?;
            if doc.body.get("study").and_then(|s| s.as_str()) != Some("coverage") {
                bail!("report understands coverage studies and sweeps; decay output is already a table");
            }
            let body: CoverageBody = serde_json::from_value(doc.body)?;
            print_coverage(&body.runs, &body.band_verdicts);
            let rows = summary_rows(&body.runs);
            if let Some(p) = &a.csv {
                write_csv(p, &rows)?;
            }
            if let Some(p) = &a.out {
                #[derive(Serialize)]
                struct CovReport<'a> {
                    kind: &'static str,
                    failures: usize,
                    band_verdicts: &'a [(Estimator, lsdr_core::mc::BandVerdict)],
                    summary: &'a [super::montecarlo::SummaryRow],
                }
                let rep = CovReport {
                    kind: "coverage",
                    failures: body.failures,
                    band_verdicts: &body.band_verdicts,
                    summary: &rows,
                };
                write_document(p, REPORT_FORMAT, &config, &rep)?;
            }
        }
        other => bail!("cannot report on format '{other}'"),
    }
    Ok(Outcome::Complete)
}
