use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use lsdr_core::synth::{generate, Shape};
use serde::Serialize;

use super::fmt_dist;
use crate::args::{MixtureArgs, ShiftArgs};
use crate::io::write_dataset;
use crate::Outcome;

#[derive(Args, Debug, Serialize)]
pub struct SynthArgs {
    #[command(flatten)]
    pub mixture: MixtureArgs,
    #[command(flatten)]
    pub shift: ShiftArgs,
    /// consistent, uniform, reversed, middle or headtail.
    #[arg(long, default_value = "consistent")]
    pub shape: Shape,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    #[serde(skip)]
    pub out: PathBuf,
}

pub fn run(a: &SynthArgs) -> Result<Outcome> {
    let mix = a.mixture.build()?;
    let shift = a.shift.config(a.shape, a.seed);
    let data = generate(&mix, &shift)?;
    write_dataset(&a.out, &data, a)?;
    let truth = data.truth.as_ref().expect("generated data carries truth");
    println!(
        "wrote {} rows ({} labeled, {} unlabeled) to {}",
        data.len(),
        data.num_labeled(),
        data.num_unlabeled(),
        a.out.display()
    );
    println!("P(Y|A=1) = {}", fmt_dist(&truth.labeled_prior));
    println!("P(Y|A=0) = {}", fmt_dist(&truth.unlabeled_prior));
    Ok(Outcome::Complete)
}
