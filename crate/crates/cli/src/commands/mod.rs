pub mod estimate;
pub mod eval;
pub mod montecarlo;
pub mod report;
pub mod synth;
pub mod train;

use lsdr_core::ClassDistribution;

pub(crate) fn fmt_probs(p: &[f64]) -> String {
    let parts: Vec<String> = p.iter().map(|v| format!("{v:.4}")).collect();
    format!("[{}]", parts.join(", "))
}

pub(crate) fn fmt_dist(p: &ClassDistribution) -> String {
    fmt_probs(p.probs())
}
