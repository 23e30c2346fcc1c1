//! Observed-data log-likelihood of the classifier + missingness model:
//! labeled rows contribute `log P(Y=y|x) + log P(A=1|Y=y)`, unlabeled rows
//! `log Σ_c P(Y=c|x) P(A=0|Y=c)`. Terms in `P(X)` are constant in the
//! parameters and dropped.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Observation};
use crate::distribution::MissingnessMechanism;
use crate::error::{check_dim, Result};
use crate::model::{log_softmax, log_sum_exp, ClassifierParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikelihood {
    pub labeled: f64,
    pub unlabeled: f64,
    pub total: f64,
    /// Unlabeled rows whose probability of being unlabeled is zero under
    /// the mechanism (their term is −∞).
    pub degenerate_rows: usize,
}

/// Evaluated with the clipped propensities.
pub fn marginal_loglik(
    classifier: &ClassifierParams,
    mechanism: &MissingnessMechanism,
    dataset: &Dataset,
) -> Result<LogLikelihood> {
    check_dim(dataset.num_classes, classifier.num_classes)?;
    check_dim(dataset.num_classes, mechanism.num_classes())?;
    let log_prop: Vec<f64> = mechanism.propensities().iter().map(|p| p.ln()).collect();
    let log_miss: Vec<f64> = mechanism
        .propensities()
        .iter()
        .map(|p| (1.0 - p).ln())
        .collect();
    let mut out = LogLikelihood {
        labeled: 0.0,
        unlabeled: 0.0,
        total: 0.0,
        degenerate_rows: 0,
    };
    for obs in &dataset.observations {
        let logp = log_softmax(&classifier.forward(&obs.x)?);
        match obs.label() {
            Some(y) => out.labeled += logp[y] + log_prop[y],
            None => {
                let terms: Vec<f64> = logp.iter().zip(&log_miss).map(|(a, b)| a + b).collect();
                let t = log_sum_exp(&terms);
                if t == f64::NEG_INFINITY {
                    out.degenerate_rows += 1;
                }
                out.unlabeled += t;
            }
        }
    }
    out.total = out.labeled + out.unlabeled;
    Ok(out)
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean log-likelihood over `rows` with the mechanism parameterized as
/// `P(A=1|Y=c) = sigmoid(η_c)` (no clipping), and its gradients with
/// respect to the classifier weights and `η`.
pub fn marginal_loglik_and_grad(
    classifier: &ClassifierParams,
    mechanism_logits: &[f64],
    rows: &[&Observation],
    features: Option<&[Vec<f64>]>,
) -> (f64, Vec<f64>, Vec<f64>) {
    let c = classifier.num_classes;
    let mut g_w = vec![0.0; classifier.weights.len()];
    let mut g_eta = vec![0.0; c];
    if rows.is_empty() {
        return (0.0, g_w, g_eta);
    }
    let scale = 1.0 / rows.len() as f64;
    let prop: Vec<f64> = mechanism_logits.iter().map(|&z| sigmoid(z)).collect();
    let mut total = 0.0;
    let mut dlogits = vec![0.0; c];
    for (i, obs) in rows.iter().enumerate() {
        let x: &[f64] = features.map_or(&obs.x, |f| &f[i]);
        let logits = classifier.forward_unchecked(x);
        let logp = log_softmax(&logits);
        match obs.label() {
            Some(y) => {
                total += logp[y] + prop[y].ln();
                for k in 0..c {
                    dlogits[k] = -logp[k].exp();
                }
                dlogits[y] += 1.0;
                g_eta[y] += scale * (1.0 - prop[y]);
            }
            None => {
                let joint: Vec<f64> = logp
                    .iter()
                    .zip(&prop)
                    .map(|(lp, p)| lp.exp() * (1.0 - p))
                    .collect();
                let z: f64 = joint.iter().sum();
                total += z.ln();
                for k in 0..c {
                    dlogits[k] = joint[k] / z - logp[k].exp();
                    g_eta[k] -= scale * logp[k].exp() * prop[k] * (1.0 - prop[k]) / z;
                }
            }
        }
        classifier.backward(x, &dlogits, scale, &mut g_w);
    }
    (total * scale, g_w, g_eta)
}
