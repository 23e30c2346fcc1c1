//! Softmax classifiers with hand-written gradients, the losses used by the
//! trainers, and first-order optimizers.

mod loss;
mod optim;

pub use loss::{
    batch_loss_and_grad, logit_adjusted_loss_and_grad, posthoc_adjust, pseudo_label,
    soft_target_ce, weighted_ce_loss_and_grad, Sample,
};
pub use optim::{Optimizer, OptimizerKind, TrainConfig, MechanismUpdate};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::distribution::ClassDistribution;
use crate::error::{check_dim, domain, Result};
use crate::rng;
use crate::synth::MixtureSpec;

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    logits.iter().map(|l| l - lse).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Architecture {
    Linear,
    /// One tanh hidden layer.
    Mlp1,
}

impl std::str::FromStr for Architecture {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "mlp1" | "mlp" => Ok(Self::Mlp1),
            other => Err(domain(format!("unknown architecture '{other}'"))),
        }
    }
}

/// Flat weight vector plus the shape needed to interpret it.
///
/// Linear layout: `W[C×d]` row-major, then `b[C]`.
/// Mlp1 layout: `W1[H×d]`, `b1[H]`, `W2[C×H]`, `b2[C]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub hidden: usize,
    pub num_classes: usize,
    pub weights: Vec<f64>,
}

impl ClassifierParams {
    pub fn num_weights(architecture: Architecture, d: usize, h: usize, c: usize) -> usize {
        match architecture {
            Architecture::Linear => c * d + c,
            Architecture::Mlp1 => h * d + h + c * h + c,
        }
    }

    pub fn zeros(architecture: Architecture, d: usize, h: usize, c: usize) -> Self {
        let hidden = if architecture == Architecture::Linear { 0 } else { h };
        Self {
            architecture,
            input_dim: d,
            hidden,
            num_classes: c,
            weights: vec![0.0; Self::num_weights(architecture, d, hidden, c)],
        }
    }

    pub fn from_weights(
        architecture: Architecture,
        d: usize,
        h: usize,
        c: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let mut p = Self::zeros(architecture, d, h, c);
        check_dim(p.weights.len(), weights.len())?;
        p.weights = weights;
        Ok(p)
    }

    /// Gaussian weights with scale `1/√fan_in`, zero biases.
    pub fn init(architecture: Architecture, d: usize, h: usize, c: usize, seed: u64) -> Self {
        let mut p = Self::zeros(architecture, d, h, c);
        let mut rng = rng::stream(seed, "init");
        let mut fill = |w: &mut [f64], fan_in: usize| {
            let s = 1.0 / (fan_in as f64).sqrt();
            for v in w {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = s * z;
            }
        };
        match architecture {
            Architecture::Linear => fill(&mut p.weights[..c * d], d),
            Architecture::Mlp1 => {
                let h = p.hidden;
                fill(&mut p.weights[..h * d], d);
                let w2 = h * d + h;
                fill(&mut p.weights[w2..w2 + c * h], h);
            }
        }
        p
    }

    /// The Bayes-optimal linear classifier for an isotropic mixture:
    /// `W_c = μ_c/σ²`, `b_c = −‖μ_c‖²/(2σ²) + log prior_c`.
    pub fn bayes_linear(mix: &MixtureSpec, prior: &ClassDistribution) -> Result<Self> {
        check_dim(mix.num_classes, prior.num_classes())?;
        let (c, d) = (mix.num_classes, mix.feature_dim);
        let mut p = Self::zeros(Architecture::Linear, d, 0, c);
        let s2 = mix.class_cov_scale;
        for (k, mu) in mix.class_means.iter().enumerate() {
            for j in 0..d {
                p.weights[k * d + j] = mu[j] / s2;
            }
            let norm2: f64 = mu.iter().map(|m| m * m).sum();
            p.weights[c * d + k] = -norm2 / (2.0 * s2) + prior[k].max(1e-300).ln();
        }
        Ok(p)
    }

    fn hidden_activations(&self, x: &[f64]) -> Vec<f64> {
        let (d, h) = (self.input_dim, self.hidden);
        let w = &self.weights;
        (0..h)
            .map(|j| {
                let row = &w[j * d..(j + 1) * d];
                let z: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[h * d + j];
                z.tanh()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim, x.len())?;
        Ok(self.forward_unchecked(x))
    }

    pub(crate) fn forward_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let (d, c) = (self.input_dim, self.num_classes);
        let w = &self.weights;
        match self.architecture {
            Architecture::Linear => (0..c)
                .map(|k| {
                    let row = &w[k * d..(k + 1) * d];
                    row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[c * d + k]
                })
                .collect(),
            Architecture::Mlp1 => {
                let h = self.hidden;
                let act = self.hidden_activations(x);
                let off = h * d + h;
                (0..c)
                    .map(|k| {
                        let row = &w[off + k * h..off + (k + 1) * h];
                        row.iter().zip(&act).map(|(a, b)| a * b).sum::<f64>()
                            + w[off + c * h + k]
                    })
                    .collect()
            }
        }
    }

    /// Softmax of the logits.
    pub fn predict_proba(&self, x: &[f64]) -> Vec<f64> {
        softmax(&self.forward_unchecked(x))
    }

    /// Accumulate `scale · ∂(dlogitsᵀ logits)/∂weights` into `grad`.
    pub fn backward(&self, x: &[f64], dlogits: &[f64], scale: f64, grad: &mut [f64]) {
        let (d, c) = (self.input_dim, self.num_classes);
        match self.architecture {
            Architecture::Linear => {
                for k in 0..c {
                    let g = scale * dlogits[k];
                    if g == 0.0 {
                        continue;
                    }
                    let row = &mut grad[k * d..(k + 1) * d];
                    for (r, xv) in row.iter_mut().zip(x) {
                        *r += g * xv;
                    }
                    grad[c * d + k] += g;
                }
            }
            Architecture::Mlp1 => {
                let h = self.hidden;
                let w = &self.weights;
                let act = self.hidden_activations(x);
                let off = h * d + h;
                let mut dact = vec![0.0; h];
                for k in 0..c {
                    let g = scale * dlogits[k];
                    if g == 0.0 {
                        continue;
                    }
                    for j in 0..h {
                        grad[off + k * h + j] += g * act[j];
                        dact[j] += g * w[off + k * h + j];
                    }
                    grad[off + c * h + k] += g;
                }
                for j in 0..h {
                    let dz = dact[j] * (1.0 - act[j] * act[j]);
                    if dz == 0.0 {
                        continue;
                    }
                    for (r, xv) in grad[j * d..(j + 1) * d].iter_mut().zip(x) {
                        *r += dz * xv;
                    }
                    grad[h * d + j] += dz;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn zero_weights_give_uniform_softmax() {
        let p = ClassifierParams::zeros(Architecture::Mlp1, 3, 5, 4);
        let logits = p.forward(&[1.0, -2.0, 0.5]).unwrap();
        assert!(logits.iter().all(|&l| l == 0.0));
        assert!(p.predict_proba(&[1.0, -2.0, 0.5]).iter().all(|&q| (q - 0.25).abs() < 1e-15));
        assert!(p.forward(&[1.0]).is_err());
    }

    #[test]
    fn duplicate_rows_tie_logits() {
        let mut p = ClassifierParams::init(Architecture::Linear, 2, 0, 3, 1);
        p.weights[2] = p.weights[0];
        p.weights[3] = p.weights[1];
        p.weights[7] = p.weights[6];
        let l = p.forward(&[0.3, -0.7]).unwrap();
        assert_eq!(l[0], l[1]);
    }

    #[test]
    fn forward_matches_hand_matrix_product() {
        // W = [[1, 2], [-1, 0.5], [0, -3]], b = [0.1, 0.2, 0.3], x = [2, -1]
        let w = vec![1.0, 2.0, -1.0, 0.5, 0.0, -3.0, 0.1, 0.2, 0.3];
        let p = ClassifierParams::from_weights(Architecture::Linear, 2, 0, 3, w).unwrap();
        let l = p.forward(&[2.0, -1.0]).unwrap();
        assert_abs_diff_eq!(l[0], 0.1, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], -2.3, epsilon = 1e-12);
        assert_abs_diff_eq!(l[2], 3.3, epsilon = 1e-12);

        // 1 hidden unit: W1 = [1, 1], b1 = 0, W2 = [[2], [-1]], b2 = [0, 1]
        let w = vec![1.0, 1.0, 0.0, 2.0, -1.0, 0.0, 1.0];
        let p = ClassifierParams::from_weights(Architecture::Mlp1, 2, 1, 2, w).unwrap();
        let l = p.forward(&[0.25, 0.25]).unwrap();
        let t = 0.5f64.tanh();
        assert_abs_diff_eq!(l[0], 2.0 * t, epsilon = 1e-12);
        assert_abs_diff_eq!(l[1], 1.0 - t, epsilon = 1e-12);
    }

    #[test]
    fn softmax_is_stable_and_normalized() {
        let p = softmax(&[1000.0, 0.0, -1000.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let p = softmax(&[-3.0, 0.2, 7.5, 1.0]);
        assert!(p.iter().all(|&q| q > 0.0));
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bayes_linear_matches_bayes_posterior() {
        let mix = MixtureSpec::spread(3, 2, 2.0, 0.7, 4).unwrap();
        let prior = ClassDistribution::new(vec![0.5, 0.3, 0.2]).unwrap();
        let p = ClassifierParams::bayes_linear(&mix, &prior).unwrap();
        let x = [0.4, -1.1];
        let a = p.predict_proba(&x);
        let b = crate::synth::bayes_posterior(&mix, &prior, &x).unwrap();
        for k in 0..3 {
            assert_abs_diff_eq!(a[k], b[k], epsilon = 1e-12);
        }
    }
}
