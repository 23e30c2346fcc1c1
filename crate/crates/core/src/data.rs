use serde::{Deserialize, Serialize};

use crate::distribution::ClassDistribution;
use crate::error::{check_dim, domain, Result};
use crate::synth::MixtureSpec;

/// One row of the combined dataset. The label is visible exactly when the
/// row belongs to the labeled set (`A = 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: Vec<f64>,
    label: Option<usize>,
}

impl Observation {
    pub fn labeled(x: Vec<f64>, y: usize) -> Self {
        Self { x, label: Some(y) }
    }

    pub fn unlabeled(x: Vec<f64>) -> Self {
        Self { x, label: None }
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn is_labeled(&self) -> bool {
        self.label.is_some()
    }
}

/// Generation metadata. Only synthetic data carries it; estimators never
/// read it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub labeled_prior: ClassDistribution,
    pub unlabeled_prior: ClassDistribution,
    pub combined_prior: ClassDistribution,
    /// `P(A=1 | Y=c)`.
    pub propensity: Vec<f64>,
    pub p_labeled: f64,
    pub labeled_counts: Vec<usize>,
    pub unlabeled_counts: Vec<usize>,
    pub mixture: MixtureSpec,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub observations: Vec<Observation>,
    pub num_classes: usize,
    pub feature_dim: usize,
    /// Ground-truth labels of unlabeled rows, aligned with `observations`
    /// (`None` on labeled rows). Evaluation only.
    pub hidden_labels: Option<Vec<Option<usize>>>,
    pub truth: Option<Truth>,
}

impl Dataset {
    pub fn new(
        observations: Vec<Observation>,
        num_classes: usize,
        feature_dim: usize,
        hidden_labels: Option<Vec<Option<usize>>>,
        truth: Option<Truth>,
    ) -> Result<Self> {
        if num_classes < 2 {
            return Err(domain("need at least two classes"));
        }
        for obs in &observations {
            check_dim(feature_dim, obs.x.len())?;
            if let Some(y) = obs.label {
                if y >= num_classes {
                    return Err(domain(format!("label {y} out of range for {num_classes} classes")));
                }
            }
        }
        if !observations.iter().any(Observation::is_labeled) {
            return Err(domain("dataset needs at least one labeled observation"));
        }
        if let Some(h) = &hidden_labels {
            check_dim(observations.len(), h.len())?;
        }
        Ok(Self {
            observations,
            num_classes,
            feature_dim,
            hidden_labels,
            truth,
        })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn num_labeled(&self) -> usize {
        self.observations.iter().filter(|o| o.is_labeled()).count()
    }

    pub fn num_unlabeled(&self) -> usize {
        self.len() - self.num_labeled()
    }

    /// Empirical `P(A=1) = N_l / N`.
    pub fn p_labeled(&self) -> f64 {
        self.num_labeled() as f64 / self.len() as f64
    }

    pub fn labeled_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for y in self.observations.iter().filter_map(Observation::label) {
            counts[y] += 1;
        }
        counts
    }

    /// Empirical `P(Y | A=1)` from the visible labels.
    pub fn labeled_prior(&self) -> ClassDistribution {
        ClassDistribution::from_counts(&self.labeled_counts())
            .expect("a dataset always has a labeled row")
    }

    /// Rows at `indices`, in that order. Hidden labels and truth follow.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let observations = indices
            .iter()
            .map(|&i| self.observations[i].clone())
            .collect();
        let hidden = self
            .hidden_labels
            .as_ref()
            .map(|h| indices.iter().map(|&i| h[i]).collect());
        Self::new(
            observations,
            self.num_classes,
            self.feature_dim,
            hidden,
            self.truth.clone(),
        )
    }
}
