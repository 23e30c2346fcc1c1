//! Probability vectors over classes, the label missingness mechanism, and
//! the evaluation metrics shared by every other module.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, domain, Error, Result};

/// Absolute tolerance on `Σ p = 1` for a valid distribution.
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over `C` classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(domain("class distribution must have at least one class"));
        }
        if probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::Numeric("non-finite probability".into()));
        }
        if let Some(p) = probs.iter().find(|&&p| p < 0.0) {
            return Err(domain(format!("negative probability {p}")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return Err(domain(format!("probabilities sum to {sum}, not 1")));
        }
        Ok(Self(probs))
    }

    /// Normalize nonnegative weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(domain("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(domain("weights sum to zero"));
        }
        Ok(Self(weights.iter().map(|w| w / total).collect()))
    }

    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Self::from_weights(&w)
    }

    pub fn uniform(num_classes: usize) -> Self {
        Self(vec![1.0 / num_classes as f64; num_classes])
    }

    pub fn one_hot(num_classes: usize, class: usize) -> Self {
        let mut v = vec![0.0; num_classes];
        v[class] = 1.0;
        Self(v)
    }

    pub fn num_classes(&self) -> usize {
        self.0.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    /// Mixture `w · self + (1 - w) · other`.
    pub fn mix(&self, other: &Self, w: f64) -> Result<Self> {
        check_dim(self.num_classes(), other.num_classes())?;
        let v = self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| w * a + (1.0 - w) * b)
            .collect();
        Ok(Self(v))
    }
}

impl TryFrom<Vec<f64>> for ClassDistribution {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ClassDistribution> for Vec<f64> {
    fn from(d: ClassDistribution) -> Self {
        d.0
    }
}

impl std::ops::Index<usize> for ClassDistribution {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Per-class labeling propensity `P(A=1 | Y=c)` together with `P(A=1)`.
///
/// The stored propensities are the raw values in `[0, 1]`; every read goes
/// through [`MissingnessMechanism::propensity`], which clips to
/// `[clip_floor, 1]`, so consumers only ever see values bounded away from 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessMechanism {
    raw: Vec<f64>,
    p_labeled: f64,
    clip_floor: f64,
}

pub const DEFAULT_CLIP_FLOOR: f64 = 1e-3;

impl MissingnessMechanism {
    /// Values above 1 are truncated to 1; negative or non-finite values are
    /// rejected.
    pub fn new(propensity: Vec<f64>, p_labeled: f64, clip_floor: f64) -> Result<Self> {
        if !(clip_floor > 0.0 && clip_floor <= 1.0) {
            return Err(domain(format!("clip floor {clip_floor} outside (0, 1]")));
        }
        if !(0.0..=1.0).contains(&p_labeled) {
            return Err(domain(format!("P(A=1) = {p_labeled} outside [0, 1]")));
        }
        if propensity.is_empty() {
            return Err(domain("empty propensity vector"));
        }
        if propensity.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(domain("propensities must be finite and nonnegative"));
        }
        let raw = propensity.into_iter().map(|p| p.min(1.0)).collect();
        Ok(Self {
            raw,
            p_labeled,
            clip_floor,
        })
    }

    /// Mechanism implied by the labeled and combined class distributions:
    /// `P(A=1|Y=c) = P(A=1) P(Y=c|A=1) / P(Y=c)`.
    pub fn from_distributions(
        p_labeled_prior: &ClassDistribution,
        p_combined: &ClassDistribution,
        p_labeled: f64,
        clip_floor: f64,
    ) -> Result<Self> {
        check_dim(p_labeled_prior.num_classes(), p_combined.num_classes())?;
        let prop = p_labeled_prior
            .probs()
            .iter()
            .zip(p_combined.probs())
            .map(|(&l, &y)| if y > 0.0 { p_labeled * l / y } else { 1.0 })
            .collect();
        Self::new(prop, p_labeled, clip_floor)
    }

    /// Every class labeled with probability `P(A=1)`; the mechanism that
    /// makes the labeled and unlabeled class distributions coincide.
    pub fn constant(num_classes: usize, p_labeled: f64, clip_floor: f64) -> Result<Self> {
        Self::new(vec![p_labeled; num_classes], p_labeled, clip_floor)
    }

    pub fn num_classes(&self) -> usize {
        self.raw.len()
    }

    /// Clipped propensity for class `c`.
    pub fn propensity(&self, c: usize) -> f64 {
        self.raw[c].max(self.clip_floor)
    }

    /// Whether reading class `c` hits the clip floor.
    pub fn is_clipped(&self, c: usize) -> bool {
        self.raw[c] < self.clip_floor
    }

    pub fn propensities(&self) -> Vec<f64> {
        (0..self.num_classes()).map(|c| self.propensity(c)).collect()
    }

    pub fn raw_propensities(&self) -> &[f64] {
        &self.raw
    }

    pub fn p_labeled(&self) -> f64 {
        self.p_labeled
    }

    pub fn clip_floor(&self) -> f64 {
        self.clip_floor
    }

    pub fn with_clip_floor(&self, clip_floor: f64) -> Result<Self> {
        Self::new(self.raw.clone(), self.p_labeled, clip_floor)
    }

    /// Multiply every propensity by `factor`, truncating at 1.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.raw.iter().map(|p| p * factor).collect(),
            self.p_labeled,
            self.clip_floor,
        )
    }
}

/// Total variation distance, `½ Σ |p_c − q_c|`.
pub fn tv_distance(p: &ClassDistribution, q: &ClassDistribution) -> Result<f64> {
    check_dim(p.num_classes(), q.num_classes())?;
    Ok(0.5
        * p.probs()
            .iter()
            .zip(q.probs())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>())
}

/// Euclidean projection onto the probability simplex.
///
/// Inputs that already satisfy the distribution invariants are returned
/// unchanged.
pub fn project_to_simplex(v: &[f64]) -> Result<ClassDistribution> {
    if v.is_empty() {
        return Err(domain("cannot project an empty vector"));
    }
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::Numeric("NaN in projection input".into()));
    }
    if v.iter().any(|x| x.is_infinite()) {
        return Err(Error::Numeric("infinite projection input".into()));
    }
    let sum: f64 = v.iter().sum();
    if v.iter().all(|&x| x >= 0.0) && (sum - 1.0).abs() <= SUM_TOLERANCE {
        return Ok(ClassDistribution(v.to_vec()));
    }
    let mut sorted = v.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| (x - theta).max(0.0)).collect();
    // Re-normalize away the rounding left by the threshold.
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|x| *x /= total);
    Ok(ClassDistribution(out))
}

/// Invert `P(Y) = P(A=1) P(Y|A=1) + P(A=0) P(Y|A=0)` for `P(Y|A=0)`,
/// projecting onto the simplex when the difference leaves it.
pub fn recover_unlabeled_prior(
    p_combined: &ClassDistribution,
    p_labeled_prior: &ClassDistribution,
    p_a1: f64,
) -> Result<ClassDistribution> {
    recover_unlabeled_raw(p_combined.probs(), p_labeled_prior, p_a1)
}

/// Same as [`recover_unlabeled_prior`] but accepts an unconstrained
/// combined estimate (e.g. the raw IPW or DR vector).
pub fn recover_unlabeled_raw(
    p_combined: &[f64],
    p_labeled_prior: &ClassDistribution,
    p_a1: f64,
) -> Result<ClassDistribution> {
    check_dim(p_labeled_prior.num_classes(), p_combined.len())?;
    if !(p_a1 > 0.0 && p_a1 < 1.0) {
        return Err(domain(format!("P(A=1) = {p_a1} must lie in (0, 1)")));
    }
    let v: Vec<f64> = p_combined
        .iter()
        .zip(p_labeled_prior.probs())
        .map(|(y, l)| (y - p_a1 * l) / (1.0 - p_a1))
        .collect();
    project_to_simplex(&v)
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    if predictions.is_empty() {
        return Err(domain("accuracy of an empty prediction list"));
    }
    check_dim(predictions.len(), labels.len())?;
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(hits as f64 / predictions.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> ClassDistribution {
        ClassDistribution::new(v.to_vec()).unwrap()
    }

    /// Brute-force projection: search a fine grid of the 2-simplex.
    fn grid_projection_2(v: [f64; 2]) -> [f64; 2] {
        let mut best = (f64::INFINITY, [0.0, 0.0]);
        for i in 0..=100_000 {
            let p = i as f64 / 100_000.0;
            let d = (v[0] - p).powi(2) + (v[1] - (1.0 - p)).powi(2);
            if d < best.0 {
                best = (d, [p, 1.0 - p]);
            }
        }
        best.1
    }

    #[test]
    fn tv_examples() {
        let p = dist(&[0.8, 0.2]);
        assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        assert_abs_diff_eq!(
            tv_distance(&p, &dist(&[0.2, 0.8])).unwrap(),
            0.6,
            epsilon = 1e-15
        );
        let e1 = ClassDistribution::one_hot(3, 0);
        let e2 = ClassDistribution::one_hot(3, 1);
        assert_eq!(tv_distance(&e1, &e2).unwrap(), 1.0);
        assert!(matches!(
            tv_distance(&p, &ClassDistribution::uniform(3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn projection_examples() {
        assert_eq!(project_to_simplex(&[0.3, 0.7]).unwrap().probs(), &[0.3, 0.7]);
        let oracle = grid_projection_2([1.2, -0.2]);
        let got = project_to_simplex(&[1.2, -0.2]).unwrap();
        assert_abs_diff_eq!(got[0], oracle[0], epsilon = 1e-5);
        assert_abs_diff_eq!(got[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], 0.0, epsilon = 1e-12);
        let third = project_to_simplex(&[0.5, 0.5, 0.5]).unwrap();
        for &p in third.probs() {
            assert_abs_diff_eq!(p, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(matches!(
            project_to_simplex(&[f64::NAN, 1.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn projection_matches_grid_oracle_interior() {
        for v in [[0.9, 0.4], [-0.3, 0.6], [0.2, 0.2], [2.0, 1.5]] {
            let oracle = grid_projection_2(v);
            let got = project_to_simplex(&v).unwrap();
            assert_abs_diff_eq!(got[0], oracle[0], epsilon = 1e-5);
        }
    }

    #[test]
    fn recover_examples() {
        let l = dist(&[0.8, 0.2]);
        let got = recover_unlabeled_prior(&dist(&[0.5, 0.5]), &l, 0.5).unwrap();
        assert_abs_diff_eq!(got[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(got[1], 0.8, epsilon = 1e-12);
        let same = recover_unlabeled_prior(&l, &l, 0.5).unwrap();
        assert_abs_diff_eq!(same[0], 0.8, epsilon = 1e-12);
        let clipped = recover_unlabeled_prior(&dist(&[0.3, 0.7]), &l, 0.5).unwrap();
        assert_eq!(clipped.probs(), &[0.0, 1.0]);
        assert!(recover_unlabeled_prior(&l, &l, 1.0).is_err());
        assert!(recover_unlabeled_prior(&l, &l, 0.0).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(top1_accuracy(&[0, 1, 2], &[0, 1, 2]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 3], &[0, 1, 2, 0]).unwrap(), 0.75);
        assert!(top1_accuracy(&[], &[]).is_err());
    }

    #[test]
    fn mechanism_clips_reads() {
        let m = MissingnessMechanism::new(vec![0.0, 0.5, 2.0], 0.3, 0.01).unwrap();
        assert_eq!(m.propensity(0), 0.01);
        assert!(m.is_clipped(0));
        assert_eq!(m.propensity(2), 1.0);
        assert!(MissingnessMechanism::new(vec![-0.1], 0.3, 0.01).is_err());
    }

    fn simplex_point(n: usize) -> impl Strategy<Value = ClassDistribution> {
        prop::collection::vec(0.001f64..1.0, n)
            .prop_map(|w| ClassDistribution::from_weights(&w).unwrap())
    }

    proptest! {
        #[test]
        fn tv_is_a_metric(p in simplex_point(4), q in simplex_point(4), r in simplex_point(4)) {
            let pq = tv_distance(&p, &q).unwrap();
            prop_assert!((pq - tv_distance(&q, &p).unwrap()).abs() < 1e-15);
            prop_assert!((0.0..=1.0).contains(&pq));
            prop_assert!(pq <= tv_distance(&p, &r).unwrap() + tv_distance(&r, &q).unwrap() + 1e-12);
            prop_assert_eq!(tv_distance(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn recovery_round_trips(l in simplex_point(5), u in simplex_point(5), a in 0.05f64..0.95) {
            let combined = l.mix(&u, a).unwrap();
            let back = recover_unlabeled_prior(&combined, &l, a).unwrap();
            for c in 0..5 {
                prop_assert!((back[c] - u[c]).abs() < 1e-9);
            }
        }

        #[test]
        fn projection_lands_on_simplex(v in prop::collection::vec(-3.0f64..3.0, 1..8)) {
            let p = project_to_simplex(&v).unwrap();
            prop_assert!(p.probs().iter().all(|&x| x >= 0.0));
            prop_assert!((p.probs().iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let again = project_to_simplex(p.probs()).unwrap();
            prop_assert_eq!(again, p);
        }
    }
}
