//! Scalar and vector primitives shared by the rest of the crate.
//!
//! | Function | Formula |
//! |----------|---------|
//! | [`softmax`] | `exp(s_i / t) / Σ_j exp(s_j / t)` |
//! | [`cosine_similarity`] | `a·b / (‖a‖‖b‖)` |
//! | [`js_distance`] | `sqrt(½ KL₂(p‖m) + ½ KL₂(q‖m))`, `m = (p + q) / 2` |
//! | [`entropy`] | `−Σ p_i ln p_i` |
//! | [`sharpen`] | `p_i^(1/T) / Σ_j p_j^(1/T)` |
//! | [`cross_entropy`] | `−Σ t_i ln max(p_i, ε)` |
//!
//! Logarithms are natural everywhere except inside [`js_distance`], which
//! uses base 2 so that the distance is bounded by 1.

use std::ops::Deref;

use crate::error::{param_err, Error, Result};

/// Probability floor applied before any logarithm.
pub const PROB_FLOOR: f64 = 1e-12;

/// Tolerance on the total mass of a [`ClassDistribution`].
pub const SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over the classes.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    /// Validates non-negativity and unit mass.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return param_err("class distribution must have at least one class");
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return param_err(format!("probability {bad} is not a finite non-negative value"));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SUM_TOLERANCE {
            return param_err(format!("probabilities sum to {sum}, expected 1"));
        }
        Ok(Self(probs))
    }

    /// Normalizes a non-negative weight vector.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return param_err(format!("cannot normalize weights with total {total}"));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub(crate) fn from_vec_unchecked(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= 1e-6);
        Self(probs)
    }

    pub fn uniform(classes: usize) -> Result<Self> {
        if classes == 0 {
            return param_err("class count must be positive");
        }
        Ok(Self(vec![1.0 / classes as f64; classes]))
    }

    pub fn one_hot(class: usize, classes: usize) -> Result<Self> {
        if class >= classes {
            return param_err(format!("class {class} out of range for {classes} classes"));
        }
        let mut probs = vec![0.0; classes];
        probs[class] = 1.0;
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn classes(&self) -> usize {
        self.0.len()
    }

    /// Largest probability.
    pub fn max_prob(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ClassDistribution {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// An embedding taken from the backbone's last hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature component {i} is {}", values[i])));
        }
        Ok(Self(values))
    }

    pub(crate) fn from_vec_unchecked(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FeatureVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Index of the maximum entry, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Inner product with four independent accumulators.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Temperature-scaled softmax with max subtraction.
pub fn softmax(scores: &[f64], temperature: f64) -> Result<ClassDistribution> {
    if scores.is_empty() {
        return param_err("softmax of an empty score vector");
    }
    if !(temperature > 0.0) || !temperature.is_finite() {
        return param_err(format!("softmax temperature must be positive, got {temperature}"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("softmax score".into()));
    }
    Ok(ClassDistribution(softmax_unchecked(scores, temperature)))
}

pub(crate) fn softmax_unchecked(scores: &[f64], temperature: f64) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = scores.iter().map(|s| ((s - max) / temperature).exp()).collect();
    let total: f64 = out.iter().sum();
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Cosine similarity of two feature vectors.
///
/// A zero-norm input yields 0 and a warning instead of a division by zero.
///
/// # Panics
///
/// Panics if the dimensions differ.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "cosine similarity of vectors with different dimensions");
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        log::warn!("cosine similarity with a zero-norm feature vector; using 0");
        return 0.0;
    }
    (dot(a, b) / denom).clamp(-1.0, 1.0)
}

/// Shannon entropy in nats, with `0 ln 0 = 0`.
pub fn entropy(p: &[f64]) -> f64 {
    0.0 - p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}

/// Square root of the base-2 Jensen–Shannon divergence.
pub fn js_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::LengthMismatch { expected: p.len(), actual: q.len() });
    }
    Ok(js_distance_with_logs(p, &ln_probs(p), q, &ln_probs(q)))
}

/// Natural logs of each probability; zero entries map to 0 and are never read.
pub(crate) fn ln_probs(p: &[f64]) -> Vec<f64> {
    p.iter().map(|&x| if x > 0.0 { x.ln() } else { 0.0 }).collect()
}

/// [`js_distance`] given precomputed [`ln_probs`] of both inputs.
///
/// Identical inputs give exactly zero: the mixture then equals each input
/// bit for bit, so every log-ratio vanishes.
pub(crate) fn js_distance_with_logs(p: &[f64], ln_p: &[f64], q: &[f64], ln_q: &[f64]) -> f64 {
    let mut nats = 0.0;
    for i in 0..p.len() {
        let (a, b) = (p[i], q[i]);
        let m = 0.5 * (a + b);
        if m <= 0.0 {
            continue;
        }
        let ln_m = m.ln();
        if a > 0.0 {
            nats += a * (ln_p[i] - ln_m);
        }
        if b > 0.0 {
            nats += b * (ln_q[i] - ln_m);
        }
    }
    let divergence = 0.5 * nats / std::f64::consts::LN_2;
    divergence.clamp(0.0, 1.0).sqrt()
}

/// Temperature sharpening `p_i^(1/T)`, renormalized.
pub fn sharpen(p: &ClassDistribution, temperature: f64) -> Result<ClassDistribution> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return param_err(format!("sharpening temperature must be positive, got {temperature}"));
    }
    if temperature == 1.0 {
        return Ok(p.clone());
    }
    // Work in log space so small temperatures do not underflow every entry.
    let inv = 1.0 / temperature;
    let logs: Vec<f64> = p
        .iter()
        .map(|&x| if x > 0.0 { inv * x.ln() } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(ClassDistribution(weights.into_iter().map(|w| w / total).collect()))
}

/// Argmax index and its one-hot distribution.
pub fn hard_label(p: &ClassDistribution) -> (usize, ClassDistribution) {
    let k = p.argmax();
    let mut probs = vec![0.0; p.classes()];
    probs[k] = 1.0;
    (k, ClassDistribution(probs))
}

/// Cross-entropy `−Σ t_i ln max(p_i, ε)`; accepts soft targets.
pub fn cross_entropy(target: &[f64], pred: &[f64]) -> f64 {
    debug_assert_eq!(target.len(), pred.len());
    -target
        .iter()
        .zip(pred)
        .filter(|(t, _)| **t != 0.0)
        .map(|(t, p)| t * p.max(PROB_FLOOR).ln())
        .sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(v: &[f64]) -> ClassDistribution {
        ClassDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0], 1.0).unwrap().probs(), &[0.5, 0.5]);
        let u = softmax(&[3.0, 3.0, 3.0], 0.2).unwrap();
        for p in u.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        // exp(20) / (exp(20) + 1) = 0.9999999979388464
        let s = softmax(&[1.0, 0.0], 0.05).unwrap();
        assert!(s[0] >= 1.0 - 1e-8);
        assert!((s[0] - 0.9999999979388464).abs() < 1e-15);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(matches!(softmax(&[1.0], 0.0), Err(Error::Parameter(_))));
        assert!(matches!(softmax(&[1.0], -1.0), Err(Error::Parameter(_))));
        assert!(matches!(softmax(&[], 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn cosine_examples() {
        let v = [0.3, -1.2, 2.0];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert!((cosine_similarity(&v, &v) - 1.0).abs() < 1e-15);
        assert!((cosine_similarity(&v, &neg) + 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert_eq!(cosine_similarity(&[0.0, 0.0], &[0.0, 1.0]), 0.0);
    }

    #[test]
    fn js_examples() {
        let p = [0.2, 0.3, 0.5];
        assert_eq!(js_distance(&p, &p).unwrap(), 0.0);
        assert!((js_distance(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - 1.0).abs() < 1e-15);
        // KL terms evaluated independently with log2, then the square root.
        let d = js_distance(&[0.5, 0.5], &[1.0, 0.0]).unwrap();
        assert!((d - 0.5579230452841438).abs() < 1e-12);
        assert!(matches!(js_distance(&[1.0], &[0.5, 0.5]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(entropy(&[0.0, 1.0, 0.0]), 0.0);
        assert!((entropy(&[0.1; 10]) - 10f64.ln()).abs() < 1e-12);
        assert!((entropy(&[0.5, 0.5]) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn sharpen_examples() {
        let p = dist(&[0.6, 0.4]);
        assert_eq!(sharpen(&p, 1.0).unwrap(), p);
        let s = sharpen(&p, 0.5).unwrap();
        assert!((s[0] - 0.36 / 0.52).abs() < 1e-12);
        assert!((s[1] - 0.16 / 0.52).abs() < 1e-12);
        let cold = sharpen(&p, 1e-3).unwrap();
        assert!(cold[0] > 1.0 - 1e-12);
        assert!(sharpen(&p, 0.0).is_err());
    }

    #[test]
    fn hard_label_examples() {
        let (k, h) = hard_label(&dist(&[0.1, 0.7, 0.2]));
        assert_eq!((k, h.probs()), (1, &[0.0, 1.0, 0.0][..]));
        let (k, h) = hard_label(&dist(&[0.5, 0.5]));
        assert_eq!((k, h.probs()), (0, &[1.0, 0.0][..]));
        let one = ClassDistribution::one_hot(2, 4).unwrap();
        assert_eq!(hard_label(&one), (2, one.clone()));
    }

    #[test]
    fn cross_entropy_examples() {
        let pred = [0.2, 0.5, 0.3];
        assert!((cross_entropy(&[0.0, 1.0, 0.0], &pred) + 0.5f64.ln()).abs() < 1e-15);
        assert!((cross_entropy(&[0.25; 4], &[0.25; 4]) - 4f64.ln()).abs() < 1e-12);
        assert!(cross_entropy(&[1.0, 0.0], &[1.0 - 1e-12, 1e-12]) < 1e-11);
    }

    #[test]
    fn distribution_validation() {
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(ClassDistribution::new(vec![-0.1, 1.1]).is_err());
        assert!(ClassDistribution::new(vec![]).is_err());
        assert!(ClassDistribution::one_hot(4, 4).is_err());
        assert!(FeatureVector::new(vec![1.0, f64::NAN]).is_err());
    }

    fn arb_dist(max_classes: usize) -> impl Strategy<Value = ClassDistribution> {
        prop::collection::vec(0.0f64..1.0, 2..=max_classes).prop_filter_map("zero mass", |w| {
            ClassDistribution::from_weights(w).ok()
        })
    }

    fn dist_of_len(n: usize) -> impl Strategy<Value = ClassDistribution> {
        prop::collection::vec(0.0f64..1.0, n).prop_filter_map("zero mass", |w| {
            ClassDistribution::from_weights(w).ok()
        })
    }

    proptest! {
        #[test]
        fn softmax_valid_and_shift_invariant(
            scores in prop::collection::vec(-50.0f64..50.0, 1..12),
            shift in -100.0f64..100.0,
            t in 0.01f64..10.0,
        ) {
            let a = softmax(&scores, t).unwrap();
            prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(a.iter().all(|p| *p >= 0.0));
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift).collect();
            let b = softmax(&shifted, t).unwrap();
            for (x, y) in a.iter().zip(b.iter()) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }

        #[test]
        fn js_symmetric_bounded((p, q) in (2usize..10).prop_flat_map(|n| (dist_of_len(n), dist_of_len(n)))) {
            let d1 = js_distance(&p, &q).unwrap();
            let d2 = js_distance(&q, &p).unwrap();
            prop_assert!((d1 - d2).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&d1));
            prop_assert_eq!(js_distance(&p, &p).unwrap(), 0.0);
        }

        #[test]
        fn entropy_bounded(p in arb_dist(10)) {
            let h = entropy(&p);
            prop_assert!(h >= 0.0);
            prop_assert!(h <= (p.classes() as f64).ln() + 1e-12);
        }

        #[test]
        fn sharpen_preserves_argmax(p in arb_dist(10), t in 0.05f64..5.0) {
            let s = sharpen(&p, t).unwrap();
            prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert_eq!(s.argmax(), p.argmax());
        }

        #[test]
        fn cross_entropy_of_self_is_entropy(p in arb_dist(10)) {
            let ce = cross_entropy(&p, &p);
            prop_assert!((ce - entropy(&p)).abs() < 1e-9);
        }
    }
}
