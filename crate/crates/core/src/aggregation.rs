//! Similarity-weighted aggregation of candidate class distributions.
//!
//! For a query `(v_b, p_b)` and candidates `(v_l, p_l)`:
//!
//! ```text
//! S(b, l) = cos(v_b, v_l) + λ_sim · s_class(p_b, p_l)
//! w_l     = softmax_l(S(b, l) / τ_sim)
//! p̄_b     = Σ_l w_l · p_l
//! ```
//!
//! `s_class` is `−JS(p_b, p_l)` by default so that agreeing distributions
//! attract; [`ClassTermOrientation::PositiveDistance`] uses `+JS` instead.
//!
//! [`CandidatePool`] precomputes unit features and log-probabilities once so
//! that scoring many queries against the same subsets stays cheap.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::numerics::{
    cosine_similarity, dot, js_distance, js_distance_with_logs, ln_probs, norm, ClassDistribution,
    FeatureVector,
};
use crate::queue::{QueueEntry, QueuePartition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ClassTermOrientation {
    /// Class similarity is `−JS`.
    #[default]
    NegativeDistance,
    /// Class similarity is `+JS`, as the term is written in the formula.
    #[serde(alias = "paper_literal")]
    PositiveDistance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregationConfig {
    /// Softmax temperature `τ_sim`.
    pub temperature: f64,
    /// Class-term weight `λ_sim`.
    pub class_weight: f64,
    pub orientation: ClassTermOrientation,
}

impl Default for AggregationConfig {
    fn default() -> Self {
        Self { temperature: 0.05, class_weight: 0.5, orientation: ClassTermOrientation::NegativeDistance }
    }
}

impl AggregationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return param_err(format!("similarity temperature must be positive, got {}", self.temperature));
        }
        if !(self.class_weight >= 0.0) || !self.class_weight.is_finite() {
            return param_err(format!("class-term weight must be non-negative, got {}", self.class_weight));
        }
        Ok(())
    }

    fn class_sign(&self) -> f64 {
        match self.orientation {
            ClassTermOrientation::NegativeDistance => -1.0,
            ClassTermOrientation::PositiveDistance => 1.0,
        }
    }
}

/// Feature and distribution of the weak view of an unlabeled item.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub feature: FeatureVector,
    pub distribution: ClassDistribution,
}

/// Similarity between a query and one candidate.
pub fn similarity(q: &Query, c: &QueueEntry, cfg: &AggregationConfig) -> f64 {
    let js = js_distance(&q.distribution, &c.distribution).expect("class counts must agree");
    cosine_similarity(&q.feature, &c.feature) + cfg.class_weight * cfg.class_sign() * js
}

/// A query with its unit feature and log-probabilities precomputed.
#[derive(Debug, Clone)]
pub struct PreparedQuery {
    unit: Vec<f64>,
    probs: Vec<f64>,
    ln_probs: Vec<f64>,
}

impl PreparedQuery {
    pub fn new(q: &Query) -> Self {
        Self { unit: unit(&q.feature), probs: q.distribution.to_vec(), ln_probs: ln_probs(&q.distribution) }
    }
}

fn unit(v: &[f64]) -> Vec<f64> {
    let n = norm(v);
    if n == 0.0 {
        log::warn!("zero-norm feature vector; its cosine similarities are 0");
        return vec![0.0; v.len()];
    }
    v.iter().map(|x| x / n).collect()
}

/// Flattened candidate set with per-candidate precomputation.
#[derive(Debug, Clone)]
pub struct CandidatePool {
    dim: usize,
    classes: usize,
    units: Vec<f64>,
    probs: Vec<f64>,
    ln_probs: Vec<f64>,
    labels: Vec<usize>,
}

impl CandidatePool {
    pub fn new<'a, I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a QueueEntry>,
    {
        let mut pool = Self { dim: 0, classes: 0, units: Vec::new(), probs: Vec::new(), ln_probs: Vec::new(), labels: Vec::new() };
        for (i, e) in entries.into_iter().enumerate() {
            if i == 0 {
                pool.dim = e.feature.dim();
                pool.classes = e.distribution.classes();
            } else if e.feature.dim() != pool.dim || e.distribution.classes() != pool.classes {
                return param_err("candidates disagree in feature dimension or class count");
            }
            pool.units.extend(unit(&e.feature));
            pool.probs.extend_from_slice(&e.distribution);
            pool.ln_probs.extend(ln_probs(&e.distribution));
            pool.labels.push(e.distribution.argmax());
        }
        Ok(pool)
    }

    /// One pool per subset of a partition.
    pub fn from_partition(partition: &QueuePartition<'_>) -> Result<Vec<Self>> {
        partition.subsets().iter().map(|s| Self::new(s.iter().copied())).collect()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Argmax class of each candidate's stored distribution.
    pub fn candidate_classes(&self) -> &[usize] {
        &self.labels
    }

    fn check(&self, q: &PreparedQuery) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        if q.unit.len() != self.dim {
            return Err(Error::LengthMismatch { expected: self.dim, actual: q.unit.len() });
        }
        if q.probs.len() != self.classes {
            return Err(Error::LengthMismatch { expected: self.classes, actual: q.probs.len() });
        }
        Ok(())
    }

    /// Softmax weights of every candidate for this query.
    pub fn attention(&self, q: &PreparedQuery, cfg: &AggregationConfig) -> Result<Vec<f64>> {
        self.check(q)?;
        let c = self.classes;
        let class_coef = cfg.class_weight * cfg.class_sign();
        let mut scores: Vec<f64> = (0..self.len())
            .map(|l| {
                let cos = dot(&q.unit, &self.units[l * self.dim..(l + 1) * self.dim]);
                let js = js_distance_with_logs(
                    &q.probs,
                    &q.ln_probs,
                    &self.probs[l * c..(l + 1) * c],
                    &self.ln_probs[l * c..(l + 1) * c],
                );
                cos + class_coef * js
            })
            .collect();
        let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for s in &mut scores {
            *s = ((*s - max) / cfg.temperature).exp();
            total += *s;
        }
        for s in &mut scores {
            *s /= total;
        }
        Ok(scores)
    }

    /// Attention-weighted mean of the candidate distributions.
    pub fn aggregate(&self, q: &PreparedQuery, cfg: &AggregationConfig) -> Result<ClassDistribution> {
        let weights = self.attention(q, cfg)?;
        let c = self.classes;
        let mut out = vec![0.0; c];
        for (w, p) in weights.iter().zip(self.probs.chunks_exact(c)) {
            for (o, v) in out.iter_mut().zip(p) {
                *o += w * v;
            }
        }
        Ok(ClassDistribution::from_vec_unchecked(out))
    }
}

/// Aggregates the candidates' distributions for one query.
///
/// Returns [`Error::EmptyCandidates`] when there is nothing to aggregate.
pub fn aggregate<'a, I>(q: &Query, candidates: I, cfg: &AggregationConfig) -> Result<ClassDistribution>
where
    I: IntoIterator<Item = &'a QueueEntry>,
{
    cfg.validate()?;
    CandidatePool::new(candidates)?.aggregate(&PreparedQuery::new(q), cfg)
}

/// One aggregated hypothesis per subset of the partition.
pub fn aggregate_per_subset(
    q: &Query,
    partition: &QueuePartition<'_>,
    cfg: &AggregationConfig,
) -> Result<Vec<ClassDistribution>> {
    cfg.validate()?;
    let pools = CandidatePool::from_partition(partition)?;
    aggregate_with_pools(&PreparedQuery::new(q), &pools, cfg)
}

/// [`aggregate_per_subset`] against pools built once per step.
pub fn aggregate_with_pools(
    q: &PreparedQuery,
    pools: &[CandidatePool],
    cfg: &AggregationConfig,
) -> Result<Vec<ClassDistribution>> {
    if pools.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    pools.iter().map(|p| p.aggregate(q, cfg)).collect()
}

/// Elementwise mean of the hypotheses.
pub fn mean_aggregate(hypotheses: &[ClassDistribution]) -> Result<ClassDistribution> {
    let Some(first) = hypotheses.first() else {
        return param_err("mean of zero hypotheses");
    };
    let classes = first.classes();
    let mut out = vec![0.0; classes];
    for h in hypotheses {
        if h.classes() != classes {
            return Err(Error::LengthMismatch { expected: classes, actual: h.classes() });
        }
        for (o, v) in out.iter_mut().zip(h.iter()) {
            *o += v;
        }
    }
    let n = hypotheses.len() as f64;
    out.iter_mut().for_each(|o| *o /= n);
    Ok(ClassDistribution::from_vec_unchecked(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::queue::EntrySource;
    use proptest::prelude::*;

    fn cand(f: &[f64], p: &[f64]) -> QueueEntry {
        QueueEntry::new(
            FeatureVector::new(f.to_vec()).unwrap(),
            ClassDistribution::new(p.to_vec()).unwrap(),
            EntrySource::Unlabeled,
            0,
        )
    }

    fn query(f: &[f64], p: &[f64]) -> Query {
        Query { feature: FeatureVector::new(f.to_vec()).unwrap(), distribution: ClassDistribution::new(p.to_vec()).unwrap() }
    }

    #[test]
    fn similarity_examples() {
        let cfg = AggregationConfig::default();
        let q = query(&[1.0, 2.0], &[0.3, 0.7]);
        assert!((similarity(&q, &cand(&[1.0, 2.0], &[0.3, 0.7]), &cfg) - 1.0).abs() < 1e-15);

        let plain = AggregationConfig { class_weight: 0.0, ..cfg };
        let c = cand(&[2.0, -1.0], &[1.0, 0.0]);
        assert_eq!(similarity(&q, &c, &plain), cosine_similarity(&q.feature, &c.feature));

        let q = query(&[1.0, 0.0], &[1.0, 0.0]);
        let c = cand(&[0.0, 1.0], &[0.0, 1.0]);
        assert!((similarity(&q, &c, &cfg) + 0.5).abs() < 1e-15);
        let literal = AggregationConfig { orientation: ClassTermOrientation::PositiveDistance, ..cfg };
        assert!((similarity(&q, &c, &literal) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn aggregate_examples() {
        let cfg = AggregationConfig::default();
        let q = query(&[1.0, 0.0], &[0.5, 0.5]);
        let only = cand(&[0.3, 0.9], &[0.2, 0.8]);
        assert_eq!(aggregate(&q, [&only], &cfg).unwrap().probs(), &[0.2, 0.8]);

        // Both candidates are equally similar to the query by symmetry.
        let a = cand(&[1.0, 1.0], &[0.9, 0.1]);
        let b = cand(&[1.0, -1.0], &[0.1, 0.9]);
        let mean = aggregate(&query(&[1.0, 0.0], &[0.5, 0.5]), [&a, &b], &cfg).unwrap();
        assert!((mean[0] - 0.5).abs() < 1e-12);

        assert!(matches!(aggregate(&q, std::iter::empty(), &cfg), Err(Error::EmptyCandidates)));
    }

    #[test]
    fn cold_temperature_selects_most_similar() {
        let cfg = AggregationConfig { temperature: 1e-6, ..AggregationConfig::default() };
        let q = query(&[1.0, 0.0, 0.0], &[0.6, 0.3, 0.1]);
        let best = cand(&[1.0, 0.1, 0.0], &[0.7, 0.2, 0.1]);
        let other = cand(&[0.0, 1.0, 0.0], &[0.1, 0.1, 0.8]);
        let third = cand(&[0.5, 0.5, 0.5], &[0.2, 0.6, 0.2]);
        let out = aggregate(&q, [&other, &best, &third], &cfg).unwrap();
        for (a, b) in out.iter().zip(best.distribution.iter()) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn per_subset_and_mean() {
        let cfg = AggregationConfig::default();
        let a = cand(&[1.0, 0.2], &[0.8, 0.2]);
        let b = cand(&[0.1, 1.0], &[0.3, 0.7]);
        let q = query(&[1.0, 1.0], &[0.5, 0.5]);
        let single = QueuePartition::from_subsets(vec![vec![&a, &b]]);
        let out = aggregate_per_subset(&q, &single, &cfg).unwrap();
        assert_eq!(out, vec![aggregate(&q, [&a, &b], &cfg).unwrap()]);

        let dup = QueuePartition::from_subsets(vec![vec![&a, &b], vec![&a, &b], vec![&a, &b]]);
        let out = aggregate_per_subset(&q, &dup, &cfg).unwrap();
        assert!(out.windows(2).all(|w| w[0] == w[1]));

        let empty = QueuePartition::from_subsets(vec![vec![&a], vec![]]);
        assert!(matches!(aggregate_per_subset(&q, &empty, &cfg), Err(Error::EmptyCandidates)));

        let h = |v: &[f64]| ClassDistribution::new(v.to_vec()).unwrap();
        assert_eq!(mean_aggregate(&[h(&[0.2, 0.8]), h(&[0.2, 0.8])]).unwrap().probs(), &[0.2, 0.8]);
        assert_eq!(mean_aggregate(&[h(&[1.0, 0.0]), h(&[0.0, 1.0])]).unwrap().probs(), &[0.5, 0.5]);
        assert!(mean_aggregate(&[]).is_err());
    }

    fn arb_entry(dim: usize, classes: usize) -> impl Strategy<Value = QueueEntry> {
        (prop::collection::vec(-1.0f64..1.0, dim), prop::collection::vec(0.01f64..1.0, classes))
            .prop_map(|(f, w)| QueueEntry::new(
                FeatureVector::new(f).unwrap(),
                ClassDistribution::from_weights(w).unwrap(),
                EntrySource::Unlabeled,
                0,
            ))
    }

    fn arb_case() -> impl Strategy<Value = (Query, Vec<QueueEntry>)> {
        (1usize..6, 2usize..5).prop_flat_map(|(dim, classes)| {
            (arb_entry(dim, classes), prop::collection::vec(arb_entry(dim, classes), 1..20))
                .prop_map(|(q, cands)| (Query { feature: q.feature, distribution: q.distribution }, cands))
        })
    }

    proptest! {
        #[test]
        fn output_valid_in_hull_and_order_free((q, cands) in arb_case(), t in 0.01f64..2.0, rot in 0usize..20) {
            let cfg = AggregationConfig { temperature: t, ..AggregationConfig::default() };
            let out = aggregate(&q, &cands, &cfg).unwrap();
            prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for k in 0..out.classes() {
                let lo = cands.iter().map(|c| c.distribution[k]).fold(f64::INFINITY, f64::min);
                let hi = cands.iter().map(|c| c.distribution[k]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[k] >= lo - 1e-12 && out[k] <= hi + 1e-12);
            }
            let mut rotated = cands.clone();
            rotated.rotate_left(rot % cands.len());
            rotated.reverse();
            let again = aggregate(&q, &rotated, &cfg).unwrap();
            for (a, b) in out.iter().zip(again.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn negated_distance_and_complement_agree((q, cands) in arb_case()) {
            // −JS and 1 − JS differ by a constant, so the weights coincide.
            let cfg = AggregationConfig::default();
            let pool = CandidatePool::new(&cands).unwrap();
            let w = pool.attention(&PreparedQuery::new(&q), &cfg).unwrap();
            let shifted: Vec<f64> = cands.iter().map(|c| (similarity(&q, c, &cfg) + cfg.class_weight) / cfg.temperature).collect();
            let reference = crate::numerics::softmax(&shifted, 1.0).unwrap();
            for (a, b) in w.iter().zip(reference.iter()) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }

        #[test]
        fn colder_temperature_favours_best_candidate((q, cands) in arb_case(), t in 0.02f64..1.0) {
            let pool = CandidatePool::new(&cands).unwrap();
            let pq = PreparedQuery::new(&q);
            let warm = pool.attention(&pq, &AggregationConfig { temperature: t, ..AggregationConfig::default() }).unwrap();
            let cold = pool.attention(&pq, &AggregationConfig { temperature: t / 2.0, ..AggregationConfig::default() }).unwrap();
            let best = crate::numerics::argmax(&warm);
            prop_assert!(cold[best] >= warm[best] - 1e-12);
        }
    }
}
