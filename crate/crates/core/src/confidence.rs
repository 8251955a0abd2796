//! Consensus confidence over `M` aggregated hypotheses.
//!
//! Every hypothesis casts one vote for its argmax class. The vote shares
//! `a` form an empirical distribution whose entropy measures disagreement;
//! the confidence weight is `exp(−H(a))`, which is 1 exactly when the vote is
//! unanimous and `1/Y` when votes are spread evenly over `Y` classes.

use serde::{Deserialize, Serialize};

use crate::error::{param_err, Error, Result};
use crate::numerics::{entropy, ClassDistribution};

/// How consensus turns into a per-item loss weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum ConfidenceMode {
    /// `c̄ = exp(−H(a))`.
    #[default]
    Weighting,
    /// `c̄ = 1(H(a) ≤ τ_u)`.
    Thresholding { tau_u: f64 },
}

impl ConfidenceMode {
    pub fn validate(&self) -> Result<()> {
        if let ConfidenceMode::Thresholding { tau_u } = self {
            if !(*tau_u >= 0.0) || !tau_u.is_finite() {
                return param_err(format!("uncertainty threshold must be non-negative, got {tau_u}"));
            }
        }
        Ok(())
    }

    pub fn confidence(&self, votes: &VoteDistribution) -> f64 {
        match *self {
            ConfidenceMode::Weighting => confidence_weight(votes),
            ConfidenceMode::Thresholding { tau_u } => uncertainty_gate(votes, tau_u),
        }
    }
}

/// Vote shares; every entry is a multiple of `1/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteDistribution {
    shares: ClassDistribution,
    counts: Vec<usize>,
}

impl VoteDistribution {
    pub fn shares(&self) -> &ClassDistribution {
        &self.shares
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn voters(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn entropy(&self) -> f64 {
        entropy(&self.shares)
    }

    pub fn is_unanimous(&self) -> bool {
        self.counts.iter().filter(|&&c| c > 0).count() == 1
    }
}

/// One-hot voting over the hypotheses' argmaxes.
pub fn vote(hypotheses: &[ClassDistribution]) -> Result<VoteDistribution> {
    let Some(first) = hypotheses.first() else {
        return param_err("voting needs at least one hypothesis");
    };
    let classes = first.classes();
    let mut counts = vec![0usize; classes];
    for h in hypotheses {
        if h.classes() != classes {
            return Err(Error::LengthMismatch { expected: classes, actual: h.classes() });
        }
        counts[h.argmax()] += 1;
    }
    Ok(from_counts(counts))
}

/// Builds a vote distribution directly from per-class counts.
pub fn from_counts(counts: Vec<usize>) -> VoteDistribution {
    let m: usize = counts.iter().sum();
    assert!(m > 0, "vote counts must not all be zero");
    let shares = counts.iter().map(|&c| c as f64 / m as f64).collect();
    VoteDistribution { shares: ClassDistribution::from_vec_unchecked(shares), counts }
}

/// `exp(−H(a))` in nats.
pub fn confidence_weight(votes: &VoteDistribution) -> f64 {
    if votes.is_unanimous() {
        return 1.0;
    }
    (-votes.entropy()).exp()
}

/// `1` when the vote entropy is at most `tau_u`, else `0`.
pub fn uncertainty_gate(votes: &VoteDistribution, tau_u: f64) -> f64 {
    if votes.entropy() <= tau_u {
        1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn peaked(class: usize, classes: usize) -> ClassDistribution {
        let mut p = vec![0.5 / (classes - 1) as f64; classes];
        p[class] = 0.5;
        ClassDistribution::new(p).unwrap()
    }

    #[test]
    fn vote_examples() {
        let all_two: Vec<_> = (0..5).map(|_| peaked(2, 4)).collect();
        assert_eq!(vote(&all_two).unwrap().shares().probs(), &[0.0, 0.0, 1.0, 0.0]);

        let mixed = [peaked(1, 5), peaked(2, 5), peaked(2, 5), peaked(3, 5)];
        assert_eq!(vote(&mixed).unwrap().shares().probs(), &[0.0, 0.25, 0.5, 0.25, 0.0]);

        let single = vote(&[peaked(3, 4)]).unwrap();
        assert_eq!(single.shares().probs(), &[0.0, 0.0, 0.0, 1.0]);
        assert!(vote(&[]).is_err());
    }

    #[test]
    fn confidence_examples() {
        assert_eq!(confidence_weight(&from_counts(vec![0, 4, 0])), 1.0);
        assert!((confidence_weight(&from_counts(vec![1; 10])) - 0.1).abs() < 1e-12);
        // exp(−(0.5 ln 2 + 0.5 ln 4)) = 2^(−1.5)
        let c = confidence_weight(&from_counts(vec![0, 1, 2, 1]));
        assert!((c - 0.3535533905932738).abs() < 1e-12);
    }

    #[test]
    fn gate_examples() {
        assert_eq!(uncertainty_gate(&from_counts(vec![3, 0]), 0.0), 1.0);
        assert_eq!(uncertainty_gate(&from_counts(vec![1; 10]), 1.5), 0.0);
        assert_eq!(uncertainty_gate(&from_counts(vec![1, 1]), 0.693148), 1.0);
        assert_eq!(uncertainty_gate(&from_counts(vec![1, 1]), 0.693147), 0.0);
    }

    #[test]
    fn mode_dispatch() {
        let v = from_counts(vec![1, 3]);
        assert_eq!(ConfidenceMode::Weighting.confidence(&v), confidence_weight(&v));
        assert_eq!(ConfidenceMode::Thresholding { tau_u: 1.0 }.confidence(&v), 1.0);
        assert!(ConfidenceMode::Thresholding { tau_u: -0.1 }.validate().is_err());
    }

    fn arb_votes() -> impl Strategy<Value = Vec<usize>> {
        (2usize..8, 1usize..20).prop_flat_map(|(classes, m)| prop::collection::vec(0..classes, m))
            .prop_map(|argmaxes| {
                let classes = argmaxes.iter().max().unwrap() + 2;
                let mut counts = vec![0; classes];
                for a in argmaxes {
                    counts[a] += 1;
                }
                counts
            })
    }

    proptest! {
        #[test]
        fn bounds_and_unanimity(counts in arb_votes()) {
            let v = from_counts(counts.clone());
            let c = confidence_weight(&v);
            prop_assert!(c > 0.0 && c <= 1.0);
            prop_assert_eq!(c == 1.0, counts.iter().filter(|&&n| n > 0).count() == 1);
        }

        #[test]
        fn permutation_invariant(counts in arb_votes(), seed in any::<u64>()) {
            use rand::{seq::SliceRandom, SeedableRng};
            let classes = counts.len();
            let mut hyps: Vec<ClassDistribution> = counts
                .iter()
                .enumerate()
                .flat_map(|(k, &n)| std::iter::repeat_n(k, n))
                .map(|k| peaked(k, classes))
                .collect();
            let before = confidence_weight(&vote(&hyps).unwrap());
            hyps.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(before, confidence_weight(&vote(&hyps).unwrap()));
        }

        #[test]
        fn moving_vote_to_majority_never_lowers(counts in arb_votes()) {
            let major = crate::numerics::argmax(&counts.iter().map(|&c| c as f64).collect::<Vec<_>>());
            let before = confidence_weight(&from_counts(counts.clone()));
            for minor in 0..counts.len() {
                if minor == major || counts[minor] == 0 {
                    continue;
                }
                let mut moved = counts.clone();
                moved[minor] -= 1;
                moved[major] += 1;
                prop_assert!(confidence_weight(&from_counts(moved)) >= before - 1e-15);
            }
        }

        #[test]
        fn gate_agrees_with_weight(counts in arb_votes(), tau_u in 0.0f64..2.5) {
            let v = from_counts(counts);
            let gate = uncertainty_gate(&v, tau_u) == 1.0;
            prop_assert_eq!(gate, -confidence_weight(&v).ln() <= tau_u);
        }
    }
}
