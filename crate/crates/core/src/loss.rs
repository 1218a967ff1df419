//! False Probe Proportion loss and abstention.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::probe::{ProbeAdaptedSet, ProbeIndex, Sign};

/// A user's answers to the probes they queried. The key set is the query set `I`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserFeedback {
    answers: BTreeMap<ProbeIndex, Sign>,
}

impl UserFeedback {
    pub fn new(answers: BTreeMap<ProbeIndex, Sign>) -> Self {
        Self { answers }
    }

    pub fn answers(&self) -> &BTreeMap<ProbeIndex, Sign> {
        &self.answers
    }

    pub fn answer(&self, index: &ProbeIndex) -> Option<Sign> {
        self.answers.get(index).copied()
    }

    pub fn queries(&self) -> impl Iterator<Item = &ProbeIndex> + '_ {
        self.answers.keys()
    }

    pub fn num_queries(&self) -> usize {
        self.answers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.answers.is_empty()
    }
}

impl FromIterator<(ProbeIndex, Sign)> for UserFeedback {
    fn from_iter<T: IntoIterator<Item = (ProbeIndex, Sign)>>(iter: T) -> Self {
        Self { answers: iter.into_iter().collect() }
    }
}

/// An FPP value kept as exact counts: `errors / max(1, answered)`.
///
/// Ordering compares the rational values exactly, so `0/0`, `0/3` compare equal.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct FppLoss {
    /// Overlapping probes answered wrongly.
    pub errors: u32,
    /// `|I ∩ I(C)|`.
    pub answered: u32,
}

impl FppLoss {
    pub const ZERO: FppLoss = FppLoss { errors: 0, answered: 0 };

    pub fn new(errors: u32, answered: u32) -> Self {
        debug_assert!(errors <= answered);
        Self { errors, answered }
    }

    pub fn denominator(&self) -> u32 {
        self.answered.max(1)
    }

    pub fn value(&self) -> f64 {
        f64::from(self.errors) / f64::from(self.denominator())
    }

    /// `loss > delta`.
    pub fn exceeds(&self, delta: f64) -> bool {
        self.value() > delta
    }
}

impl PartialEq for FppLoss {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for FppLoss {}

impl PartialOrd for FppLoss {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FppLoss {
    fn cmp(&self, other: &Self) -> Ordering {
        let lhs = u64::from(self.errors) * u64::from(other.denominator());
        let rhs = u64::from(other.errors) * u64::from(self.denominator());
        lhs.cmp(&rhs)
    }
}

/// FPP of `set` against the user's answers.
pub fn fpp_loss(feedback: &UserFeedback, set: &ProbeAdaptedSet) -> FppLoss {
    let (mut errors, mut answered) = (0u32, 0u32);
    // Iterate over the smaller map.
    if feedback.num_queries() <= set.num_answered() {
        for (i, truth) in feedback.answers() {
            if let Some(s) = set.answer(i) {
                answered += 1;
                errors += u32::from(s != *truth);
            }
        }
    } else {
        for (i, s) in set.answers() {
            if let Some(truth) = feedback.answer(i) {
                answered += 1;
                errors += u32::from(*s != truth);
            }
        }
    }
    FppLoss::new(errors, answered)
}

/// Fraction of the user's queries the set declines to answer.
pub fn abstention(feedback: &UserFeedback, set: &ProbeAdaptedSet) -> Result<f64> {
    if feedback.is_empty() {
        return Err(Error::domain("abstention is undefined without queries"));
    }
    let overlap = feedback.queries().filter(|i| set.is_answered(i)).count();
    Ok(1.0 - overlap as f64 / feedback.num_queries() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::{materialize_weak_set, membership, ProbeFamily};
    use proptest::prelude::*;
    use rand::Rng;
    use std::collections::BTreeSet;

    fn bit(k: u32) -> ProbeIndex {
        ProbeIndex::Bit(k)
    }

    #[test]
    fn fpp_examples() {
        let (a, b, c, d) = (bit(1), bit(2), bit(3), bit(4));
        let fb: UserFeedback = [(a, Sign::Pos), (b, Sign::Pos), (c, Sign::Neg)].into_iter().collect();
        let set: ProbeAdaptedSet = [(b, Sign::Pos), (c, Sign::Pos), (d, Sign::Neg)].into_iter().collect();
        let l = fpp_loss(&fb, &set);
        assert_eq!((l.errors, l.answered), (1, 2));
        assert_eq!(l.value(), 0.5);

        let disjoint: ProbeAdaptedSet = [(d, Sign::Pos)].into_iter().collect();
        assert_eq!(fpp_loss(&fb, &disjoint).value(), 0.0);
        assert_eq!(fpp_loss(&fb, &ProbeAdaptedSet::full()).value(), 0.0);

        let agree: ProbeAdaptedSet = [(a, Sign::Pos), (c, Sign::Neg), (d, Sign::Neg)].into_iter().collect();
        assert_eq!(fpp_loss(&fb, &agree), FppLoss::ZERO);
    }

    #[test]
    fn abstention_examples() {
        let fb: UserFeedback = (1..=4).map(|k| (bit(k), Sign::Pos)).collect();
        let all: ProbeAdaptedSet = (1..=5).map(|k| (bit(k), Sign::Neg)).collect();
        assert_eq!(abstention(&fb, &all).unwrap(), 0.0);
        assert_eq!(abstention(&fb, &ProbeAdaptedSet::full()).unwrap(), 1.0);
        let three: ProbeAdaptedSet = (1..=3).map(|k| (bit(k), Sign::Neg)).collect();
        assert_eq!(abstention(&fb, &three).unwrap(), 0.25);
        assert!(abstention(&UserFeedback::default(), &three).is_err());
    }

    #[test]
    fn loss_ordering_is_exact() {
        assert_eq!(FppLoss::new(1, 3), FppLoss::new(2, 6));
        assert!(FppLoss::new(1, 3) < FppLoss::new(1, 2));
        assert_eq!(FppLoss::new(0, 0), FppLoss::new(0, 7));
        assert!(!FppLoss::new(1, 5).exceeds(0.2));
        assert!(FppLoss::new(2, 9).exceeds(0.2));
    }

    #[test]
    fn sets_containing_the_truth_have_zero_loss() {
        let family = ProbeFamily::Bitvector { k: 6 };
        let labels = family.labels(1 << 6).unwrap();
        let mut rng = crate::rng::rng_from_seed(5);
        for _ in 0..500 {
            let y = &labels[rng.random_range(0..labels.len())];
            let fb: UserFeedback = family
                .indices()
                .into_iter()
                .filter(|_| rng.random_bool(0.5))
                .map(|i| (i, crate::probe::evaluate_probe(&family, &i, y).unwrap()))
                .collect();
            let set: ProbeAdaptedSet = family
                .indices()
                .into_iter()
                .filter_map(|i| if rng.random_bool(0.5) { Some((i, Sign::from_bool(rng.random()))) } else { None })
                .collect();
            let queries: BTreeSet<_> = set.answers().keys().copied().collect();
            let contains = materialize_weak_set(&family, &queries, set.answers(), 1 << 6).unwrap().contains(y);
            assert_eq!(contains, membership(&set, &family, y).unwrap());
            if contains {
                assert_eq!(fpp_loss(&fb, &set), FppLoss::ZERO);
            }
        }
    }

    proptest! {
        #[test]
        fn loss_is_a_count_ratio(
            truth in prop::collection::btree_map(1u32..30, any::<bool>(), 0..20),
            pred in prop::collection::btree_map(1u32..30, any::<bool>(), 0..20),
            drop in 1u32..30,
        ) {
            let fb: UserFeedback = truth.iter().map(|(k, v)| (bit(*k), Sign::from_bool(*v))).collect();
            let set: ProbeAdaptedSet = pred.iter().map(|(k, v)| (bit(*k), Sign::from_bool(*v))).collect();
            let l = fpp_loss(&fb, &set);
            let overlap = truth.keys().filter(|k| pred.contains_key(k)).count() as u32;
            prop_assert_eq!(l.answered, overlap);
            prop_assert!(l.errors <= l.answered);
            prop_assert!((0.0..=1.0).contains(&l.value()));

            // Removing one answered index never increases the error count.
            let mut smaller = set.clone().into_answers();
            smaller.remove(&bit(drop));
            let l2 = fpp_loss(&fb, &ProbeAdaptedSet::from_answers(smaller));
            prop_assert!(l2.errors <= l.errors);
        }
    }
}
