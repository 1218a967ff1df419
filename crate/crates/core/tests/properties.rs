use std::collections::BTreeMap;

use proptest::prelude::*;

use probeset::calibrate::{conformal_quantile, fst_select};
use probeset::eval::ecdf;
use probeset::record::{parse_jsonl, write_jsonl};
use probeset::{
    bernoulli_threshold, eta_set, fpp_loss, hb_pvalue, loss_trace, stepdown_score, stepup_score, threshold_set,
    AccuracyVector, FamilyKind, ProbeAdaptedSet, ProbeIndex, ScoreVector, Sign, UserFeedback, WeakExample,
};

/// A probe's score, whether it was queried, and the user's answer.
type RawProbe = (f64, bool, bool);

fn raw_probes(max: usize) -> impl Strategy<Value = Vec<RawProbe>> {
    let magnitude = prop_oneof![(0u32..6).prop_map(|k| f64::from(k) / 2.0), 0.0..4.0f64];
    let score = (magnitude, any::<bool>()).prop_map(|(m, neg)| if neg { -m } else { m });
    prop::collection::vec((score, any::<bool>(), any::<bool>()), 0..=max)
}

fn instance(raw: &[RawProbe]) -> (ScoreVector, UserFeedback) {
    let mut scores = BTreeMap::new();
    let mut answers = BTreeMap::new();
    for (b, (s, queried, answer)) in raw.iter().enumerate() {
        let idx = ProbeIndex::Bit(b as u32 + 1);
        scores.insert(idx, *s);
        if *queried {
            answers.insert(idx, Sign::from_bool(*answer));
        }
    }
    (ScoreVector::new(scores).unwrap(), UserFeedback::new(answers))
}

fn accuracies(max: usize) -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec(
        (prop_oneof![(10u32..=20).prop_map(|k| f64::from(k) / 20.0), 0.5..=1.0f64], any::<bool>()),
        1..=max,
    )
}

fn accuracy_vector(raw: &[(f64, bool)]) -> (AccuracyVector, Vec<ProbeIndex>) {
    let indices: Vec<ProbeIndex> = (0..raw.len() as u32).map(|b| ProbeIndex::Bit(b + 1)).collect();
    let acc =
        AccuracyVector::from_entries(indices.iter().zip(raw).map(|(i, (a, pos))| (*i, Sign::from_bool(*pos), *a)))
            .unwrap();
    (acc, indices)
}

proptest! {
    #[test]
    fn fpp_is_a_count_ratio_bounded_by_one(raw in raw_probes(20), lambda in 0.0..4.5f64) {
        let (scores, feedback) = instance(&raw);
        let set = threshold_set(&scores, lambda);
        let loss = fpp_loss(&feedback, &set);
        let overlap = feedback.queries().filter(|i| set.is_answered(i)).count() as u32;
        prop_assert_eq!(loss.answered, overlap);
        prop_assert!(loss.errors <= loss.answered);
        prop_assert!((0.0..=1.0).contains(&loss.value()));
        if overlap == 0 {
            prop_assert_eq!(loss.value(), 0.0);
        }
    }

    #[test]
    fn dropping_an_answer_never_adds_errors(raw in raw_probes(20), lambda in 0.0..4.5f64, pick in any::<prop::sample::Index>()) {
        let (scores, feedback) = instance(&raw);
        let set = threshold_set(&scores, lambda);
        prop_assume!(set.num_answered() > 0);
        let mut answers = set.clone().into_answers();
        let dropped = *answers.keys().nth(pick.index(answers.len())).unwrap();
        answers.remove(&dropped);
        let smaller = ProbeAdaptedSet::from_answers(answers);
        prop_assert!(fpp_loss(&feedback, &smaller).errors <= fpp_loss(&feedback, &set).errors);
    }

    #[test]
    fn threshold_sets_are_nested(raw in raw_probes(20), a in 0.0..4.5f64, b in 0.0..4.5f64) {
        let (scores, _) = instance(&raw);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let small = threshold_set(&scores, hi);
        let large = threshold_set(&scores, lo);
        for (i, s) in small.answers() {
            prop_assert_eq!(large.answer(i), Some(*s));
        }
    }

    #[test]
    fn bernoulli_sets_are_nested(raw in accuracies(30), a in 0.5..1.0f64, b in 0.5..1.0f64) {
        let (acc, queries) = accuracy_vector(&raw);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let strict = eta_set(&acc, bernoulli_threshold(&acc, &queries, hi).unwrap());
        let loose = eta_set(&acc, bernoulli_threshold(&acc, &queries, lo).unwrap());
        for (i, s) in strict.answers() {
            prop_assert_eq!(loose.answer(i), Some(*s));
        }
    }

    #[test]
    fn trace_equals_direct_loss(raw in raw_probes(20), lambdas in prop::collection::vec(0.0..5.0f64, 1..20)) {
        let (scores, feedback) = instance(&raw);
        let trace = loss_trace(&scores, &feedback);
        for l in lambdas.into_iter().chain(scores.iter().map(|(_, s)| s.abs())) {
            prop_assert_eq!(trace.value_at(l), fpp_loss(&feedback, &threshold_set(&scores, l)));
        }
    }

    #[test]
    fn stepup_never_exceeds_stepdown_and_both_fall_with_delta(raw in raw_probes(20), d1 in 0.0..1.0f64, d2 in 0.0..1.0f64) {
        let (scores, feedback) = instance(&raw);
        let trace = loss_trace(&scores, &feedback);
        let (lo, hi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        for d in [lo, hi] {
            prop_assert!(stepup_score(&trace, d) <= stepdown_score(&trace, d));
        }
        prop_assert!(stepdown_score(&trace, hi) <= stepdown_score(&trace, lo));
        prop_assert!(stepup_score(&trace, hi) <= stepup_score(&trace, lo));
    }

    #[test]
    fn hb_pvalue_is_monotone(n in 1usize..300, m1 in 0.0..=1.0f64, m2 in 0.0..=1.0f64, d1 in 0.01..0.99f64, d2 in 0.01..0.99f64) {
        let (mlo, mhi) = if m1 <= m2 { (m1, m2) } else { (m2, m1) };
        let (dlo, dhi) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
        let p = |m, d| hb_pvalue(m, n, d).unwrap();
        prop_assert!(p(mlo, dlo) <= p(mhi, dlo) + 1e-15);
        prop_assert!(p(mlo, dhi) <= p(mlo, dlo) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&p(mlo, dlo)));
    }

    #[test]
    fn fst_selection_moves_down_as_alpha_grows(p in prop::collection::vec(0.0..=1.0f64, 0..40), a1 in 0.0..1.0f64, a2 in 0.0..1.0f64) {
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let rank = |a| fst_select(&p, a).unwrap_or(usize::MAX);
        prop_assert!(rank(hi) <= rank(lo));
        if let Some(k) = fst_select(&p, lo) {
            prop_assert!(p[k..].iter().all(|x| *x <= lo));
            prop_assert!(k == 0 || p[k - 1] > lo);
        }
    }

    #[test]
    fn conformal_quantile_is_the_expected_order_statistic(scores in prop::collection::vec(prop_oneof![(0u32..5).prop_map(f64::from), 0.0..10.0f64], 1..60), a in 1u64..100) {
        let alpha = a as f64 / 100.0;
        let n = scores.len() as u64;
        let rank = ((n + 1) * (100 - a)).div_ceil(100).clamp(1, n) as usize;
        let q = conformal_quantile(&scores, alpha).unwrap();
        let below = scores.iter().filter(|s| **s <= q).count();
        let strictly_below = scores.iter().filter(|s| **s < q).count();
        prop_assert!(below >= rank);
        prop_assert!(strictly_below < rank);
    }

    #[test]
    fn ecdf_is_nondecreasing_and_ends_at_one(values in prop::collection::vec(0.0..1.0f64, 1..50)) {
        let points = ecdf(&values);
        prop_assert!(points.windows(2).all(|w| w[0].t < w[1].t && w[0].fraction < w[1].fraction));
        prop_assert_eq!(points.last().unwrap().fraction, 1.0);
    }

    #[test]
    fn records_round_trip(raw in raw_probes(12), acc in accuracies(12), with_scores in any::<bool>(), id in "[a-z0-9-]{1,12}") {
        let (scores, feedback) = instance(&raw);
        prop_assume!(!feedback.is_empty());
        let n = raw.len();
        let (acc, _) = accuracy_vector(&acc.into_iter().cycle().take(n).collect::<Vec<_>>());
        let example = WeakExample {
            id,
            scores: with_scores.then_some(scores),
            acc: (!with_scores || n % 2 == 0).then_some(acc),
            feedback,
            label: None,
        };
        let text = write_jsonl(std::slice::from_ref(&example), FamilyKind::Bitvector).unwrap();
        let parsed = parse_jsonl(&text).unwrap();
        prop_assert_eq!(parsed.family, Some(FamilyKind::Bitvector));
        prop_assert_eq!(&parsed.examples, &vec![example]);
        prop_assert_eq!(write_jsonl(&parsed.examples, FamilyKind::Bitvector).unwrap(), text);
    }
}
