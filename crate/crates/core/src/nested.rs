//! Nested sequences of probe-adapted sets and their loss traces.
//!
//! Two sequences are supported, both growing (abstaining more) as their scalar
//! parameter increases:
//!
//! - the score-threshold sets `C_λ`, answering every probe with `|s_i| > λ`
//!   with `sign(s_i)`;
//! - the adaptive Bernoulli sets `C_{η*(x, δ)}`, answering probes whose
//!   estimated accuracy exceeds a per-instance cutoff chosen so that the
//!   answered queries have mean estimated accuracy at least `δ`.
//!
//! For a fixed instance and user feedback, the FPP of either sequence is a
//! piecewise-constant function of the parameter, captured by [`LossTrace`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::loss::{FppLoss, UserFeedback};
use crate::probe::{ProbeAdaptedSet, ProbeIndex, Sign};

/// Per-probe real scores `s_i(x)`: the sign is the predicted answer and the
/// magnitude the confidence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<ProbeIndex, f64>", into = "BTreeMap<ProbeIndex, f64>")]
pub struct ScoreVector {
    scores: BTreeMap<ProbeIndex, f64>,
}

impl TryFrom<BTreeMap<ProbeIndex, f64>> for ScoreVector {
    type Error = Error;

    fn try_from(scores: BTreeMap<ProbeIndex, f64>) -> Result<Self> {
        ScoreVector::new(scores)
    }
}

impl From<ScoreVector> for BTreeMap<ProbeIndex, f64> {
    fn from(v: ScoreVector) -> Self {
        v.scores
    }
}

impl ScoreVector {
    pub fn new(scores: BTreeMap<ProbeIndex, f64>) -> Result<Self> {
        if let Some((i, s)) = scores.iter().find(|(_, s)| !s.is_finite()) {
            return Err(Error::domain(format!("score for {i} is not finite: {s}")));
        }
        Ok(Self { scores })
    }

    pub fn get(&self, index: &ProbeIndex) -> Option<f64> {
        self.scores.get(index).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProbeIndex, &f64)> + '_ {
        self.scores.iter()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.scores.values().fold(0.0, |m, s| m.max(s.abs()))
    }

    pub fn as_map(&self) -> &BTreeMap<ProbeIndex, f64> {
        &self.scores
    }
}

/// Per-probe predictions `φ̂_i(x)` with accuracy estimates `π̂_i(x)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AccuracyVector {
    entries: BTreeMap<ProbeIndex, (Sign, f64)>,
}

impl AccuracyVector {
    /// Key sets must coincide and accuracies must lie in `[0, 1]`.
    pub fn new(predictions: BTreeMap<ProbeIndex, Sign>, accuracies: BTreeMap<ProbeIndex, f64>) -> Result<Self> {
        if predictions.len() != accuracies.len() {
            return Err(Error::domain("predictions and accuracies must share a key set"));
        }
        let entries = predictions
            .into_iter()
            .map(|(i, p)| {
                let a = *accuracies.get(&i).ok_or_else(|| Error::domain(format!("no accuracy for {i}")))?;
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::domain(format!("accuracy for {i} outside [0, 1]: {a}")));
                }
                Ok((i, (p, a)))
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries })
    }

    pub fn from_entries(entries: impl IntoIterator<Item = (ProbeIndex, Sign, f64)>) -> Result<Self> {
        let (mut p, mut a) = (BTreeMap::new(), BTreeMap::new());
        for (i, s, acc) in entries {
            p.insert(i, s);
            a.insert(i, acc);
        }
        Self::new(p, a)
    }

    pub fn prediction(&self, index: &ProbeIndex) -> Option<Sign> {
        self.entries.get(index).map(|e| e.0)
    }

    pub fn accuracy(&self, index: &ProbeIndex) -> Option<f64> {
        self.entries.get(index).map(|e| e.1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&ProbeIndex, Sign, f64)> + '_ {
        self.entries.iter().map(|(i, (s, a))| (i, *s, *a))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn predictions(&self) -> BTreeMap<ProbeIndex, Sign> {
        self.entries.iter().map(|(i, e)| (*i, e.0)).collect()
    }

    pub fn accuracies(&self) -> BTreeMap<ProbeIndex, f64> {
        self.entries.iter().map(|(i, e)| (*i, e.1)).collect()
    }
}

/// Answers every probe with `|s_i| > λ`. Negative `λ` is treated as 0, so
/// zero scores are never answered.
pub fn threshold_set(scores: &ScoreVector, lambda: f64) -> ProbeAdaptedSet {
    let lambda = lambda.max(0.0);
    scores.iter().filter(|(_, s)| s.abs() > lambda).map(|(i, s)| (*i, Sign::of(*s))).collect()
}

/// Two-sided variant: answers `-1` where `s_i < lower` and `+1` where
/// `s_i > upper`. Requires `lower <= 0 <= upper`; `(-λ, λ)` recovers
/// [`threshold_set`].
pub fn threshold_set_two_sided(scores: &ScoreVector, lower: f64, upper: f64) -> Result<ProbeAdaptedSet> {
    if !(lower <= 0.0 && 0.0 <= upper) {
        return Err(Error::domain(format!("need lower <= 0 <= upper, got ({lower}, {upper})")));
    }
    Ok(scores
        .iter()
        .filter_map(|(i, &s)| {
            if s < lower {
                Some((*i, Sign::Neg))
            } else if s > upper {
                Some((*i, Sign::Pos))
            } else {
                None
            }
        })
        .collect())
}

/// Which side of a breakpoint owns the breakpoint itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSide {
    /// Segments are `[b_k, b_{k+1})`: right-continuous (threshold sets).
    Right,
    /// Segments are `(b_k, b_{k+1}]`: left-continuous (Bernoulli sets).
    Left,
}

/// Piecewise-constant loss as a function of a nonnegative set parameter.
///
/// With breakpoints `b_1 < … < b_m` and `b_0 = 0`, `values[k]` is the loss on
/// segment `k`, spanning `b_k` to `b_{k+1}` (`∞` for the last segment).
#[derive(Debug, Clone, PartialEq)]
pub struct LossTrace {
    breakpoints: Vec<f64>,
    values: Vec<FppLoss>,
    side: TraceSide,
}

impl LossTrace {
    pub fn new(breakpoints: Vec<f64>, values: Vec<FppLoss>, side: TraceSide) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::domain("a trace needs one more value than breakpoints"));
        }
        if breakpoints.iter().any(|b| !b.is_finite() || *b < 0.0) || breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::domain("breakpoints must be finite, nonnegative and increasing"));
        }
        Ok(Self { breakpoints, values, side })
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[FppLoss] {
        &self.values
    }

    pub fn side(&self) -> TraceSide {
        self.side
    }

    /// Lower end of segment `k` (`0` for the first).
    pub fn segment_start(&self, k: usize) -> f64 {
        if k == 0 {
            0.0
        } else {
            self.breakpoints[k - 1]
        }
    }

    /// Index of the segment containing `t`.
    pub fn segment_index(&self, t: f64) -> usize {
        match self.side {
            TraceSide::Right => self.breakpoints.partition_point(|b| *b <= t),
            TraceSide::Left => self.breakpoints.partition_point(|b| *b < t),
        }
    }

    pub fn value_at(&self, t: f64) -> FppLoss {
        self.values[self.segment_index(t)]
    }

    pub fn max_breakpoint(&self) -> f64 {
        self.breakpoints.last().copied().unwrap_or(0.0)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.values.windows(2).all(|w| w[0] >= w[1])
    }
}

/// Loss of the threshold sets `C_λ` as a function of `λ`.
///
/// Queries without a score, or with score 0, are never answered.
pub fn loss_trace(scores: &ScoreVector, feedback: &UserFeedback) -> LossTrace {
    // (|s|, wrong)
    let mut probes: Vec<(f64, bool)> = feedback
        .answers()
        .iter()
        .filter_map(|(i, truth)| {
            let s = scores.get(i)?;
            (s != 0.0).then(|| (s.abs(), Sign::of(s) != *truth))
        })
        .collect();
    probes.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut breakpoints = Vec::new();
    let mut values = Vec::new();
    let mut errors = probes.iter().filter(|p| p.1).count() as u32;
    let mut answered = probes.len() as u32;
    values.push(FppLoss::new(errors, answered));
    let mut k = 0;
    while k < probes.len() {
        let b = probes[k].0;
        while k < probes.len() && probes[k].0 == b {
            answered -= 1;
            errors -= u32::from(probes[k].1);
            k += 1;
        }
        breakpoints.push(b);
        values.push(FppLoss::new(errors, answered));
    }
    LossTrace { breakpoints, values, side: TraceSide::Right }
}

/// Query accuracies sorted in decreasing order, with whether each prediction
/// disagrees with the user's answer (`None` when not asked).
fn sorted_query_accuracies(
    acc: &AccuracyVector,
    queries: impl Iterator<Item = (ProbeIndex, Option<Sign>)>,
) -> Result<Vec<(f64, bool)>> {
    let mut v = queries
        .map(|(i, truth)| {
            let a = acc.accuracy(&i).ok_or_else(|| Error::domain(format!("no accuracy for query {i}")))?;
            let wrong = truth.is_some_and(|t| acc.prediction(&i) != Some(t));
            Ok((a, wrong))
        })
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() {
        return Err(Error::domain("the adaptive threshold needs at least one query"));
    }
    v.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(v)
}

/// Largest prefix length whose mean accuracy is at least `target` (0 if none).
fn prefix_cut(sorted_desc: &[(f64, bool)], target: f64) -> usize {
    let mut best = 0;
    let mut sum = 0.0;
    for (j, (a, _)) in sorted_desc.iter().enumerate() {
        sum += a;
        if sum / (j + 1) as f64 >= target {
            best = j + 1;
        }
    }
    best
}

fn cutoff_for(sorted_desc: &[(f64, bool)], cut: usize) -> f64 {
    if cut < sorted_desc.len() {
        sorted_desc[cut].0
    } else {
        0.0
    }
}

/// Adaptive cutoff `η*`: sort the queries' accuracies decreasingly, take the
/// longest prefix `J` whose mean is at least `target_accuracy`, and return the
/// `(J+1)`-th accuracy, or 0 when the whole query set qualifies.
pub fn bernoulli_threshold<'a>(
    acc: &AccuracyVector,
    queries: impl IntoIterator<Item = &'a ProbeIndex>,
    target_accuracy: f64,
) -> Result<f64> {
    if target_accuracy.is_nan() {
        return Err(Error::domain("target accuracy is NaN"));
    }
    let sorted = sorted_query_accuracies(acc, queries.into_iter().map(|i| (*i, None)))?;
    Ok(cutoff_for(&sorted, prefix_cut(&sorted, target_accuracy)))
}

/// Answers every probe with `π̂_i > η` using its prediction.
pub fn eta_set(acc: &AccuracyVector, eta: f64) -> ProbeAdaptedSet {
    acc.iter().filter(|(_, _, a)| *a > eta).map(|(i, s, _)| (*i, s)).collect()
}

/// Loss of the adaptive Bernoulli sets as a function of the target accuracy.
pub fn bernoulli_loss_trace(acc: &AccuracyVector, feedback: &UserFeedback) -> Result<LossTrace> {
    let sorted = sorted_query_accuracies(acc, feedback.answers().iter().map(|(i, s)| (*i, Some(*s))))?;
    let n = sorted.len();

    // Suffix maxima of prefix means: J(t) = max{J : max_{J' >= J} mean_{J'} >= t}.
    let mut means = Vec::with_capacity(n);
    let mut sum = 0.0;
    for (j, (a, _)) in sorted.iter().enumerate() {
        sum += a;
        means.push(sum / (j + 1) as f64);
    }
    let mut suffix_max = means.clone();
    for j in (0..n.saturating_sub(1)).rev() {
        suffix_max[j] = suffix_max[j].max(suffix_max[j + 1]);
    }
    let mut breakpoints = suffix_max.clone();
    breakpoints.sort_by(f64::total_cmp);
    breakpoints.dedup();

    let mut wrong_prefix = vec![0u32; n + 1];
    for (j, (_, wrong)) in sorted.iter().enumerate() {
        wrong_prefix[j + 1] = wrong_prefix[j] + u32::from(*wrong);
    }
    let loss_for_cut = |cut: usize| {
        let eta = cutoff_for(&sorted, cut);
        let answered = sorted.partition_point(|(a, _)| *a > eta);
        FppLoss::new(wrong_prefix[answered], answered as u32)
    };
    let cut_at = |t: f64| suffix_max.iter().rposition(|m| *m >= t).map_or(0, |j| j + 1);

    let mut values = Vec::with_capacity(breakpoints.len() + 1);
    values.push(loss_for_cut(n));
    for k in 0..breakpoints.len() {
        let cut = match breakpoints.get(k + 1) {
            Some(&next) => cut_at(next),
            None => 0,
        };
        values.push(loss_for_cut(cut));
    }
    LossTrace::new(breakpoints, values, TraceSide::Left)
}
