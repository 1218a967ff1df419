//! Calibration of the nested set families from a weakly supervised sample.
//!
//! Each example contributes a [`LossTrace`]: its FPP loss as a function of the
//! family parameter (`λ` for threshold sets, the nominal target accuracy for
//! Bernoulli sets). Step-down and step-up take a conformal quantile of
//! per-example scores read off the traces; fixed-sequence testing walks a grid
//! of parameters with Hoeffding–Bentkus p-values.
//!
//! Build a [`PreparedSample`] once to reuse traces across many `(α, δ)` pairs.

mod conformal;
mod fst;
mod hb;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use conformal::{conformal_quantile, conformal_rank, stepdown_score, stepup_score, ErrEstimate};
pub use fst::{even_grid, fst_select};
pub(crate) use hb::tolerant_ceil;
pub use hb::{bernoulli_kl, binomial_cdf, hb_pvalue};

use crate::error::{Error, Result};
use crate::loss::UserFeedback;
use crate::nested::{
    bernoulli_loss_trace, bernoulli_threshold, eta_set, loss_trace, threshold_set, AccuracyVector, LossTrace,
    ScoreVector,
};
use crate::par::Exec;
use crate::probe::{FamilyKind, Label, ProbeAdaptedSet, ProbeIndex};

/// Grid size used by fixed-sequence testing when no grid is given.
pub const DEFAULT_GRID_SIZE: usize = 100;
/// Default step-up tolerance as a fraction of the parameter span.
pub const DEFAULT_EPSILON_FRACTION: f64 = 1e-6;

/// Which nested family of sets is being calibrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetFamily {
    /// `C_λ`: answer probes with `|s_i| > λ`.
    Threshold,
    /// `C_{η*(x, t)}`: answer the most confident probes so that their mean
    /// estimated accuracy reaches the target `t`.
    Bernoulli,
}

impl SetFamily {
    pub fn tag(self) -> &'static str {
        match self {
            SetFamily::Threshold => "threshold",
            SetFamily::Bernoulli => "bernoulli",
        }
    }
}

impl fmt::Display for SetFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for SetFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold" => Ok(SetFamily::Threshold),
            "bernoulli" => Ok(SetFamily::Bernoulli),
            _ => Err(Error::Parse(format!("unknown set family '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "stepdown")]
    StepDown,
    #[serde(rename = "stepup")]
    StepUp,
    #[serde(rename = "fst")]
    Fst,
    #[serde(rename = "fst-quantile")]
    FstQuantile,
    /// Uncalibrated Bernoulli sets at target accuracy `1 - δ`.
    #[serde(rename = "nominal")]
    Nominal,
}

impl Method {
    pub fn tag(self) -> &'static str {
        match self {
            Method::StepDown => "stepdown",
            Method::StepUp => "stepup",
            Method::Fst => "fst",
            Method::FstQuantile => "fst-quantile",
            Method::Nominal => "nominal",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stepdown" => Ok(Method::StepDown),
            "stepup" => Ok(Method::StepUp),
            "fst" => Ok(Method::Fst),
            "fst-quantile" => Ok(Method::FstQuantile),
            "nominal" => Ok(Method::Nominal),
            _ => Err(Error::Parse(format!("unknown method '{s}'"))),
        }
    }
}

/// One observed example: model outputs plus the user's answers.
#[derive(Debug, Clone, PartialEq)]
pub struct WeakExample {
    pub id: String,
    pub scores: Option<ScoreVector>,
    pub acc: Option<AccuracyVector>,
    pub feedback: UserFeedback,
    /// Ground truth, when known. Never used for calibration.
    pub label: Option<Label>,
}

impl WeakExample {
    /// Loss trace of this example under `family`.
    pub fn trace(&self, family: SetFamily) -> Result<LossTrace> {
        match family {
            SetFamily::Threshold => {
                let scores = self.scores.as_ref().ok_or_else(|| {
                    Error::domain(format!("example '{}' has no scores for the threshold family", self.id))
                })?;
                Ok(loss_trace(scores, &self.feedback))
            }
            SetFamily::Bernoulli => {
                let acc = self.acc.as_ref().ok_or_else(|| {
                    Error::domain(format!("example '{}' has no accuracies for the Bernoulli family", self.id))
                })?;
                bernoulli_loss_trace(acc, &self.feedback)
            }
        }
    }

    pub fn inputs(&self) -> InstanceInputs {
        InstanceInputs {
            scores: self.scores.clone(),
            acc: self.acc.clone(),
            queries: Some(self.feedback.queries().copied().collect()),
        }
    }
}

/// A nonempty calibration (or holdout) sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibSample {
    examples: Vec<WeakExample>,
    probe_family: Option<FamilyKind>,
}

impl CalibSample {
    pub fn new(examples: Vec<WeakExample>) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::domain("a calibration sample needs at least one example"));
        }
        Ok(Self { examples, probe_family: None })
    }

    /// Records the probe family the examples were drawn from.
    pub fn with_probe_family(mut self, kind: FamilyKind) -> Self {
        self.probe_family = Some(kind);
        self
    }

    pub fn examples(&self) -> &[WeakExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn probe_family(&self) -> Option<FamilyKind> {
        self.probe_family
    }
}

/// Model outputs for a new instance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InstanceInputs {
    pub scores: Option<ScoreVector>,
    pub acc: Option<AccuracyVector>,
    /// The instance's query set; required by the Bernoulli family.
    pub queries: Option<Vec<ProbeIndex>>,
}

/// Result of a calibration run. Enough to rebuild the set for any new instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationOutcome {
    pub method: Method,
    pub family: SetFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_family: Option<FamilyKind>,
    /// Parameter the sets are built with: `λ` for threshold sets, the target
    /// accuracy for Bernoulli sets.
    pub parameter: f64,
    /// Raw conformal quantile, before any `ε` or continuity adjustment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_value: Option<f64>,
    /// 1-based rank of the conformal quantile among the sorted scores.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_index: Option<usize>,
    /// 1-based index of the selected grid point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub delta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_fst: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores_sorted: Option<Vec<f64>>,
    pub n: usize,
    /// Set when no parameter could be certified; every probe is then abstained on.
    #[serde(default)]
    pub abstain_all: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
    /// Digest of the calibration data.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created_from: Option<String>,
}

impl CalibrationOutcome {
    fn base(method: Method, family: SetFamily, parameter: f64, delta: f64, n: usize) -> Self {
        Self {
            method,
            family,
            probe_family: None,
            parameter,
            quantile_value: None,
            quantile_index: None,
            grid_index: None,
            alpha: None,
            delta,
            epsilon: None,
            alpha_fst: None,
            grid: None,
            p_values: None,
            scores_sorted: None,
            n,
            abstain_all: false,
            warning: None,
            created_from: None,
        }
    }
}

/// Builds the predictive set for a new instance.
pub fn apply_outcome(outcome: &CalibrationOutcome, inputs: &InstanceInputs) -> Result<ProbeAdaptedSet> {
    if outcome.abstain_all {
        return Ok(ProbeAdaptedSet::full());
    }
    match outcome.family {
        SetFamily::Threshold => {
            let scores = inputs
                .scores
                .as_ref()
                .ok_or_else(|| Error::domain("threshold outcome applied to an instance without scores"))?;
            Ok(threshold_set(scores, outcome.parameter))
        }
        SetFamily::Bernoulli => {
            let acc = inputs
                .acc
                .as_ref()
                .ok_or_else(|| Error::domain("Bernoulli outcome applied to an instance without accuracies"))?;
            let queries = inputs
                .queries
                .as_ref()
                .ok_or_else(|| Error::domain("the Bernoulli family needs the instance's query set"))?;
            let eta = bernoulli_threshold(acc, queries, outcome.parameter)?;
            Ok(eta_set(acc, eta))
        }
    }
}

fn check_unit_open(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x < 1.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must lie in (0, 1), got {x}")))
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&delta) {
        Ok(())
    } else {
        Err(Error::domain(format!("delta must lie in [0, 1], got {delta}")))
    }
}

/// Per-example traces of a sample under one family, computed once.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    family: SetFamily,
    probe_family: Option<FamilyKind>,
    traces: Vec<LossTrace>,
    span: f64,
}

impl PreparedSample {
    pub fn new(sample: &CalibSample, family: SetFamily, exec: Exec) -> Result<Self> {
        let traces = exec.try_map(sample.examples(), |e| e.trace(family))?;
        let span = match family {
            SetFamily::Threshold => {
                sample.examples().iter().filter_map(|e| e.scores.as_ref()).fold(0.0_f64, |m, s| m.max(s.max_abs()))
            }
            SetFamily::Bernoulli => 1.0,
        };
        Ok(Self { family, probe_family: sample.probe_family(), traces, span })
    }

    pub fn from_traces(family: SetFamily, traces: Vec<LossTrace>, span: f64) -> Result<Self> {
        if traces.is_empty() {
            return Err(Error::domain("a calibration sample needs at least one example"));
        }
        Ok(Self { family, probe_family: None, traces, span })
    }

    pub fn family(&self) -> SetFamily {
        self.family
    }

    pub fn traces(&self) -> &[LossTrace] {
        &self.traces
    }

    pub fn len(&self) -> usize {
        self.traces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.traces.is_empty()
    }

    /// Largest parameter value at which any set still answers a probe.
    pub fn span(&self) -> f64 {
        self.span
    }

    fn outcome(&self, method: Method, parameter: f64, delta: f64) -> CalibrationOutcome {
        let mut o = CalibrationOutcome::base(method, self.family, parameter, delta, self.len());
        o.probe_family = self.probe_family;
        o
    }

    /// Conformal parameter from per-example scores. For left-continuous traces
    /// the quantile is an unattained infimum, so the parameter moves to the
    /// next float above it.
    fn conformal(
        &self,
        method: Method,
        scores: Vec<f64>,
        delta: f64,
        alpha: f64,
        shift: i64,
    ) -> Result<CalibrationOutcome> {
        let (q, k) = conformal::conformal_quantile_shifted(&scores, alpha, shift)?;
        let parameter = match self.family {
            SetFamily::Threshold => q,
            SetFamily::Bernoulli => q.next_up(),
        };
        let mut sorted = scores;
        sorted.sort_by(f64::total_cmp);
        let mut o = self.outcome(method, parameter, delta);
        o.quantile_value = Some(q);
        o.quantile_index = Some(k);
        o.alpha = Some(alpha);
        o.scores_sorted = Some(sorted);
        Ok(o)
    }

    pub fn stepdown_scores(&self, delta: f64) -> Vec<f64> {
        self.traces.iter().map(|t| stepdown_score(t, delta)).collect()
    }

    pub fn stepup_scores(&self, delta: f64) -> Vec<f64> {
        self.traces.iter().map(|t| stepup_score(t, delta)).collect()
    }

    pub fn stepdown(&self, delta: f64, alpha: f64) -> Result<CalibrationOutcome> {
        self.stepdown_shifted(delta, alpha, 0)
    }

    pub(crate) fn stepdown_shifted(&self, delta: f64, alpha: f64, shift: i64) -> Result<CalibrationOutcome> {
        check_delta(delta)?;
        self.conformal(Method::StepDown, self.stepdown_scores(delta), delta, alpha, shift)
    }

    /// Step-up calibration; `epsilon` defaults to a millionth of the span.
    pub fn stepup(&self, delta: f64, alpha: f64, epsilon: Option<f64>) -> Result<CalibrationOutcome> {
        check_delta(delta)?;
        let epsilon = epsilon.unwrap_or(DEFAULT_EPSILON_FRACTION * self.span.max(f64::MIN_POSITIVE));
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::domain(format!("epsilon must be positive, got {epsilon}")));
        }
        let mut o = self.conformal(Method::StepUp, self.stepup_scores(delta), delta, alpha, 0)?;
        o.parameter = o.quantile_value.unwrap_or(0.0) + epsilon;
        o.epsilon = Some(epsilon);
        Ok(o)
    }

    /// The default grid for fixed-sequence testing: `n_points` even steps up to the span.
    pub fn default_grid(&self, n_points: usize) -> Result<Vec<f64>> {
        even_grid(if self.span > 0.0 { self.span } else { 1.0 }, n_points)
    }

    /// Mean loss at each grid point.
    pub fn mean_losses(&self, grid: &[f64]) -> Vec<f64> {
        let n = self.len() as f64;
        grid.iter().map(|&g| self.traces.iter().map(|t| t.value_at(g).value()).sum::<f64>() / n).collect()
    }

    /// Fraction of examples with loss above `delta` at each grid point.
    pub fn exceedance_rates(&self, grid: &[f64], delta: f64) -> Vec<f64> {
        let n = self.len() as f64;
        grid.iter().map(|&g| self.traces.iter().filter(|t| t.value_at(g).exceeds(delta)).count() as f64 / n).collect()
    }

    fn fst_from_means(
        &self,
        method: Method,
        means: Vec<f64>,
        level: f64,
        delta: f64,
        alpha_fst: f64,
        grid: Vec<f64>,
    ) -> Result<CalibrationOutcome> {
        let n = self.len();
        let p_values = means.iter().map(|m| hb_pvalue(*m, n, level)).collect::<Result<Vec<_>>>()?;
        let selected = fst_select(&p_values, alpha_fst);
        let mut o = match selected {
            Some(k) => {
                let mut o = self.outcome(method, grid[k], delta);
                o.grid_index = Some(k + 1);
                o
            }
            None => {
                let last = grid[grid.len() - 1];
                let step = if grid.len() > 1 { last - grid[grid.len() - 2] } else { last };
                let mut o = self.outcome(method, last + step, delta);
                o.abstain_all = true;
                o.warning = Some("no grid point was certified; abstaining on every probe".into());
                o
            }
        };
        o.alpha_fst = Some(alpha_fst);
        o.grid = Some(grid);
        o.p_values = Some(p_values);
        Ok(o)
    }

    /// Fixed-sequence testing of `E[loss] > delta` along the grid.
    pub fn fst(&self, delta: f64, alpha_fst: f64, grid: Option<Vec<f64>>) -> Result<CalibrationOutcome> {
        check_unit_open("delta", delta)?;
        check_unit_open("alpha_fst", alpha_fst)?;
        let grid = match grid {
            Some(g) => g,
            None => self.default_grid(DEFAULT_GRID_SIZE)?,
        };
        fst::validate_grid(&grid)?;
        let means = self.mean_losses(&grid);
        self.fst_from_means(Method::Fst, means, delta, delta, alpha_fst, grid)
    }

    /// Fixed-sequence testing of `P(loss > delta) > alpha` along the grid.
    pub fn fst_quantile(
        &self,
        delta: f64,
        alpha: f64,
        alpha_fst: f64,
        grid: Option<Vec<f64>>,
    ) -> Result<CalibrationOutcome> {
        if delta.is_nan() || delta < 0.0 {
            return Err(Error::domain(format!("delta must be nonnegative, got {delta}")));
        }
        check_unit_open("alpha", alpha)?;
        check_unit_open("alpha_fst", alpha_fst)?;
        let grid = match grid {
            Some(g) => g,
            None => self.default_grid(DEFAULT_GRID_SIZE)?,
        };
        fst::validate_grid(&grid)?;
        let rates = self.exceedance_rates(&grid, delta);
        let mut o = self.fst_from_means(Method::FstQuantile, rates, alpha, delta, alpha_fst, grid)?;
        o.alpha = Some(alpha);
        Ok(o)
    }

    /// Empirical step-up slack on this (holdout) sample.
    pub fn estimate_err(&self, lambda: f64, epsilon: f64, delta: f64) -> ErrEstimate {
        conformal::err_estimate(&self.traces, lambda, epsilon, delta)
    }

    /// Runs `method` with the defaults for anything not given.
    pub fn run(&self, method: Method, params: &MethodParams) -> Result<CalibrationOutcome> {
        let alpha = params.alpha;
        match method {
            Method::StepDown => self.stepdown(params.delta, alpha),
            Method::StepUp => self.stepup(params.delta, alpha, params.epsilon),
            Method::Fst => self.fst(params.delta, params.alpha_fst, self.grid_for(params)?),
            Method::FstQuantile => self.fst_quantile(params.delta, alpha, params.alpha_fst, self.grid_for(params)?),
            Method::Nominal => nominal_outcome(self.family, params.delta, self.len(), self.probe_family),
        }
    }

    fn grid_for(&self, params: &MethodParams) -> Result<Option<Vec<f64>>> {
        match (&params.grid, params.grid_size) {
            (Some(g), _) => Ok(Some(g.clone())),
            (None, Some(size)) => self.default_grid(size).map(Some),
            (None, None) => Ok(None),
        }
    }
}

/// Parameters shared by the calibration methods.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodParams {
    pub alpha: f64,
    pub delta: f64,
    pub epsilon: Option<f64>,
    pub alpha_fst: f64,
    pub grid: Option<Vec<f64>>,
    pub grid_size: Option<usize>,
}

impl MethodParams {
    pub fn new(alpha: f64, delta: f64) -> Self {
        Self { alpha, delta, epsilon: None, alpha_fst: 0.1, grid: None, grid_size: None }
    }
}

fn nominal_outcome(
    family: SetFamily,
    delta: f64,
    n: usize,
    probe_family: Option<FamilyKind>,
) -> Result<CalibrationOutcome> {
    if family != SetFamily::Bernoulli {
        return Err(Error::domain("the nominal method only applies to the Bernoulli family"));
    }
    check_delta(delta)?;
    let mut o = CalibrationOutcome::base(Method::Nominal, family, 1.0 - delta, delta, n);
    o.probe_family = probe_family;
    Ok(o)
}

/// Step-down conformal calibration.
pub fn calibrate_stepdown(
    sample: &CalibSample,
    family: SetFamily,
    delta: f64,
    alpha: f64,
) -> Result<CalibrationOutcome> {
    PreparedSample::new(sample, family, Exec::default())?.stepdown(delta, alpha)
}

/// Step-up conformal calibration; the sets use `λ̂ + ε`.
pub fn calibrate_stepup(
    sample: &CalibSample,
    family: SetFamily,
    delta: f64,
    alpha: f64,
    epsilon: Option<f64>,
) -> Result<CalibrationOutcome> {
    PreparedSample::new(sample, family, Exec::default())?.stepup(delta, alpha, epsilon)
}

/// Fixed-sequence testing for expected-loss control.
pub fn calibrate_fst(
    sample: &CalibSample,
    family: SetFamily,
    delta: f64,
    alpha_fst: f64,
    grid: Option<Vec<f64>>,
) -> Result<CalibrationOutcome> {
    PreparedSample::new(sample, family, Exec::default())?.fst(delta, alpha_fst, grid)
}

/// Fixed-sequence testing for quantile control.
pub fn calibrate_fst_quantile(
    sample: &CalibSample,
    family: SetFamily,
    delta: f64,
    alpha: f64,
    alpha_fst: f64,
    grid: Option<Vec<f64>>,
) -> Result<CalibrationOutcome> {
    PreparedSample::new(sample, family, Exec::default())?.fst_quantile(delta, alpha, alpha_fst, grid)
}

/// Bernoulli sets at the nominal target accuracy `1 - delta`, with no data.
pub fn calibrate_nominal(delta: f64) -> Result<CalibrationOutcome> {
    nominal_outcome(SetFamily::Bernoulli, delta, 0, None)
}

/// Fraction of `holdout` examples whose loss is within `delta` somewhere on
/// `[0, λ]` but above `delta` at `λ + ε`.
pub fn estimate_err(
    holdout: &CalibSample,
    family: SetFamily,
    lambda: f64,
    epsilon: f64,
    delta: f64,
) -> Result<ErrEstimate> {
    Ok(PreparedSample::new(holdout, family, Exec::default())?.estimate_err(lambda, epsilon, delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probe::Sign;

    fn pair(i: u32, j: u32) -> ProbeIndex {
        ProbeIndex::Pair(i, j)
    }

    fn example(probes: &[(f64, bool)]) -> WeakExample {
        let mut scores = std::collections::BTreeMap::new();
        let mut answers = std::collections::BTreeMap::new();
        for (k, (s, correct)) in probes.iter().enumerate() {
            let idx = pair(0, k as u32 + 1);
            scores.insert(idx, *s);
            let pred = Sign::of(*s);
            answers.insert(idx, if *correct { pred } else { pred.flip() });
        }
        WeakExample {
            id: "x".into(),
            scores: Some(ScoreVector::new(scores).unwrap()),
            acc: None,
            feedback: UserFeedback::new(answers),
            label: None,
        }
    }

    #[test]
    fn single_all_correct_example_gives_zero() {
        let sample = CalibSample::new(vec![example(&[(1.0, true), (-2.0, true)])]).unwrap();
        let o = calibrate_stepdown(&sample, SetFamily::Threshold, 0.1, 0.5).unwrap();
        assert_eq!(o.parameter, 0.0);
        assert_eq!(o.quantile_index, Some(1));
    }

    #[test]
    fn stepdown_scores_one_to_four() {
        // A lone wrong probe with |s| = c has step-down score c.
        let ex = (1..=4).map(|c| example(&[(c as f64, false)])).collect();
        let sample = CalibSample::new(ex).unwrap();
        let o = calibrate_stepdown(&sample, SetFamily::Threshold, 0.0, 0.2).unwrap();
        assert_eq!(o.parameter, 4.0);
        assert_eq!(o.scores_sorted, Some(vec![1.0, 2.0, 3.0, 4.0]));
    }

    #[test]
    fn stepup_falls_below_stepdown_on_non_monotone_trace() {
        let sample = CalibSample::new(vec![example(&[(1.0, true), (2.0, true), (3.0, false)])]).unwrap();
        let down = calibrate_stepdown(&sample, SetFamily::Threshold, 0.4, 0.5).unwrap();
        let up = calibrate_stepup(&sample, SetFamily::Threshold, 0.4, 0.5, Some(0.01)).unwrap();
        assert_eq!(down.parameter, 3.0);
        assert_eq!(up.quantile_value, Some(0.0));
        assert_eq!(up.parameter, 0.01);
        assert!(calibrate_stepup(&sample, SetFamily::Threshold, 0.4, 0.5, Some(0.0)).is_err());
        let default = calibrate_stepup(&sample, SetFamily::Threshold, 0.4, 0.5, None).unwrap();
        assert_eq!(default.epsilon, Some(3e-6));
    }

    #[test]
    fn fst_abstains_when_nothing_is_certified() {
        let sample = CalibSample::new(vec![example(&[(1.0, false)]); 3]).unwrap();
        let o = calibrate_fst(&sample, SetFamily::Threshold, 0.1, 0.1, Some(vec![0.5, 1.0])).unwrap();
        // Three examples cannot push a p-value below 0.1 at δ = 0.1.
        assert!(o.abstain_all);
        assert_eq!(o.parameter, 1.5);
        assert_eq!(o.p_values.as_ref().unwrap().len(), 2);
        let set = apply_outcome(&o, &sample.examples()[0].inputs()).unwrap();
        assert!(set.is_full_space());
        assert!(calibrate_fst(&sample, SetFamily::Threshold, 0.1, 0.1, Some(vec![1.0, 0.5])).is_err());
    }

    #[test]
    fn fst_selects_first_certified_point() {
        let mut ex = vec![example(&[(1.0, true), (2.0, true)]); 60];
        ex.push(example(&[(0.5, false), (2.0, true)]));
        let sample = CalibSample::new(ex).unwrap();
        let o = calibrate_fst(&sample, SetFamily::Threshold, 0.2, 0.1, Some(vec![0.25, 0.75, 2.5])).unwrap();
        assert_eq!(o.grid_index, Some(1));
        assert_eq!(o.parameter, 0.25);
        let q = calibrate_fst_quantile(&sample, SetFamily::Threshold, 1.0, 0.1, 0.1, Some(vec![1.0])).unwrap();
        approx::assert_relative_eq!(q.p_values.unwrap()[0], 0.9f64.powi(61), max_relative = 1e-12);
    }

    #[test]
    fn apply_threshold_and_bernoulli() {
        let ex = example(&[(1.0, true), (-3.0, true)]);
        let mut o =
            calibrate_stepdown(&CalibSample::new(vec![ex.clone()]).unwrap(), SetFamily::Threshold, 0.0, 0.5).unwrap();
        assert_eq!(apply_outcome(&o, &ex.inputs()).unwrap().num_answered(), 2);
        o.parameter = 5.0;
        assert!(apply_outcome(&o, &ex.inputs()).unwrap().is_full_space());

        let acc = AccuracyVector::from_entries([(pair(0, 1), Sign::Pos, 0.99), (pair(0, 2), Sign::Neg, 0.6)]).unwrap();
        let inputs = InstanceInputs { scores: None, acc: Some(acc), queries: Some(vec![pair(0, 1), pair(0, 2)]) };
        let nominal = calibrate_nominal(0.0).unwrap();
        assert_eq!(nominal.parameter, 1.0);
        assert!(apply_outcome(&nominal, &inputs).unwrap().is_full_space());
        let lax = calibrate_nominal(0.3).unwrap();
        assert_eq!(apply_outcome(&lax, &inputs).unwrap().num_answered(), 2);
        let no_queries = InstanceInputs { queries: None, ..inputs };
        assert!(apply_outcome(&lax, &no_queries).is_err());
    }

    #[test]
    fn outcome_json_round_trip() {
        let sample = CalibSample::new(vec![example(&[(1.0, true)]); 4]).unwrap();
        let o = calibrate_fst(&sample, SetFamily::Threshold, 0.3, 0.1, None).unwrap();
        let json = serde_json::to_string(&o).unwrap();
        assert!(json.contains("\"method\":\"fst\""));
        assert!(!json.contains("scores_sorted"));
        let back: CalibrationOutcome = serde_json::from_str(&json).unwrap();
        assert_eq!(back, o);
    }
}
