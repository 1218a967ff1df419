//! Step-down and step-up conformal scores, the conformal quantile, and the
//! step-up slack estimate.

use serde::{Deserialize, Serialize};

use super::hb::tolerant_ceil;
use crate::error::{Error, Result};
use crate::nested::LossTrace;

/// Smallest `λ` such that the loss stays at most `delta` on all of `[λ, ∞)`.
/// Zero when the whole trace is within `delta`; infinite if the final segment
/// exceeds it.
pub fn stepdown_score(trace: &LossTrace, delta: f64) -> f64 {
    let values = trace.values();
    match values.iter().rposition(|l| l.exceeds(delta)) {
        None => 0.0,
        Some(k) if k + 1 == values.len() => f64::INFINITY,
        Some(k) => trace.breakpoints()[k],
    }
}

/// Smallest `λ` at which the loss is at most `delta`.
pub fn stepup_score(trace: &LossTrace, delta: f64) -> f64 {
    match trace.values().iter().position(|l| !l.exceeds(delta)) {
        None => f64::INFINITY,
        Some(k) => trace.segment_start(k),
    }
}

/// 1-based rank `⌈(n+1)(1-α)⌉` of the conformal order statistic, clamped to `[1, n]`.
pub fn conformal_rank(n: usize, alpha: f64) -> Result<usize> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if n == 0 {
        return Err(Error::domain("conformal quantile of an empty sample"));
    }
    let k = tolerant_ceil((n as f64 + 1.0) * (1.0 - alpha)) as usize;
    Ok(k.clamp(1, n))
}

/// The `⌈(n+1)(1-α)⌉`-th smallest score (the maximum when that rank exceeds `n`).
pub fn conformal_quantile(scores: &[f64], alpha: f64) -> Result<f64> {
    conformal_quantile_shifted(scores, alpha, 0).map(|(q, _)| q)
}

/// Conformal quantile with the rank moved by `shift`, returning the value and
/// the 1-based rank used. `shift = 0` is the valid rule; other shifts exist
/// for mutation checks.
pub(crate) fn conformal_quantile_shifted(scores: &[f64], alpha: f64, shift: i64) -> Result<(f64, usize)> {
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::domain("scores contain NaN"));
    }
    let k = conformal_rank(scores.len(), alpha)?;
    let k = (k as i64 + shift).clamp(1, scores.len() as i64) as usize;
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((sorted[k - 1], k))
}

/// Empirical estimate of the step-up slack term: the fraction of examples
/// whose loss is within `delta` somewhere on `[0, λ]` but exceeds `delta` at
/// `λ + ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrEstimate {
    pub count: usize,
    pub n: usize,
    pub rate: f64,
    pub std_err: f64,
}

pub(crate) fn err_event(trace: &LossTrace, lambda: f64, epsilon: f64, delta: f64) -> bool {
    let last = trace.segment_index(lambda);
    let dips = trace.values()[..=last].iter().any(|l| !l.exceeds(delta));
    dips && trace.value_at(lambda + epsilon).exceeds(delta)
}

pub(crate) fn err_estimate(traces: &[LossTrace], lambda: f64, epsilon: f64, delta: f64) -> ErrEstimate {
    let n = traces.len();
    let count = traces.iter().filter(|t| err_event(t, lambda, epsilon, delta)).count();
    let rate = if n == 0 { 0.0 } else { count as f64 / n as f64 };
    let std_err = if n == 0 { 0.0 } else { (rate * (1.0 - rate) / n as f64).sqrt() };
    ErrEstimate { count, n, rate, std_err }
}
