//! Test-set evaluation of a calibration outcome.

use serde::{Deserialize, Serialize};

use crate::calibrate::{apply_outcome, tolerant_ceil, CalibrationOutcome, Method, SetFamily, WeakExample};
use crate::error::{Error, Result};
use crate::loss::{abstention, fpp_loss};
use crate::par::Exec;
use crate::probe::FamilyKind;

/// One step of an empirical CDF: the fraction of values `<= t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub t: f64,
    pub fraction: f64,
}

/// Empirical CDF at each distinct value, ascending. Ends at fraction 1.
pub fn ecdf(values: &[f64]) -> Vec<EcdfPoint> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<EcdfPoint> = Vec::new();
    for (k, x) in v.iter().enumerate() {
        let fraction = (k + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.t == *x => last.fraction = fraction,
            _ => out.push(EcdfPoint { t: *x, fraction }),
        }
    }
    out
}

/// `t,fraction` CSV of an ECDF.
pub fn ecdf_csv(points: &[EcdfPoint]) -> String {
    let mut s = String::from("t,fraction\n");
    for p in points {
        s.push_str(&format!("{},{}\n", p.t, p.fraction));
    }
    s
}

/// Smallest value whose empirical CDF reaches `level`: the `⌈m level⌉`-th
/// order statistic.
pub fn empirical_quantile(values: &[f64], level: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("quantile of an empty set"));
    }
    if !(0.0..=1.0).contains(&level) {
        return Err(Error::domain(format!("quantile level must lie in [0, 1], got {level}")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = (tolerant_ceil(v.len() as f64 * level) as usize).clamp(1, v.len());
    Ok(v[k - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub method: Method,
    pub family: SetFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_family: Option<FamilyKind>,
    pub parameter: f64,
    pub delta: f64,
    /// Level `α` of the reported loss quantile `Q_{1-α}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_quantile: Option<f64>,
    /// `Q_{1-α}(losses) - δ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub loss_quantile_gap: Option<f64>,
    pub mean_loss: f64,
    /// Fraction of test examples with loss above `δ`.
    pub exceedance_rate: f64,
    pub mean_abstention: f64,
    pub abstain_all: bool,
    pub loss_ecdf: Vec<EcdfPoint>,
    pub abstention_ecdf: Vec<EcdfPoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_digest: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Per-example results behind a report.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub losses: Vec<f64>,
    pub abstentions: Vec<f64>,
    pub report: EvalReport,
}

/// Summary statistics of per-example losses and abstentions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub loss_quantile: Option<f64>,
    pub mean_loss: f64,
    pub exceedance_rate: f64,
    pub mean_abstention: f64,
}

pub fn metrics(losses: &[f64], abstentions: &[f64], delta: f64, alpha: Option<f64>) -> Result<Metrics> {
    if losses.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    let n = losses.len() as f64;
    Ok(Metrics {
        loss_quantile: alpha.map(|a| empirical_quantile(losses, 1.0 - a)).transpose()?,
        mean_loss: losses.iter().sum::<f64>() / n,
        exceedance_rate: losses.iter().filter(|l| **l > delta).count() as f64 / n,
        mean_abstention: abstentions.iter().sum::<f64>() / n,
    })
}

/// Applies `outcome` to every test example. `alpha` overrides the quantile
/// level, which otherwise comes from the outcome.
pub fn evaluate(
    outcome: &CalibrationOutcome,
    test: &[WeakExample],
    test_family: Option<FamilyKind>,
    alpha: Option<f64>,
    exec: Exec,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::domain("empty test set"));
    }
    if let (Some(a), Some(b)) = (outcome.probe_family, test_family) {
        if a != b {
            return Err(Error::domain(format!("outcome was calibrated on {a} data but the test set is {b}")));
        }
    }
    let per_example = exec.try_map(test, |e| -> Result<(f64, f64)> {
        let set =
            apply_outcome(outcome, &e.inputs()).map_err(|err| Error::domain(format!("example '{}': {err}", e.id)))?;
        Ok((fpp_loss(&e.feedback, &set).value(), abstention(&e.feedback, &set)?))
    })?;
    let (losses, abstentions): (Vec<f64>, Vec<f64>) = per_example.into_iter().unzip();
    let alpha = alpha.or(outcome.alpha);
    let m = metrics(&losses, &abstentions, outcome.delta, alpha)?;
    let mut warnings = Vec::new();
    if outcome.abstain_all {
        warnings.push("outcome abstains on every probe".to_string());
    }
    let report = EvalReport {
        method: outcome.method,
        family: outcome.family,
        probe_family: outcome.probe_family.or(test_family),
        parameter: outcome.parameter,
        delta: outcome.delta,
        alpha,
        n: test.len(),
        loss_quantile: m.loss_quantile,
        loss_quantile_gap: m.loss_quantile.map(|q| q - outcome.delta),
        mean_loss: m.mean_loss,
        exceedance_rate: m.exceedance_rate,
        mean_abstention: m.mean_abstention,
        abstain_all: outcome.abstain_all,
        loss_ecdf: ecdf(&losses),
        abstention_ecdf: ecdf(&abstentions),
        calibration_digest: outcome.created_from.clone(),
        test_digest: None,
        warnings,
    };
    Ok(Evaluation { losses, abstentions, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibrate::{CalibSample, PreparedSample};
    use crate::synthetic::{generate, GeneratorConfig, Task};

    #[test]
    fn ecdf_shape() {
        let e = ecdf(&[0.5, 0.0, 0.5, 1.0]);
        assert_eq!(
            e,
            vec![
                EcdfPoint { t: 0.0, fraction: 0.25 },
                EcdfPoint { t: 0.5, fraction: 0.75 },
                EcdfPoint { t: 1.0, fraction: 1.0 }
            ]
        );
        assert_eq!(ecdf_csv(&e[..1]), "t,fraction\n0,0.25\n");
    }

    #[test]
    fn quantile_matches_ecdf() {
        let v = [0.3, 0.1, 0.2, 0.4, 0.0];
        assert_eq!(empirical_quantile(&v, 0.8).unwrap(), 0.3);
        assert_eq!(empirical_quantile(&v, 0.81).unwrap(), 0.4);
        assert_eq!(empirical_quantile(&v, 0.0).unwrap(), 0.0);
        for level in [0.1, 0.35, 0.5, 0.9, 1.0] {
            let q = empirical_quantile(&v, level).unwrap();
            let from_ecdf = ecdf(&v).into_iter().find(|p| p.fraction >= level - 1e-12).unwrap().t;
            assert_eq!(q, from_ecdf);
        }
        assert!(empirical_quantile(&[], 0.5).is_err());
    }

    #[test]
    fn abstain_all_gives_zero_loss_and_full_abstention() {
        let data = generate(&GeneratorConfig::new(Task::Ranking, 30, 4), Exec::default()).unwrap();
        let sample = CalibSample::new(data.examples.clone()).unwrap().with_probe_family(data.family.kind());
        let mut outcome =
            PreparedSample::new(&sample, SetFamily::Threshold, Exec::default()).unwrap().stepdown(0.2, 0.1).unwrap();
        outcome.abstain_all = true;
        let ev = evaluate(&outcome, &data.examples, Some(data.family.kind()), None, Exec::default()).unwrap();
        assert!(ev.losses.iter().all(|l| *l == 0.0));
        assert!(ev.abstentions.iter().all(|a| *a == 1.0));
        assert_eq!(ev.report.loss_quantile_gap, Some(-0.2));
        assert!(evaluate(&outcome, &[], None, None, Exec::default()).is_err());
        assert!(evaluate(&outcome, &data.examples, Some(FamilyKind::Bitvector), None, Exec::default()).is_err());
    }
}
