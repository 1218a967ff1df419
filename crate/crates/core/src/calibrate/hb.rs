//! Hoeffding–Bentkus p-values and the binomial lower tail.

use crate::error::{Error, Result};

/// Bernoulli relative entropy `h(a, b) = a log(a/b) + (1-a) log((1-a)/(1-b))`,
/// with the `0 log 0 = 0` convention.
pub fn bernoulli_kl(a: f64, b: f64) -> f64 {
    let left = if a == 0.0 { 0.0 } else { a * (a.ln() - b.ln()) };
    let right = if a == 1.0 { 0.0 } else { (1.0 - a) * ((-a).ln_1p() - (-b).ln_1p()) };
    left + right
}

/// `⌈x⌉`, snapping values within a relative `1e-9` of an integer to that
/// integer so that products such as `100 * 0.07` land on 7.
pub(crate) fn tolerant_ceil(x: f64) -> f64 {
    let r = x.round();
    if (x - r).abs() <= 1e-9 * r.abs().max(1.0) {
        r
    } else {
        x.ceil()
    }
}

/// `P(Bin(n, p) <= m)` by direct summation of the probability mass function.
pub fn binomial_cdf(n: u64, p: f64, m: u64) -> f64 {
    if m >= n || p <= 0.0 {
        return 1.0;
    }
    if p >= 1.0 {
        return 0.0;
    }
    let log_first = n as f64 * (-p).ln_1p();
    let log_ratio = p.ln() - (-p).ln_1p();
    if log_first > -700.0 {
        let ratio = p / (1.0 - p);
        let mut term = (1.0 - p).powi(n as i32);
        if n > i32::MAX as u64 {
            term = log_first.exp();
        }
        let mut sum = term;
        for i in 0..m {
            term *= (n - i) as f64 / (i + 1) as f64 * ratio;
            sum += term;
        }
        sum.min(1.0)
    } else {
        // Terms underflow in linear space: accumulate log-terms instead.
        let mut log_terms = Vec::with_capacity(m as usize + 1);
        let mut lt = log_first;
        log_terms.push(lt);
        for i in 0..m {
            lt += ((n - i) as f64 / (i + 1) as f64).ln() + log_ratio;
            log_terms.push(lt);
        }
        let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let s: f64 = log_terms.iter().map(|l| (l - max).exp()).sum();
        (max + s.ln()).exp().min(1.0)
    }
}

/// Hoeffding–Bentkus p-value for `H: E[loss] > delta` given the mean of `n`
/// losses in `[0, 1]`:
/// `min(1, exp(-n h(min(L, δ), δ)), e P(Bin(n, δ) <= ⌈n L⌉))`.
pub fn hb_pvalue(mean_loss: f64, n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta must lie in (0, 1), got {delta}")));
    }
    if n == 0 {
        return Err(Error::domain("at least one loss is required"));
    }
    if !(-1e-9..=1.0 + 1e-9).contains(&mean_loss) {
        return Err(Error::domain(format!("mean loss must lie in [0, 1], got {mean_loss}")));
    }
    let mean = mean_loss.clamp(0.0, 1.0);
    let nf = n as f64;
    let hoeffding = (-nf * bernoulli_kl(mean.min(delta), delta)).exp();
    let m = tolerant_ceil(nf * mean) as u64;
    let bentkus = std::f64::consts::E * binomial_cdf(n as u64, delta, m);
    Ok(hoeffding.min(bentkus).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kl_edge_cases() {
        assert_relative_eq!(bernoulli_kl(0.0, 0.1), -(0.9f64.ln()), max_relative = 1e-15);
        assert_eq!(bernoulli_kl(0.3, 0.3), 0.0);
        assert_relative_eq!(bernoulli_kl(1.0, 0.5), 2f64.ln(), max_relative = 1e-15);
    }

    #[test]
    fn zero_mean_reduces_to_power() {
        let p = hb_pvalue(0.0, 10, 0.1).unwrap();
        assert_relative_eq!(p, 0.9f64.powi(10), max_relative = 1e-13);
        assert_relative_eq!(p, 0.348_678_440_1, max_relative = 1e-9);
    }

    #[test]
    fn mean_at_or_above_delta_gives_one() {
        assert_eq!(hb_pvalue(0.2, 50, 0.2).unwrap(), 1.0);
        assert_eq!(hb_pvalue(0.7, 50, 0.2).unwrap(), 1.0);
    }

    #[test]
    fn mid_range_example() {
        let p = hb_pvalue(0.1, 100, 0.2).unwrap();
        let hoeffding = (-100.0 * bernoulli_kl(0.1, 0.2)).exp();
        let bentkus = std::f64::consts::E * binomial_cdf(100, 0.2, 10);
        assert_eq!(p, hoeffding.min(bentkus));
        assert!((p - 0.0155).abs() < 5e-4, "{p}");
    }

    #[test]
    fn domain_errors() {
        assert!(hb_pvalue(0.1, 10, 0.0).is_err());
        assert!(hb_pvalue(0.1, 10, 1.0).is_err());
        assert!(hb_pvalue(0.1, 0, 0.5).is_err());
        assert!(hb_pvalue(1.5, 10, 0.5).is_err());
    }

    #[test]
    fn binomial_cdf_small_cases() {
        assert_eq!(binomial_cdf(5, 0.3, 5), 1.0);
        assert_relative_eq!(binomial_cdf(5, 0.3, 0), 0.7f64.powi(5), max_relative = 1e-15);
        assert_relative_eq!(binomial_cdf(2, 0.5, 1), 0.75, max_relative = 1e-15);
        // First term underflows; the log-space path still resolves the sum.
        assert_relative_eq!(binomial_cdf(2000, 0.5, 1000), 0.508_919_505_572_926_8, max_relative = 1e-10);
        assert_relative_eq!(binomial_cdf(3000, 0.2, 450), 8.279_610_088_940_85e-13, max_relative = 1e-8);
    }

    #[test]
    fn tolerant_ceil_snaps() {
        assert_eq!(tolerant_ceil(100.0 * 0.07), 7.0);
        assert_eq!(tolerant_ceil(7.2), 8.0);
        assert_eq!(tolerant_ceil(0.0), 0.0);
    }
}
