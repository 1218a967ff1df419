//! Slow, independent re-derivations of the fast paths and Monte-Carlo checks
//! of the calibration guarantees.
//!
//! Nothing here reuses the trace machinery of [`crate::nested`]: sets and
//! losses are rebuilt from their definitions at every evaluation point.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calibrate::{bernoulli_kl, PreparedSample, SetFamily, WeakExample};
use crate::error::{Error, Result};
use crate::loss::{FppLoss, UserFeedback};
use crate::nested::{eta_set, AccuracyVector, LossTrace, ScoreVector, TraceSide};
use crate::par::Exec;
use crate::probe::{ProbeAdaptedSet, ProbeFamily, ProbeIndex, Sign};
use crate::rng::{derive_seed, rng_from_seed};
use crate::synthetic::{generate_range, GeneratorConfig};

/// Largest number of scored probes the brute-force scans accept.
pub const MAX_ORACLE_PROBES: usize = 32;

/// Evaluation points for piecewise-constant functions with known breakpoints:
/// 0, every breakpoint, every midpoint between neighbours, and a right sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrid {
    points: Vec<f64>,
}

impl DenseGrid {
    pub fn new(breakpoints: impl IntoIterator<Item = f64>) -> Self {
        let mut b: Vec<f64> = breakpoints.into_iter().filter(|x| *x > 0.0).collect();
        b.sort_by(f64::total_cmp);
        b.dedup();
        let mut points = vec![0.0];
        let mut prev = 0.0;
        for x in &b {
            points.push((prev + x) / 2.0);
            points.push(*x);
            prev = *x;
        }
        points.push(prev + 1.0);
        points.dedup();
        Self { points }
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }
}

fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_ORACLE_PROBES {
        return Err(Error::Capacity { size: n as u128, limit: MAX_ORACLE_PROBES as u128 });
    }
    Ok(())
}

/// Threshold set at `lambda`, rebuilt probe by probe.
pub fn brute_threshold_set(scores: &ScoreVector, lambda: f64) -> ProbeAdaptedSet {
    let mut answers = BTreeMap::new();
    for (i, s) in scores.iter() {
        if s.abs() > lambda {
            answers.insert(*i, if *s < 0.0 { Sign::Neg } else { Sign::Pos });
        }
    }
    ProbeAdaptedSet::from_answers(answers)
}

/// FPP of `set` against `feedback` by direct counting.
pub fn brute_fpp(feedback: &UserFeedback, set: &ProbeAdaptedSet) -> FppLoss {
    let mut errors = 0;
    let mut answered = 0;
    for (q, truth) in feedback.answers() {
        if let Some(a) = set.answer(q) {
            answered += 1;
            if a != *truth {
                errors += 1;
            }
        }
    }
    FppLoss::new(errors, answered)
}

fn threshold_grid(scores: &ScoreVector) -> DenseGrid {
    DenseGrid::new(scores.iter().map(|(_, s)| s.abs()))
}

/// Threshold-family losses at every point of the dense grid.
pub fn brute_threshold_losses(scores: &ScoreVector, feedback: &UserFeedback) -> Result<Vec<(f64, FppLoss)>> {
    check_capacity(scores.len())?;
    Ok(threshold_grid(scores)
        .points()
        .iter()
        .map(|&l| (l, brute_fpp(feedback, &brute_threshold_set(scores, l))))
        .collect())
}

/// Smallest `λ` from which the loss stays at most `delta`, by dense scan.
pub fn brute_stepdown_score(scores: &ScoreVector, feedback: &UserFeedback, delta: f64) -> Result<f64> {
    let losses = brute_threshold_losses(scores, feedback)?;
    let mut best = f64::INFINITY;
    for (lambda, loss) in losses.iter().rev() {
        if loss.exceeds(delta) {
            break;
        }
        best = *lambda;
    }
    Ok(best)
}

/// Smallest `λ` at which the loss is at most `delta`, by dense scan.
pub fn brute_stepup_score(scores: &ScoreVector, feedback: &UserFeedback, delta: f64) -> Result<f64> {
    let losses = brute_threshold_losses(scores, feedback)?;
    Ok(losses.iter().find(|(_, l)| !l.exceeds(delta)).map_or(f64::INFINITY, |(lambda, _)| *lambda))
}

/// Adaptive Bernoulli cutoff by enumerating prefix means directly.
pub fn brute_bernoulli_threshold(acc: &AccuracyVector, queries: &[ProbeIndex], target: f64) -> Result<f64> {
    let mut a: Vec<f64> = queries
        .iter()
        .map(|q| acc.accuracy(q).ok_or_else(|| Error::domain(format!("no accuracy for {q}"))))
        .collect::<Result<_>>()?;
    if a.is_empty() {
        return Err(Error::domain("no queries"));
    }
    a.sort_by(|x, y| y.total_cmp(x));
    let mut j = 0;
    for len in 1..=a.len() {
        let mean = a[..len].iter().sum::<f64>() / len as f64;
        if mean >= target {
            j = len;
        }
    }
    Ok(if j == a.len() { 0.0 } else { a[j] })
}

/// Bernoulli-family loss at target accuracy `target`, from scratch.
pub fn brute_bernoulli_loss(acc: &AccuracyVector, feedback: &UserFeedback, target: f64) -> Result<FppLoss> {
    let queries: Vec<ProbeIndex> = feedback.queries().copied().collect();
    let eta = brute_bernoulli_threshold(acc, &queries, target)?;
    Ok(brute_fpp(feedback, &eta_set(acc, eta)))
}

/// Population targets `(λ_up, λ_down)`: the smallest `λ` with
/// `P(loss(λ) <= δ) >= 1 - α`, and the smallest `λ` with
/// `P(loss(λ') <= δ for all λ' >= λ) >= 1 - α`.
pub fn brute_lambda_targets(population: &[(ScoreVector, UserFeedback)], delta: f64, alpha: f64) -> Result<(f64, f64)> {
    if population.is_empty() {
        return Err(Error::domain("empty population"));
    }
    for (s, _) in population {
        check_capacity(s.len())?;
    }
    let grid = DenseGrid::new(population.iter().flat_map(|(s, _)| s.iter().map(|(_, v)| v.abs()).collect::<Vec<_>>()));
    let pts = grid.points();
    let m = population.len() as f64;
    let mut good_now = vec![0usize; pts.len()];
    let mut good_after = vec![0usize; pts.len()];
    for (scores, feedback) in population {
        let ok: Vec<bool> =
            pts.iter().map(|&l| !brute_fpp(feedback, &brute_threshold_set(scores, l)).exceeds(delta)).collect();
        let mut all = true;
        for k in (0..pts.len()).rev() {
            all &= ok[k];
            good_after[k] += usize::from(all);
            good_now[k] += usize::from(ok[k]);
        }
    }
    let first =
        |counts: &[usize]| counts.iter().position(|c| *c as f64 / m >= 1.0 - alpha).map_or(f64::INFINITY, |k| pts[k]);
    Ok((first(&good_now), first(&good_after)))
}

fn dyadic(p: f64) -> Result<BigRational> {
    BigRational::from_float(p).ok_or_else(|| Error::domain(format!("{p} is not finite")))
}

/// `P(Bin(n, p) <= m)` in exact rational arithmetic, rounded once at the end.
pub fn exact_binomial_cdf(n: u64, p: f64, m: u64) -> Result<f64> {
    Ok(exact_binomial_cdf_all(n, p)?[m.min(n) as usize])
}

/// `P(Bin(n, p) <= m)` for every `m` in `0..=n`.
pub fn exact_binomial_cdf_all(n: u64, p: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    // With p = P / D every term shares the denominator D^n, so the partial
    // sums stay integers and each is rounded once.
    let p = dyadic(p)?;
    let (big_p, big_d) = (p.numer().clone(), p.denom().clone());
    let big_q = &big_d - &big_p;
    let denom = num_traits::pow(big_d, n as usize);
    let mut q_pows = vec![BigInt::one()];
    for _ in 0..n {
        let next = q_pows.last().expect("nonempty") * &big_q;
        q_pows.push(next);
    }
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut binom = BigUint::one();
    let mut p_pow = BigInt::one();
    let mut sum = BigInt::zero();
    for k in 0..=n {
        if k > 0 {
            binom = binom * BigUint::from(n - k + 1) / BigUint::from(k);
            p_pow *= &big_p;
        }
        sum += BigInt::from(binom.clone()) * &p_pow * &q_pows[(n - k) as usize];
        out.push(BigRational::new_raw(sum.clone(), denom.clone()).to_f64().unwrap_or(f64::NAN));
    }
    Ok(out)
}

/// Hoeffding–Bentkus p-value for a mean loss of exactly `num / den`, with the
/// binomial tail taken from `exact_cdf` (as returned by [`exact_binomial_cdf_all`]).
pub fn oracle_hb_pvalue(num: u64, den: u64, n: u64, delta: f64, exact_cdf: &[f64]) -> f64 {
    let mean = num as f64 / den as f64;
    let a = mean.min(delta);
    // exp(-n h(a, δ)) as a product of powers.
    let hoeffding = if a == 0.0 {
        (1.0 - delta).powf(n as f64)
    } else {
        ((delta / a).powf(a) * ((1.0 - delta) / (1.0 - a)).powf(1.0 - a)).powf(n as f64)
    };
    // ⌈n num / den⌉ in integers.
    let m = (n * num).div_ceil(den).min(n);
    let bentkus = std::f64::consts::E * exact_cdf[m as usize];
    hoeffding.min(bentkus).min(1.0)
}

/// An empirical frequency with its binomial standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McRate {
    pub successes: usize,
    pub trials: usize,
    pub rate: f64,
    pub std_err: f64,
}

impl McRate {
    pub fn from_counts(successes: usize, trials: usize) -> Self {
        let rate = successes as f64 / trials as f64;
        Self { successes, trials, rate, std_err: (rate * (1.0 - rate) / trials as f64).sqrt() }
    }

    /// Standard error at a nominal probability, used for pass thresholds.
    pub fn nominal_std_err(p: f64, trials: usize) -> f64 {
        (p * (1.0 - p) / trials as f64).sqrt()
    }
}

/// A sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McMean {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

impl McMean {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
        Self { mean, std_err: (var / n).sqrt(), draws: values.len() }
    }
}

/// A guarantee to test by simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum GuaranteeCheck {
    /// Step-down calibration on `n_cal` generated examples; the event is
    /// `FPP <= delta` on one fresh test example. `quantile_shift` moves the
    /// conformal rank and must be 0 for the valid rule.
    StepDownVar {
        generator: GeneratorConfig,
        family: SetFamily,
        n_cal: usize,
        alpha: f64,
        delta: f64,
        quantile_shift: i64,
    },
    /// Step-up calibration; the event is `FPP > delta` on a fresh test example.
    StepUpExceedance { generator: GeneratorConfig, family: SetFamily, n_cal: usize, alpha: f64, delta: f64 },
    /// Fixed-sequence testing on one-probe examples with `|s| ~ U(0, 1)` and
    /// each prediction wrong with probability `wrong_prob`, so the expected
    /// loss at `λ` is `wrong_prob (1 - λ)`. The event is selecting a grid
    /// point whose expected loss exceeds `delta`.
    FstExpectation { n: usize, alpha_fst: f64, delta: f64, grid_size: usize, wrong_prob: f64 },
}

fn one_probe_example(rng: &mut impl Rng, wrong_prob: f64) -> WeakExample {
    let idx = ProbeIndex::Pair(1, 2);
    let s: f64 = rng.random();
    let s = if rng.random_bool(0.5) { s } else { -s };
    let pred = Sign::of(s);
    let truth = if rng.random_bool(wrong_prob) { pred.flip() } else { pred };
    WeakExample {
        id: String::new(),
        scores: Some(ScoreVector::new([(idx, s)].into()).expect("finite")),
        acc: None,
        feedback: [(idx, truth)].into_iter().collect(),
        label: None,
    }
}

fn run_trial(check: &GuaranteeCheck, family_cache: Option<&ProbeFamily>, seed: u64) -> Result<bool> {
    match check {
        GuaranteeCheck::StepDownVar { generator, family, n_cal, alpha, delta, quantile_shift } => {
            let config = GeneratorConfig { seed, ..generator.clone() };
            let probe_family = family_cache.expect("generator family");
            let mut examples = generate_range(&config, probe_family, 0, n_cal + 1, Exec::Sequential)?;
            let test = examples.pop().expect("test example");
            let traces = examples.iter().map(|e| e.trace(*family)).collect::<Result<Vec<_>>>()?;
            let prepared = PreparedSample::from_traces(*family, traces, 1.0)?;
            let outcome = prepared.stepdown_shifted(*delta, *alpha, *quantile_shift)?;
            let loss = test.trace(*family)?.value_at(outcome.parameter);
            Ok(!loss.exceeds(*delta))
        }
        GuaranteeCheck::StepUpExceedance { generator, family, n_cal, alpha, delta } => {
            let config = GeneratorConfig { seed, ..generator.clone() };
            let probe_family = family_cache.expect("generator family");
            let mut examples = generate_range(&config, probe_family, 0, n_cal + 1, Exec::Sequential)?;
            let test = examples.pop().expect("test example");
            let sample = crate::calibrate::CalibSample::new(examples)?;
            let prepared = PreparedSample::new(&sample, *family, Exec::Sequential)?;
            let outcome = prepared.stepup(*delta, *alpha, None)?;
            Ok(test.trace(*family)?.value_at(outcome.parameter).exceeds(*delta))
        }
        GuaranteeCheck::FstExpectation { n, alpha_fst, delta, grid_size, wrong_prob } => {
            let mut rng = rng_from_seed(seed);
            let examples: Vec<WeakExample> = (0..*n).map(|_| one_probe_example(&mut rng, *wrong_prob)).collect();
            let sample = crate::calibrate::CalibSample::new(examples)?;
            let prepared = PreparedSample::new(&sample, SetFamily::Threshold, Exec::Sequential)?;
            let grid = crate::calibrate::even_grid(1.0, *grid_size)?;
            let outcome = prepared.fst(*delta, *alpha_fst, Some(grid))?;
            if outcome.abstain_all {
                return Ok(false);
            }
            let true_loss = wrong_prob * (1.0 - outcome.parameter.min(1.0));
            Ok(true_loss > *delta)
        }
    }
}

/// Runs `trials` independent repetitions of `check` and reports how often its
/// event occurred.
pub fn mc_guarantee_check(check: &GuaranteeCheck, trials: usize, seed: u64, exec: Exec) -> Result<McRate> {
    if trials < 100 {
        return Err(Error::domain(format!("at least 100 trials are required, got {trials}")));
    }
    let family = match check {
        GuaranteeCheck::StepDownVar { generator, .. } | GuaranteeCheck::StepUpExceedance { generator, .. } => {
            generator.validate()?;
            Some(generator.family()?)
        }
        GuaranteeCheck::FstExpectation { .. } => None,
    };
    let results = exec.map_range(trials, |t| run_trial(check, family.as_ref(), derive_seed(seed, t as u64)));
    let mut successes = 0;
    for r in results {
        successes += usize::from(r?);
    }
    Ok(McRate::from_counts(successes, trials))
}

/// Monte-Carlo conditional expected FPP of the adaptive Bernoulli set when
/// every queried probe is correct independently with probability `pi[i]`
/// and the model's accuracy estimates are exact.
pub fn mc_bernoulli_expected_fpp(pi: &[f64], target: f64, draws: usize, seed: u64, exec: Exec) -> Result<McMean> {
    if pi.is_empty() || draws < 2 {
        return Err(Error::domain("need at least one probe and two draws"));
    }
    let indices: Vec<ProbeIndex> = (0..pi.len() as u32).map(ProbeIndex::Bit).collect();
    let acc = AccuracyVector::from_entries(indices.iter().zip(pi).map(|(i, p)| (*i, Sign::Pos, *p)))?;
    let eta = crate::nested::bernoulli_threshold(&acc, &indices, target)?;
    let set = eta_set(&acc, eta);
    let losses = exec.map_range(draws, |d| {
        let mut rng = rng_from_seed(derive_seed(seed, d as u64));
        let feedback: UserFeedback =
            indices.iter().zip(pi).map(|(i, p)| (*i, Sign::from_bool(rng.random_bool(*p)))).collect();
        brute_fpp(&feedback, &set).value()
    });
    Ok(McMean::from_values(&losses))
}

/// Exact conditional expected FPP of the same set: the mean of `1 - π` over
/// the answered probes.
pub fn exact_bernoulli_expected_fpp(pi: &[f64], target: f64) -> Result<f64> {
    let indices: Vec<ProbeIndex> = (0..pi.len() as u32).map(ProbeIndex::Bit).collect();
    let acc = AccuracyVector::from_entries(indices.iter().zip(pi).map(|(i, p)| (*i, Sign::Pos, *p)))?;
    let eta = brute_bernoulli_threshold(&acc, &indices, target)?;
    let answered: Vec<f64> = pi.iter().copied().filter(|p| *p > eta).collect();
    if answered.is_empty() {
        return Ok(0.0);
    }
    Ok(answered.iter().map(|p| 1.0 - p).sum::<f64>() / answered.len() as f64)
}

/// A random threshold-family instance with at most `max_probes` scored probes.
/// Magnitudes are drawn from a small lattice so ties occur.
pub fn random_threshold_instance(rng: &mut impl Rng, max_probes: usize) -> (ScoreVector, UserFeedback) {
    let n = rng.random_range(0..=max_probes);
    let mut scores = BTreeMap::new();
    let mut answers = BTreeMap::new();
    let lattice = rng.random_bool(0.5);
    for b in 0..n as u32 {
        let idx = ProbeIndex::Bit(b + 1);
        let mag = if lattice { f64::from(rng.random_range(0..6u32)) / 2.0 } else { rng.random::<f64>() * 4.0 };
        let s = if rng.random_bool(0.5) { mag } else { -mag };
        scores.insert(idx, s);
        if rng.random_bool(0.7) {
            answers.insert(idx, Sign::from_bool(rng.random_bool(0.5)));
        }
    }
    (ScoreVector::new(scores).expect("finite"), UserFeedback::new(answers))
}

/// One named entry of the self-check report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfCheckReport {
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

/// Self-check settings.
#[derive(Debug, Clone, PartialEq)]
pub struct SelfCheckConfig {
    pub trials: usize,
    pub seed: u64,
    /// Uses rank `k - 1` in the step-down conformal quantile. For mutation testing.
    pub inject_quantile_off_by_one: bool,
}

impl Default for SelfCheckConfig {
    fn default() -> Self {
        Self { trials: 500, seed: 20_240_601, inject_quantile_off_by_one: false }
    }
}

/// Ranking generator used by the step-down coverage checks.
pub fn coverage_generator(n_noise: f64) -> GeneratorConfig {
    let mut g = GeneratorConfig::new(crate::synthetic::Task::Ranking, 0, 0);
    g.ranking.noise_sigma = n_noise;
    g
}

fn result(name: &str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name: name.to_string(), passed, detail }
}

/// Runs the full oracle suite.
pub fn run_selfcheck(config: &SelfCheckConfig, exec: Exec) -> Result<SelfCheckReport> {
    if config.trials < 100 {
        return Err(Error::domain(format!("at least 100 trials are required, got {}", config.trials)));
    }
    let mut checks = Vec::new();
    let seed = config.seed;

    // Fast paths against brute-force scans.
    let mut rng = rng_from_seed(derive_seed(seed, 1));
    let mut mismatches = 0;
    let cases = 1000;
    for _ in 0..cases {
        let (s, f) = random_threshold_instance(&mut rng, 20);
        let t = crate::nested::loss_trace(&s, &f);
        let delta = f64::from(rng.random_range(0..5u32)) * 0.125;
        let down_ok = crate::calibrate::stepdown_score(&t, delta) == brute_stepdown_score(&s, &f, delta)?;
        let up_ok = crate::calibrate::stepup_score(&t, delta) == brute_stepup_score(&s, &f, delta)?;
        let trace_ok = brute_threshold_losses(&s, &f)?.iter().all(|(l, loss)| {
            t.value_at(*l) == *loss && crate::nested::threshold_set(&s, *l) == brute_threshold_set(&s, *l)
        });
        mismatches += usize::from(!(down_ok && up_ok && trace_ok));
    }
    checks.push(result(
        "scores-match-brute-force",
        mismatches == 0,
        format!("{mismatches} of {cases} instances differ"),
    ));

    // Hoeffding–Bentkus against exact arithmetic.
    let mut worst: f64 = 0.0;
    for n in [1u64, 7, 50, 100, 200] {
        for delta in [0.05, 0.1, 0.2, 0.5] {
            let cdf = exact_binomial_cdf_all(n, delta)?;
            for j in 0..=100u64 {
                let fast = crate::calibrate::hb_pvalue(j as f64 / 100.0, n as usize, delta)?;
                let slow = oracle_hb_pvalue(j, 100, n, delta, &cdf);
                worst = worst.max(((fast - slow) / slow).abs());
            }
        }
    }
    checks.push(result("hb-pvalue-exact", worst <= 1e-12, format!("max relative error {worst:e}")));

    // Identifiability of the shipped families.
    let mut families: Vec<ProbeFamily> = (1..=5).map(|k| ProbeFamily::PairwiseRanking { k }).collect();
    families.extend((1..=5).map(|k| ProbeFamily::RankPosition { k }));
    families.extend([1, 2, 12].map(|k| ProbeFamily::Bitvector { k }));
    families.push(ProbeFamily::TreeAncestor(std::sync::Arc::new(crate::tree::Tree::balanced(64, 4)?)));
    families
        .push(ProbeFamily::TreeAncestor(std::sync::Arc::new(crate::tree::Tree::random_hierarchy(64, 5, 0.3, seed)?)));
    let mut ident_ok = true;
    for f in &families {
        ident_ok &= crate::probe::check_identifiability(f, 1 << 13)?;
    }
    checks.push(result("identifiability", ident_ok, format!("{} families checked", families.len())));

    // Step-down coverage. The small-sample configuration is sharp enough that
    // an off-by-one quantile rank falls visibly below 1 - α.
    let shift = if config.inject_quantile_off_by_one { -1 } else { 0 };
    for (name, n_cal, alpha, delta, noise) in [
        ("stepdown-coverage-n9", 9usize, 0.1, 0.0, 2.0),
        ("stepdown-coverage-n50", 50, 0.1, 0.2, 0.5),
        ("stepdown-coverage-n200", 200, 0.1, 0.2, 0.5),
    ] {
        let check = GuaranteeCheck::StepDownVar {
            generator: coverage_generator(noise),
            family: SetFamily::Threshold,
            n_cal,
            alpha,
            delta,
            quantile_shift: shift,
        };
        let rate = mc_guarantee_check(&check, config.trials, derive_seed(seed, n_cal as u64), exec)?;
        let bound = 1.0 - alpha - 3.0 * McRate::nominal_std_err(1.0 - alpha, config.trials);
        checks.push(result(
            name,
            rate.rate >= bound,
            format!("coverage {:.4} (bound {:.4}, {} trials)", rate.rate, bound, rate.trials),
        ));
    }

    // Fixed-sequence testing.
    let check = GuaranteeCheck::FstExpectation { n: 100, alpha_fst: 0.1, delta: 0.2, grid_size: 50, wrong_prob: 0.4 };
    let rate = mc_guarantee_check(&check, config.trials, derive_seed(seed, 3), exec)?;
    let bound = 0.1 + 3.0 * McRate::nominal_std_err(0.1, config.trials);
    checks.push(result(
        "fst-expectation",
        rate.rate <= bound,
        format!("violation rate {:.4} (bound {:.4})", rate.rate, bound),
    ));

    // Adaptive Bernoulli sets under the independence model.
    let mut rng = rng_from_seed(derive_seed(seed, 4));
    let mut worst_gap = f64::NEG_INFINITY;
    for i in 0..5u64 {
        let pi = random_accuracies(&mut rng);
        let m = mc_bernoulli_expected_fpp(&pi, 0.9, 2000, derive_seed(seed, 100 + i), exec)?;
        worst_gap = worst_gap.max(m.mean - (0.1 + 3.0 * m.std_err));
    }
    checks.push(result("bernoulli-expectation", worst_gap <= 0.0, format!("worst margin {worst_gap:.4}")));

    let passed = checks.iter().all(|c| c.passed);
    Ok(SelfCheckReport { passed, checks })
}

/// Accuracy profile of a random instance: 5 to 40 probes, a mix of confident
/// and uncertain ones.
pub fn random_accuracies(rng: &mut impl Rng) -> Vec<f64> {
    let n = rng.random_range(5..=40);
    (0..n)
        .map(|_| if rng.random_bool(0.7) { 0.85 + 0.15 * rng.random::<f64>() } else { 0.5 + 0.4 * rng.random::<f64>() })
        .collect()
}

/// `exp(-n h(a, δ))` evaluated through [`bernoulli_kl`]; exposed for comparisons.
pub fn hoeffding_term(mean: f64, n: usize, delta: f64) -> f64 {
    (-(n as f64) * bernoulli_kl(mean.min(delta), delta)).exp()
}

/// Loss traces evaluated on a dense grid, for comparing two traces.
pub fn trace_on_grid(trace: &LossTrace, grid: &DenseGrid) -> Vec<FppLoss> {
    grid.points().iter().map(|&t| trace.value_at(t)).collect()
}

/// The dense grid of a Bernoulli trace, including its breakpoints.
pub fn bernoulli_grid(trace: &LossTrace) -> DenseGrid {
    debug_assert_eq!(trace.side(), TraceSide::Left);
    DenseGrid::new(trace.breakpoints().iter().copied())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(probes: &[(f64, bool)]) -> (ScoreVector, UserFeedback) {
        let mut scores = BTreeMap::new();
        let mut answers = BTreeMap::new();
        for (k, (s, correct)) in probes.iter().enumerate() {
            let idx = ProbeIndex::Bit(k as u32 + 1);
            scores.insert(idx, *s);
            let pred = Sign::of(*s);
            answers.insert(idx, if *correct { pred } else { pred.flip() });
        }
        (ScoreVector::new(scores).unwrap(), UserFeedback::new(answers))
    }

    #[test]
    fn dense_grid_layout() {
        assert_eq!(DenseGrid::new([2.0, 1.0, 2.0]).points(), &[0.0, 0.5, 1.0, 1.5, 2.0, 3.0]);
        assert_eq!(DenseGrid::new([]).points(), &[0.0, 1.0]);
    }

    #[test]
    fn brute_scores_on_worked_examples() {
        let (s, f) = instance(&[(1.0, true), (2.0, true), (3.0, false)]);
        assert_eq!(brute_stepdown_score(&s, &f, 0.4).unwrap(), 3.0);
        assert_eq!(brute_stepup_score(&s, &f, 0.4).unwrap(), 0.0);
        let (s, f) = instance(&[(1.0, true), (-2.0, true)]);
        assert_eq!(brute_stepdown_score(&s, &f, 0.0).unwrap(), 0.0);
        let (s, f) = instance(&[(-2.5, false)]);
        assert_eq!(brute_stepdown_score(&s, &f, 0.0).unwrap(), 2.5);
        let big: Vec<(f64, bool)> = (0..33).map(|k| (k as f64 + 1.0, true)).collect();
        let (s, f) = instance(&big);
        assert!(matches!(brute_stepdown_score(&s, &f, 0.1), Err(Error::Capacity { .. })));
    }

    #[test]
    fn lambda_targets_examples() {
        let clean = vec![instance(&[(1.0, true), (2.0, true)]); 3];
        assert_eq!(brute_lambda_targets(&clean, 0.1, 0.2).unwrap(), (0.0, 0.0));
        let single = vec![instance(&[(1.0, true), (2.0, true), (3.0, false)])];
        assert_eq!(brute_lambda_targets(&single, 0.4, 0.5).unwrap(), (0.0, 3.0));
    }

    #[test]
    fn exact_binomial_examples() {
        assert_eq!(exact_binomial_cdf(10, 0.3, 10).unwrap(), 1.0);
        let p0 = exact_binomial_cdf(10, 0.25, 0).unwrap();
        assert_eq!(p0, 0.75f64.powi(10));
        let v = exact_binomial_cdf(100, 0.2, 10).unwrap();
        let fast = crate::calibrate::binomial_cdf(100, 0.2, 10);
        assert!(((v - fast) / v).abs() < 1e-12, "{v} vs {fast}");
    }

    #[test]
    fn bernoulli_brute_matches_exact_expectation() {
        let pi = [0.99, 0.95, 0.9, 0.6, 0.55];
        let exact = exact_bernoulli_expected_fpp(&pi, 0.9).unwrap();
        // Prefix means .99, .97, .9467, .86, .798 give J = 3 and cutoff 0.6.
        assert!((exact - (0.01 + 0.05 + 0.1) / 3.0).abs() < 1e-12);
        let mc = mc_bernoulli_expected_fpp(&pi, 0.9, 5000, 3, Exec::default()).unwrap();
        assert!((mc.mean - exact).abs() < 4.0 * mc.std_err);
    }

    #[test]
    fn mc_checks_reject_few_trials() {
        let check = GuaranteeCheck::FstExpectation { n: 10, alpha_fst: 0.1, delta: 0.2, grid_size: 5, wrong_prob: 0.4 };
        assert!(mc_guarantee_check(&check, 10, 1, Exec::default()).is_err());
    }

    #[test]
    fn perfect_predictions_never_violate() {
        // Every prediction is right, so every loss is 0.
        let check =
            GuaranteeCheck::FstExpectation { n: 50, alpha_fst: 0.1, delta: 0.2, grid_size: 10, wrong_prob: 0.0 };
        let rate = mc_guarantee_check(&check, 100, 5, Exec::default()).unwrap();
        assert_eq!(rate.rate, 0.0);
    }
}
