//! Monte-Carlo checks of the calibration guarantees at moderate sizes.

use probeset::calibrate::PreparedSample;
use probeset::oracle::{
    coverage_generator, mc_guarantee_check, run_selfcheck, GuaranteeCheck, McRate, SelfCheckConfig,
};
use probeset::rng::derive_seed;
use probeset::synthetic::{generate_range, GeneratorConfig, Task};
use probeset::{estimate_err, CalibSample, Exec, SetFamily};

fn stepdown(n_cal: usize, family: SetFamily) -> GuaranteeCheck {
    GuaranteeCheck::StepDownVar {
        generator: coverage_generator(0.5),
        family,
        n_cal,
        alpha: 0.1,
        delta: 0.2,
        quantile_shift: 0,
    }
}

#[test]
fn stepdown_coverage_holds_across_sample_sizes() {
    for (n_cal, trials) in [(50, 300), (200, 200), (1000, 100)] {
        let rate =
            mc_guarantee_check(&stepdown(n_cal, SetFamily::Threshold), trials, 11 + n_cal as u64, Exec::default())
                .unwrap();
        let bound = 0.9 - 3.0 * McRate::nominal_std_err(0.9, trials);
        assert!(rate.rate >= bound, "n = {n_cal}: coverage {} below {bound}", rate.rate);
    }
}

#[test]
fn stepdown_coverage_holds_for_bernoulli_sets() {
    let trials = 300;
    let rate = mc_guarantee_check(&stepdown(100, SetFamily::Bernoulli), trials, 12, Exec::default()).unwrap();
    assert!(rate.rate >= 0.9 - 3.0 * McRate::nominal_std_err(0.9, trials), "coverage {}", rate.rate);
}

#[test]
fn monte_carlo_checks_do_not_depend_on_the_executor() {
    let check = stepdown(30, SetFamily::Threshold);
    let seq = mc_guarantee_check(&check, 100, 5, Exec::Sequential).unwrap();
    let par = mc_guarantee_check(&check, 100, 5, Exec::Parallel).unwrap();
    assert_eq!(seq, par);
}

/// Step-up exceedance stays under `α` plus the probability of the error event
/// at the calibrated threshold, both measured on the same test points.
#[test]
fn stepup_exceedance_is_bounded_by_alpha_plus_err() {
    let (alpha, delta, n_cal, trials) = (0.1, 0.2, 100, 400);
    let mut config = GeneratorConfig::new(Task::Ranking, 0, 0);
    config.ranking.noise_sigma = 2.0;
    let family = config.family().unwrap();
    let results = Exec::default().map_range(trials, |t| {
        let config = GeneratorConfig { seed: derive_seed(13, t as u64), ..config.clone() };
        let mut examples = generate_range(&config, &family, 0, n_cal + 1, Exec::Sequential).unwrap();
        let test = examples.pop().unwrap();
        let sample = CalibSample::new(examples).unwrap();
        let outcome = PreparedSample::new(&sample, SetFamily::Threshold, Exec::Sequential)
            .unwrap()
            .stepup(delta, alpha, None)
            .unwrap();
        let exceeded = test.trace(SetFamily::Threshold).unwrap().value_at(outcome.parameter).exceeds(delta);
        let lambda = outcome.quantile_value.unwrap();
        let holdout = CalibSample::new(vec![test]).unwrap();
        let err = estimate_err(&holdout, SetFamily::Threshold, lambda, outcome.epsilon.unwrap(), delta).unwrap();
        (exceeded, err.count == 1)
    });
    let exceed = McRate::from_counts(results.iter().filter(|r| r.0).count(), trials);
    let err = McRate::from_counts(results.iter().filter(|r| r.1).count(), trials);
    let bound = alpha + err.rate + 3.0 * (exceed.std_err.powi(2) + err.std_err.powi(2)).sqrt();
    assert!(exceed.rate <= bound, "exceedance {} above {bound} (err {})", exceed.rate, err.rate);
}

#[test]
fn selfcheck_passes_and_catches_an_off_by_one_quantile() {
    let clean = run_selfcheck(&SelfCheckConfig::default(), Exec::default()).unwrap();
    assert!(clean.passed, "{:#?}", clean.checks);
    let broken = run_selfcheck(
        &SelfCheckConfig { inject_quantile_off_by_one: true, ..SelfCheckConfig::default() },
        Exec::default(),
    )
    .unwrap();
    assert!(!broken.passed);
    let failing: Vec<&str> = broken.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    assert!(failing.iter().all(|n| n.starts_with("stepdown-coverage")), "{failing:?}");
}
