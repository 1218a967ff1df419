use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use probeset::calibrate::{MethodParams, PreparedSample};
use probeset::eval::{ecdf_csv, evaluate as evaluate_outcome, EvalReport};
use probeset::oracle::{run_selfcheck, SelfCheckConfig};
use probeset::record::{digest, parse_jsonl, to_canonical_json_pretty, write_jsonl, DatasetMeta, ParsedDataset};
use probeset::sweep::{ordering, rows_csv, run_sweep, summarize, summary_csv, SweepConfig};
use probeset::synthetic::{generate, GeneratorConfig, Task, TreeShape};
use probeset::{CalibSample, CalibrationOutcome, Exec, Method};

use crate::{CalibrateArgs, EvaluateArgs, Failure, Format, GenArgs, SelfcheckArgs, SweepArgs};

type Outcome<T = ()> = Result<T, Failure>;

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn data(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn read_bytes(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| data(format!("{}: {e}", path.display())))
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Outcome<T> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Writes `text` to `path`, or to stdout when no path is given.
fn emit(path: Option<&Path>, text: &str) -> Outcome {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| data(format!("{}: {e}", p.display()))),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(data)
        }
    }
}

fn pretty<T: serde::Serialize>(value: &T) -> Outcome<String> {
    let mut s = to_canonical_json_pretty(value).map_err(data)?;
    s.push('\n');
    Ok(s)
}

/// Reads a JSONL dataset and returns it with the digest of its bytes.
fn read_dataset(path: &Path) -> Outcome<(ParsedDataset, String)> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|e| data(format!("{}: {e}", path.display())))?;
    let parsed = parse_jsonl(text).map_err(|e| data(format!("{}: {e}", path.display())))?;
    Ok((parsed, digest(&bytes)))
}

fn check_open_unit(name: &str, v: f64) -> Outcome {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(usage(format!("--{name} must lie strictly between 0 and 1, got {v}")))
    }
}

/// Sidecar path for a dataset file: `data.jsonl` becomes `data.meta.json`.
pub fn meta_path(out: &Path) -> PathBuf {
    out.with_extension("meta.json")
}

fn generator_config(a: &GenArgs) -> Outcome<GeneratorConfig> {
    let mut config = match &a.config {
        Some(path) => read_config::<GeneratorConfig>(path)?,
        None => {
            let task = a.task.ok_or_else(|| usage("--task is required without --config"))?;
            GeneratorConfig::new(task, 1000, 0)
        }
    };
    if let Some(task) = a.task {
        config.task = task;
    }
    if let Some(n) = a.n {
        config.n = n;
    }
    if let Some(seed) = a.seed {
        config.seed = seed;
    }
    if let Some(k) = a.k {
        config.ranking.k = k;
    }
    if let Some(v) = a.relevance_scale {
        config.ranking.relevance_scale = v;
    }
    if let Some(v) = a.noise {
        config.ranking.noise_sigma = v;
    }
    if let Some(v) = a.sharpness {
        config.ranking.sharpness = v;
    }
    if let Some(branching) = a.branching {
        let leaves = match config.tree_shape {
            TreeShape::Balanced { leaves, .. } | TreeShape::Random { leaves, .. } => leaves,
        };
        config.tree_shape = TreeShape::Balanced { leaves, branching };
    }
    if let Some(leaves) = a.leaves {
        config.tree_shape = config.tree_shape.with_leaves(leaves);
    }
    config.validate().map_err(usage)?;
    Ok(config)
}

pub fn gen(a: &GenArgs) -> Outcome {
    let config = generator_config(a)?;
    let dataset = generate(&config, Exec::default()).map_err(usage)?;
    let kind = dataset.family.kind();
    let text = write_jsonl(&dataset.examples, kind).map_err(data)?;
    let notes = match config.task {
        Task::Ranking => vec![
            "relevances are synthetic draws of relevance_scale * Exp(1) per item".to_string(),
            "scores are noisy relevance differences, not outputs of a trained model".to_string(),
        ],
        Task::Tree => {
            vec!["leaf probabilities are Dirichlet draws concentrated around a random centre leaf".to_string()]
        }
    };
    let meta = DatasetMeta {
        generator: config.clone(),
        family: kind,
        n: dataset.examples.len(),
        tree: dataset.family.tree().cloned(),
        digest: digest(text.as_bytes()),
        notes,
    };
    emit(a.out.as_deref(), &text)?;
    if let Some(out) = &a.out {
        emit(Some(&meta_path(out)), &pretty(&meta)?)?;
    }
    Ok(())
}

pub fn calibrate(a: &CalibrateArgs) -> Outcome {
    if matches!(a.method, Method::StepDown | Method::StepUp | Method::FstQuantile) {
        check_open_unit("alpha", a.alpha)?;
    }
    if !(0.0..=1.0).contains(&a.delta) {
        return Err(usage(format!("--delta must lie in [0, 1], got {}", a.delta)));
    }
    if let Some(eps) = a.epsilon {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(usage(format!("--epsilon must be positive, got {eps}")));
        }
    }
    check_open_unit("alpha-fst", a.alpha_fst)?;
    if a.grid_size == 0 {
        return Err(usage("--grid-size must be positive"));
    }

    let (parsed, source) = read_dataset(&a.input)?;
    let mut sample =
        CalibSample::new(parsed.examples).map_err(|_| data(format!("{}: no examples", a.input.display())))?;
    if let Some(kind) = parsed.family {
        sample = sample.with_probe_family(kind);
    }
    let prepared = PreparedSample::new(&sample, a.family, Exec::default()).map_err(data)?;
    let params = MethodParams {
        epsilon: a.epsilon,
        alpha_fst: a.alpha_fst,
        grid_size: Some(a.grid_size),
        ..MethodParams::new(a.alpha, a.delta)
    };
    let mut outcome = prepared.run(a.method, &params).map_err(data)?;
    outcome.created_from = Some(source);
    if outcome.abstain_all {
        eprintln!("warning: {}", outcome.warning.as_deref().unwrap_or("every probe is abstained on"));
    }
    emit(a.out.as_deref(), &pretty(&outcome)?)
}

fn report_csv(r: &EvalReport) -> String {
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    format!(
        "method,family,parameter,alpha,delta,n,loss_quantile,loss_quantile_gap,mean_loss,exceedance_rate,mean_abstention,abstain_all\n\
         {},{},{},{},{},{},{},{},{},{},{},{}\n",
        r.method,
        r.family,
        r.parameter,
        opt(r.alpha),
        r.delta,
        r.n,
        opt(r.loss_quantile),
        opt(r.loss_quantile_gap),
        r.mean_loss,
        r.exceedance_rate,
        r.mean_abstention,
        r.abstain_all
    )
}

pub fn evaluate(a: &EvaluateArgs) -> Outcome {
    if let Some(alpha) = a.alpha {
        check_open_unit("alpha", alpha)?;
    }
    let outcome_text = fs::read_to_string(&a.outcome).map_err(|e| data(format!("{}: {e}", a.outcome.display())))?;
    let outcome: CalibrationOutcome =
        serde_json::from_str(&outcome_text).map_err(|e| data(format!("{}: {e}", a.outcome.display())))?;
    let (parsed, test_digest) = read_dataset(&a.input)?;
    if parsed.examples.is_empty() {
        return Err(data(format!("{}: empty test set", a.input.display())));
    }
    let mut ev = evaluate_outcome(&outcome, &parsed.examples, parsed.family, a.alpha, Exec::default()).map_err(data)?;
    if outcome.created_from.as_deref() == Some(test_digest.as_str()) {
        ev.report.warnings.push("test set is byte-identical to the calibration set".to_string());
    }
    ev.report.test_digest = Some(test_digest);
    for w in &ev.report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(p) = &a.ecdf_out {
        emit(Some(p), &ecdf_csv(&ev.report.loss_ecdf))?;
    }
    if let Some(p) = &a.abstention_ecdf_out {
        emit(Some(p), &ecdf_csv(&ev.report.abstention_ecdf))?;
    }
    let text = match a.format {
        Format::Json => pretty(&ev.report)?,
        Format::Csv => report_csv(&ev.report),
    };
    emit(a.out.as_deref(), &text)
}

pub fn sweep(a: &SweepArgs) -> Outcome {
    let mut config = match (&a.config, a.preset) {
        (Some(path), _) => read_config::<SweepConfig>(path)?,
        (None, Some(task)) => {
            if a.seeds == 0 {
                return Err(usage("--seeds must be positive"));
            }
            SweepConfig::comparison(task, a.seeds)
        }
        (None, None) => return Err(usage("give --config or --preset")),
    };
    if let Some(offset) = a.seed {
        for s in &mut config.seeds {
            *s = s.wrapping_add(offset);
        }
    }
    config.validate().map_err(usage)?;
    let rows = run_sweep(&config, Exec::default()).map_err(data)?;
    let failures = rows.iter().filter(|r| r.error.is_some()).count();
    if failures > 0 {
        eprintln!("warning: {failures} of {} cells failed; see the error column", rows.len());
    }
    let summary = summarize(&rows);
    let fst = if config.methods.contains(&Method::FstQuantile) { Method::FstQuantile } else { Method::Fst };
    let report = ordering(&summary, [Method::StepDown, fst, Method::StepUp]);
    if report.cells > 0 {
        eprintln!(
            "ordering stepdown / {fst} / stepup: gap {}/{} cells, abstention {}/{} cells",
            report.gap_ordered, report.cells, report.abstention_ordered, report.cells
        );
    }
    let (rows_text, summary_text) = match a.format {
        Format::Csv => (rows_csv(&rows), summary_csv(&summary)),
        Format::Json => (pretty(&rows)?, pretty(&summary)?),
    };
    emit(a.out.as_deref(), &rows_text)?;
    if let Some(p) = &a.summary_out {
        emit(Some(p), &summary_text)?;
    }
    Ok(())
}

pub fn selfcheck(a: &SelfcheckArgs) -> Outcome {
    if a.trials < 100 {
        return Err(usage(format!("--trials must be at least 100, got {}", a.trials)));
    }
    let defaults = SelfCheckConfig::default();
    let config = SelfCheckConfig {
        trials: a.trials,
        seed: a.seed.unwrap_or(defaults.seed),
        inject_quantile_off_by_one: a.inject_quantile_off_by_one,
    };
    let report = run_selfcheck(&config, Exec::default()).map_err(data)?;
    for c in &report.checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    emit(a.out.as_deref(), &pretty(&report)?)?;
    if report.passed {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        Err(Failure::Guarantee(format!("self-check failed: {}", failed.join(", "))))
    }
}
