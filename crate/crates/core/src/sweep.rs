//! Parameter sweeps: generate, calibrate and evaluate over a grid of
//! `(α, δ, method, family, seed)` cells.
//!
//! Each seed yields one dataset, split into calibration and test parts, that
//! is shared by all cells with that seed. Seeds run in parallel.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::calibrate::{Method, MethodParams, PreparedSample, SetFamily, DEFAULT_GRID_SIZE};
use crate::error::{Error, Result};
use crate::eval::metrics;
use crate::nested::LossTrace;
use crate::par::Exec;
use crate::synthetic::{
    generate, GeneratorConfig, PairSamplerParams, RankingModel, Task, TreeModelParams, TreeSamplerParams, TreeShape,
};

fn default_alpha_fst() -> f64 {
    0.1
}

fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub task: Task,
    pub alphas: Vec<f64>,
    pub deltas: Vec<f64>,
    pub methods: Vec<Method>,
    pub families: Vec<SetFamily>,
    pub seeds: Vec<u64>,
    pub n_cal: usize,
    pub n_test: usize,
    #[serde(default = "default_alpha_fst")]
    pub alpha_fst: f64,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default)]
    pub ranking: RankingModel,
    #[serde(default)]
    pub pair_sampler: PairSamplerParams,
    #[serde(default)]
    pub tree_shape: TreeShape,
    #[serde(default)]
    pub tree_model: TreeModelParams,
    #[serde(default)]
    pub tree_sampler: TreeSamplerParams,
}

impl SweepConfig {
    /// The grid used to compare the three calibration methods on `task`.
    /// Ranking uses [`RankingModel::long_lists`].
    pub fn comparison(task: Task, seeds: usize) -> Self {
        Self {
            task,
            alphas: vec![0.1, 0.15, 0.2],
            deltas: vec![0.1, 0.15, 0.2, 0.25],
            methods: vec![Method::StepDown, Method::FstQuantile, Method::StepUp],
            families: vec![SetFamily::Threshold, SetFamily::Bernoulli],
            seeds: (1..=seeds as u64).collect(),
            n_cal: 1000,
            n_test: 1000,
            alpha_fst: default_alpha_fst(),
            grid_size: default_grid_size(),
            ranking: RankingModel::long_lists(),
            pair_sampler: PairSamplerParams::default(),
            tree_shape: TreeShape::default(),
            tree_model: TreeModelParams::default(),
            tree_sampler: TreeSamplerParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.deltas.is_empty() || self.methods.is_empty() {
            return Err(Error::domain("sweep needs at least one alpha, delta and method"));
        }
        if self.families.is_empty() || self.seeds.is_empty() {
            return Err(Error::domain("sweep needs at least one family and seed"));
        }
        if self.n_cal == 0 || self.n_test == 0 {
            return Err(Error::domain("n_cal and n_test must be positive"));
        }
        if self.grid_size == 0 {
            return Err(Error::domain("grid_size must be positive"));
        }
        self.generator(0).validate()
    }

    pub fn generator(&self, seed: u64) -> GeneratorConfig {
        GeneratorConfig {
            task: self.task,
            n: self.n_cal + self.n_test,
            seed,
            ranking: self.ranking,
            pair_sampler: self.pair_sampler,
            tree_shape: self.tree_shape,
            tree_model: self.tree_model,
            tree_sampler: self.tree_sampler,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.alphas.len() * self.deltas.len() * self.methods.len() * self.families.len() * self.seeds.len()
    }
}

/// One `(α, δ, method, family, seed)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub delta: f64,
    pub method: Method,
    pub family: SetFamily,
    pub seed: u64,
    pub parameter: Option<f64>,
    pub abstain_all: bool,
    pub loss_quantile: Option<f64>,
    pub quantile_gap: Option<f64>,
    pub mean_loss: Option<f64>,
    pub exceedance_rate: Option<f64>,
    pub mean_abstention: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn failed(alpha: f64, delta: f64, method: Method, family: SetFamily, seed: u64, err: &Error) -> Self {
        Self {
            alpha,
            delta,
            method,
            family,
            seed,
            parameter: None,
            abstain_all: false,
            loss_quantile: None,
            quantile_gap: None,
            mean_loss: None,
            exceedance_rate: None,
            mean_abstention: None,
            error: Some(err.to_string()),
        }
    }
}

/// Loss and abstention of each test trace at `parameter`.
fn test_metrics(traces: &[(LossTrace, usize)], parameter: f64, abstain_all: bool) -> (Vec<f64>, Vec<f64>) {
    traces
        .iter()
        .map(|(t, queries)| {
            if abstain_all {
                return (0.0, 1.0);
            }
            let l = t.value_at(parameter);
            (l.value(), 1.0 - l.answered as f64 / *queries as f64)
        })
        .unzip()
}

fn run_seed(config: &SweepConfig, seed: u64) -> Vec<SweepRow> {
    let cells = || {
        config.families.iter().flat_map(move |f| {
            config.alphas.iter().flat_map(move |a| {
                config.deltas.iter().flat_map(move |d| config.methods.iter().map(move |m| (*f, *a, *d, *m)))
            })
        })
    };
    let data = match generate(&config.generator(seed), Exec::Sequential) {
        Ok(d) => d,
        Err(e) => return cells().map(|(f, a, d, m)| SweepRow::failed(a, d, m, f, seed, &e)).collect(),
    };
    let (cal, test) = data.examples.split_at(config.n_cal);
    let mut rows = Vec::with_capacity(config.num_cells() / config.seeds.len());
    for &family in &config.families {
        let prepared = crate::calibrate::CalibSample::new(cal.to_vec())
            .and_then(|s| PreparedSample::new(&s.with_probe_family(data.family.kind()), family, Exec::Sequential));
        let test_traces: Result<Vec<(LossTrace, usize)>> =
            test.iter().map(|e| Ok((e.trace(family)?, e.feedback.num_queries()))).collect();
        let (prepared, test_traces) = match (prepared, test_traces) {
            (Ok(p), Ok(t)) => (p, t),
            (Err(e), _) | (_, Err(e)) => {
                rows.extend(
                    cells().filter(|c| c.0 == family).map(|(f, a, d, m)| SweepRow::failed(a, d, m, f, seed, &e)),
                );
                continue;
            }
        };
        for &alpha in &config.alphas {
            for &delta in &config.deltas {
                for &method in &config.methods {
                    let mut params = MethodParams::new(alpha, delta);
                    params.alpha_fst = config.alpha_fst;
                    params.grid_size = Some(config.grid_size);
                    let row = prepared.run(method, &params).and_then(|o| {
                        let (losses, abst) = test_metrics(&test_traces, o.parameter, o.abstain_all);
                        let m = metrics(&losses, &abst, delta, Some(alpha))?;
                        Ok(SweepRow {
                            alpha,
                            delta,
                            method,
                            family,
                            seed,
                            parameter: Some(o.parameter),
                            abstain_all: o.abstain_all,
                            loss_quantile: m.loss_quantile,
                            quantile_gap: m.loss_quantile.map(|q| q - delta),
                            mean_loss: Some(m.mean_loss),
                            exceedance_rate: Some(m.exceedance_rate),
                            mean_abstention: Some(m.mean_abstention),
                            error: None,
                        })
                    });
                    rows.push(row.unwrap_or_else(|e| SweepRow::failed(alpha, delta, method, family, seed, &e)));
                }
            }
        }
    }
    rows
}

/// Runs every cell. Cell failures become rows with an `error` message.
pub fn run_sweep(config: &SweepConfig, exec: Exec) -> Result<Vec<SweepRow>> {
    config.validate()?;
    Ok(exec.map(&config.seeds, |s| run_seed(config, *s)).into_iter().flatten().collect())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Long-format CSV with one row per cell.
pub fn rows_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "alpha,delta,method,family,seed,parameter,abstain_all,loss_quantile,quantile_gap,mean_loss,exceedance_rate,mean_abstention,error\n",
    );
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.alpha,
            r.delta,
            r.method,
            r.family,
            r.seed,
            opt(r.parameter),
            r.abstain_all,
            opt(r.loss_quantile),
            opt(r.quantile_gap),
            opt(r.mean_loss),
            opt(r.exceedance_rate),
            opt(r.mean_abstention),
            csv_field(r.error.as_deref().unwrap_or("")),
        ));
    }
    s
}

/// Mean and quartiles of one metric over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Spread {
    pub mean: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

impl Spread {
    /// Quartiles by linear interpolation between order statistics.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let at = |p: f64| {
            let h = p * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Self { mean: v.iter().sum::<f64>() / v.len() as f64, q25: at(0.25), median: at(0.5), q75: at(0.75) })
    }
}

/// Per-`(α, δ, method, family)` aggregate over seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub alpha: f64,
    pub delta: f64,
    pub method: Method,
    pub family: SetFamily,
    pub seeds: usize,
    pub failures: usize,
    pub quantile_gap: Option<Spread>,
    pub mean_abstention: Option<Spread>,
}

type CellKey = (u64, u64, Method, SetFamily);

fn cell_key(r: &SweepRow) -> CellKey {
    (r.alpha.to_bits(), r.delta.to_bits(), r.method, r.family)
}

pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut groups: Vec<(CellKey, Vec<&SweepRow>)> = Vec::new();
    let mut index: BTreeMap<(u64, u64, &'static str, &'static str), usize> = BTreeMap::new();
    for r in rows {
        let k = cell_key(r);
        let ik = (k.0, k.1, k.2.tag(), k.3.tag());
        let slot = *index.entry(ik).or_insert_with(|| {
            groups.push((k, Vec::new()));
            groups.len() - 1
        });
        groups[slot].1.push(r);
    }
    groups
        .into_iter()
        .map(|(_, rs)| {
            let ok: Vec<&SweepRow> = rs.iter().copied().filter(|r| r.error.is_none()).collect();
            let gaps: Vec<f64> = ok.iter().filter_map(|r| r.quantile_gap).collect();
            let abst: Vec<f64> = ok.iter().filter_map(|r| r.mean_abstention).collect();
            SummaryRow {
                alpha: rs[0].alpha,
                delta: rs[0].delta,
                method: rs[0].method,
                family: rs[0].family,
                seeds: rs.len(),
                failures: rs.len() - ok.len(),
                quantile_gap: Spread::of(&gaps),
                mean_abstention: Spread::of(&abst),
            }
        })
        .collect()
}

pub fn summary_csv(summary: &[SummaryRow]) -> String {
    let mut s = String::from(
        "alpha,delta,method,family,seeds,failures,gap_mean,gap_q25,gap_median,gap_q75,abstention_mean,abstention_q25,abstention_median,abstention_q75\n",
    );
    let spread = |x: &Option<Spread>| match x {
        Some(p) => format!("{},{},{},{}", p.mean, p.q25, p.median, p.q75),
        None => ",,,".to_string(),
    };
    for r in summary {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.alpha,
            r.delta,
            r.method,
            r.family,
            r.seeds,
            r.failures,
            spread(&r.quantile_gap),
            spread(&r.mean_abstention)
        ));
    }
    s
}

/// How often three methods appear in the expected order across cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    /// `(α, δ, family)` cells where all three methods produced results.
    pub cells: usize,
    /// Cells with mean gap `low <= mid <= high`.
    pub gap_ordered: usize,
    /// Cells with mean abstention `low >= mid >= high`.
    pub abstention_ordered: usize,
}

impl OrderingReport {
    pub fn gap_fraction(&self) -> f64 {
        self.gap_ordered as f64 / self.cells as f64
    }

    pub fn abstention_fraction(&self) -> f64 {
        self.abstention_ordered as f64 / self.cells as f64
    }
}

type OrderKey = (u64, u64, &'static str);

/// Compares mean gaps and abstentions of `order = [low, mid, high]` per
/// `(α, δ, family)` cell.
pub fn ordering(summary: &[SummaryRow], order: [Method; 3]) -> OrderingReport {
    let mut by_cell: BTreeMap<OrderKey, [Option<(f64, f64)>; 3]> = BTreeMap::new();
    for r in summary {
        let Some(pos) = order.iter().position(|m| *m == r.method) else { continue };
        let (Some(g), Some(a)) = (r.quantile_gap, r.mean_abstention) else { continue };
        by_cell.entry((r.alpha.to_bits(), r.delta.to_bits(), r.family.tag())).or_default()[pos] =
            Some((g.mean, a.mean));
    }
    let mut report = OrderingReport { cells: 0, gap_ordered: 0, abstention_ordered: 0 };
    for v in by_cell.values() {
        let [Some(lo), Some(mid), Some(hi)] = *v else { continue };
        report.cells += 1;
        report.gap_ordered += usize::from(lo.0 <= mid.0 && mid.0 <= hi.0);
        report.abstention_ordered += usize::from(lo.1 >= mid.1 && mid.1 >= hi.1);
    }
    report
}
