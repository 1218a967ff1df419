//! Synthetic weakly supervised datasets with known ground truth.
//!
//! Two tasks are provided:
//!
//! - **ranking**: a latent relevance vector per instance, a Plackett–Luce
//!   ranking drawn from it, noisy pairwise scores, and pair queries that
//!   favour relevant, well separated pairs;
//! - **tree**: Dirichlet leaf probabilities concentrated around a random
//!   centre leaf, the true leaf drawn from them, node scores from aggregated
//!   subtree probabilities, and ancestor queries that favour nodes near the
//!   true leaf's path.
//!
//! Every example draws from its own seed stream, so generation is identical
//! under sequential and parallel execution.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Exp1, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::calibrate::WeakExample;
use crate::error::{Error, Result};
use crate::loss::UserFeedback;
use crate::nested::{AccuracyVector, ScoreVector};
use crate::par::Exec;
use crate::probe::{evaluate_probe, Label, ProbeFamily, ProbeIndex, Sign};
use crate::rng::{derive_seed, rng_from_seed};
use crate::tree::Tree;

/// Attempts made to draw an instance with at least one query.
pub const MAX_QUERY_ATTEMPTS: u64 = 1000;

/// Latent-relevance ranking model over `k` items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankingModel {
    pub k: u32,
    /// Relevances are `relevance_scale * Exp(1)`.
    pub relevance_scale: f64,
    /// Standard deviation of the Gaussian noise added to relevances before scoring.
    pub noise_sigma: f64,
    /// Inverse temperature `β` of the Plackett–Luce draw; logits are `β r`.
    pub sharpness: f64,
}

impl Default for RankingModel {
    fn default() -> Self {
        Self { k: 8, relevance_scale: 10.0, noise_sigma: 0.5, sharpness: 1.0 }
    }
}

impl RankingModel {
    /// Long result lists with a soft ranking distribution: many queried pairs
    /// per instance and confident mistakes that make per-instance losses
    /// non-monotone in the threshold.
    pub fn long_lists() -> Self {
        Self { k: 24, relevance_scale: 10.0, noise_sigma: 0.5, sharpness: 0.1 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::domain("ranking needs at least two items"));
        }
        for (name, v) in [
            ("relevance_scale", self.relevance_scale),
            ("noise_sigma", self.noise_sigma),
            ("sharpness", self.sharpness),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be finite and nonnegative, got {v}")));
            }
        }
        Ok(())
    }
}

/// Pair query sampler: pair `(i, j)` is asked with probability
/// `1 - exp(-c1 min(r_i, r_j) (1 + c2 |r_i - r_j|))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSamplerParams {
    pub c1: f64,
    pub c2: f64,
}

impl Default for PairSamplerParams {
    fn default() -> Self {
        Self { c1: 0.05, c2: 0.2 }
    }
}

/// Ancestor query sampler: node `v` is asked with probability
/// `min(1, a exp(-b d(y, w) - c d(v, w)))`, `w` the common ancestor of `y` and `v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSamplerParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Default for TreeSamplerParams {
    fn default() -> Self {
        Self { a: 2.0, b: 0.1, c: 1.5 }
    }
}

fn check_nonnegative(params: &[(&str, f64)]) -> Result<()> {
    for (name, v) in params {
        if !(*v >= 0.0 && v.is_finite()) {
            return Err(Error::domain(format!("{name} must be finite and nonnegative, got {v}")));
        }
    }
    Ok(())
}

impl PairSamplerParams {
    pub fn validate(&self) -> Result<()> {
        check_nonnegative(&[("c1", self.c1), ("c2", self.c2)])
    }
}

impl TreeSamplerParams {
    pub fn validate(&self) -> Result<()> {
        check_nonnegative(&[("a", self.a), ("b", self.b), ("c", self.c)])
    }
}

/// Draws a ranking from the Plackett–Luce model with the given logits.
/// Item `i` (0-based) appears as `i + 1` in the returned permutation.
pub fn plackett_luce_sample(logits: &[f64], rng: &mut impl Rng) -> Vec<u32> {
    let mut remaining: Vec<usize> = (0..logits.len()).collect();
    let mut perm = Vec::with_capacity(logits.len());
    while !remaining.is_empty() {
        let m = remaining.iter().map(|&i| logits[i]).fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = remaining.iter().map(|&i| (logits[i] - m).exp()).collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = remaining.len() - 1;
        for (pos, w) in weights.iter().enumerate() {
            if u < *w {
                pick = pos;
                break;
            }
            u -= w;
        }
        perm.push(remaining.remove(pick) as u32 + 1);
    }
    perm
}

/// Plackett–Luce probability of ranking `perm` (1-based items).
pub fn plackett_luce_probability(logits: &[f64], perm: &[u32]) -> f64 {
    let mut log_p = 0.0;
    for k in 0..perm.len() {
        let rest = &perm[k..];
        let m = rest.iter().map(|&i| logits[i as usize - 1]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = rest.iter().map(|&i| (logits[i as usize - 1] - m).exp()).sum();
        log_p += logits[perm[k] as usize - 1] - m - denom.ln();
    }
    log_p.exp()
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A generated ranking instance.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingExample {
    /// `label[k - 1]` is the item at rank `k`.
    pub label: Vec<u32>,
    pub relevance: Vec<f64>,
    /// `s_ij = β (r̂_i - r̂_j)`, positive when `i` is predicted above `j`.
    pub scores: ScoreVector,
    /// Predictions `sign(s_ij)` with accuracy estimates `logistic(|s_ij|)`,
    /// the pairwise marginal of the Plackett–Luce model at `r̂`.
    pub acc: AccuracyVector,
}

/// Draws relevances, the true ranking and the pairwise model outputs.
pub fn gen_ranking_example(model: &RankingModel, seed: u64) -> Result<RankingExample> {
    model.validate()?;
    let mut rng = rng_from_seed(seed);
    let k = model.k as usize;
    let relevance: Vec<f64> = (0..k).map(|_| model.relevance_scale * rng.sample::<f64, _>(Exp1)).collect();
    let logits: Vec<f64> = relevance.iter().map(|r| model.sharpness * r).collect();
    let label = plackett_luce_sample(&logits, &mut rng);
    let noisy: Vec<f64> =
        relevance.iter().map(|r| r + model.noise_sigma * rng.sample::<f64, _>(StandardNormal)).collect();
    let mut scores = std::collections::BTreeMap::new();
    let mut entries = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let s = model.sharpness * (noisy[i] - noisy[j]);
            let idx = ProbeIndex::Pair(i as u32 + 1, j as u32 + 1);
            scores.insert(idx, s);
            entries.push((idx, Sign::of(s), logistic(s.abs())));
        }
    }
    Ok(RankingExample {
        label,
        relevance,
        scores: ScoreVector::new(scores)?,
        acc: AccuracyVector::from_entries(entries)?,
    })
}

/// Inclusion probability of a pair with relevances `r1`, `r2`.
pub fn pair_inclusion_probability(r1: f64, r2: f64, params: &PairSamplerParams) -> f64 {
    let lo = r1.min(r2);
    1.0 - (-params.c1 * lo * (1.0 + params.c2 * (r1 - r2).abs())).exp()
}

/// Samples each pair independently. Relevances are shifted so their minimum
/// is zero when any is negative.
pub fn sample_pair_queries(relevance: &[f64], params: &PairSamplerParams, seed: u64) -> Vec<ProbeIndex> {
    let shift = relevance.iter().copied().fold(0.0_f64, f64::min);
    let r: Vec<f64> = relevance.iter().map(|x| x - shift).collect();
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for i in 0..r.len() {
        for j in i + 1..r.len() {
            let p = pair_inclusion_probability(r[i], r[j], params);
            if rng.random::<f64>() < p {
                out.push(ProbeIndex::Pair(i as u32 + 1, j as u32 + 1));
            }
        }
    }
    out
}

/// Dirichlet leaf-probability model on a label tree.
///
/// Leaf `l` gets concentration `base + concentration * exp(-decay * d(l, c))`
/// around a uniformly drawn centre leaf `c`.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    pub tree: Arc<Tree>,
    pub params: TreeModelParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeModelParams {
    pub base: f64,
    pub concentration: f64,
    pub decay: f64,
    /// Log-odds are clamped to `±s_max`.
    pub s_max: f64,
}

impl Default for TreeModelParams {
    fn default() -> Self {
        Self { base: 0.02, concentration: 2.0, decay: 1.0, s_max: 30.0 }
    }
}

impl TreeModelParams {
    pub fn validate(&self) -> Result<()> {
        check_nonnegative(&[("base", self.base), ("concentration", self.concentration), ("decay", self.decay)])?;
        if self.base == 0.0 && self.concentration == 0.0 {
            return Err(Error::domain("base and concentration cannot both be zero"));
        }
        if !(self.s_max > 0.0 && self.s_max.is_finite()) {
            return Err(Error::domain("s_max must be positive"));
        }
        Ok(())
    }
}

/// A generated tree instance. Vectors are indexed by node id.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeExample {
    pub leaf: u32,
    pub node_probs: Vec<f64>,
    pub scores: ScoreVector,
    pub acc: AccuracyVector,
}

/// Node scores, predictions and accuracies from node-indexed leaf probabilities.
///
/// `p_v` is the subtree sum, `s_v` its clamped log-odds, the prediction is
/// `sign(s_v)` and the accuracy `max(p_v, 1 - p_v)`.
pub fn tree_outputs(tree: &Tree, leaf_probs: &[f64], s_max: f64) -> Result<(Vec<f64>, ScoreVector, AccuracyVector)> {
    let p = tree.subtree_sums(leaf_probs);
    let mut scores = std::collections::BTreeMap::new();
    let mut entries = Vec::with_capacity(p.len());
    for (v, &pv) in p.iter().enumerate() {
        let pv = pv.clamp(0.0, 1.0);
        let s = (pv.ln() - (-pv).ln_1p()).clamp(-s_max, s_max);
        let s = if s.is_nan() { 0.0 } else { s };
        let idx = ProbeIndex::Node(v as u32);
        scores.insert(idx, s);
        entries.push((idx, Sign::of(s), pv.max(1.0 - pv)));
    }
    Ok((p, ScoreVector::new(scores)?, AccuracyVector::from_entries(entries)?))
}

/// Draws leaf probabilities, the true leaf and the node outputs.
pub fn gen_tree_example(model: &TreeModel, seed: u64) -> Result<TreeExample> {
    model.params.validate()?;
    let tree = &model.tree;
    let mut rng = rng_from_seed(seed);
    let leaves = tree.leaves();
    let centre = leaves[rng.random_range(0..leaves.len())];
    let dist = tree.distances_from(centre);
    let mut weights = vec![0.0; tree.num_nodes()];
    for &l in leaves {
        let shape = model.params.base + model.params.concentration * (-model.params.decay * dist[l] as f64).exp();
        let g = Gamma::new(shape, 1.0).map_err(|e| Error::domain(format!("gamma shape {shape}: {e}")))?;
        weights[l] = g.sample(&mut rng);
    }
    let total: f64 = weights.iter().sum();
    if total.is_nan() || total <= 0.0 {
        // Every gamma draw underflowed; fall back to the centre leaf.
        weights[centre] = 1.0;
    } else {
        weights.iter_mut().for_each(|w| *w /= total);
    }
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut leaf = *leaves.last().expect("trees have a leaf");
    for &l in leaves {
        if u < weights[l] {
            leaf = l;
            break;
        }
        u -= weights[l];
    }
    let (node_probs, scores, acc) = tree_outputs(tree, &weights, model.params.s_max)?;
    Ok(TreeExample { leaf: leaf as u32, node_probs, scores, acc })
}

/// Probability that node `v` is asked when the true leaf is `y`.
pub fn tree_query_probability(tree: &Tree, y: usize, v: usize, params: &TreeSamplerParams) -> f64 {
    let w = tree.common_ancestor(y, v);
    let dy = (tree.depth(y) - tree.depth(w)) as f64;
    let dv = (tree.depth(v) - tree.depth(w)) as f64;
    (params.a * (-params.b * dy - params.c * dv).exp()).min(1.0)
}

/// Expected number of ancestor queries for true leaf `y`.
pub fn expected_tree_queries(tree: &Tree, y: usize, params: &TreeSamplerParams) -> f64 {
    (0..tree.num_nodes()).map(|v| tree_query_probability(tree, y, v, params)).sum()
}

/// Samples each node independently.
pub fn sample_tree_queries(tree: &Tree, y: usize, params: &TreeSamplerParams, seed: u64) -> Vec<ProbeIndex> {
    let mut rng = rng_from_seed(seed);
    tree.preorder()
        .iter()
        .filter(|&&v| rng.random::<f64>() < tree_query_probability(tree, y, v, params))
        .map(|&v| ProbeIndex::Node(v as u32))
        .collect()
}

/// How the label tree of the tree task is built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TreeShape {
    Balanced { leaves: usize, branching: usize },
    Random { leaves: usize, max_branching: usize, chain_prob: f64, seed: u64 },
}

impl Default for TreeShape {
    fn default() -> Self {
        TreeShape::Random { leaves: 1000, max_branching: 14, chain_prob: 0.1, seed: 1 }
    }
}

impl TreeShape {
    pub fn build(&self) -> Result<Tree> {
        match *self {
            TreeShape::Balanced { leaves, branching } => Tree::balanced(leaves, branching),
            TreeShape::Random { leaves, max_branching, chain_prob, seed } => {
                Tree::random_hierarchy(leaves, max_branching, chain_prob, seed)
            }
        }
    }

    /// The tree shape with a different leaf count.
    pub fn with_leaves(self, n: usize) -> Self {
        match self {
            TreeShape::Balanced { branching, .. } => TreeShape::Balanced { leaves: n, branching },
            TreeShape::Random { max_branching, chain_prob, seed, .. } => {
                TreeShape::Random { leaves: n, max_branching, chain_prob, seed }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ranking,
    Tree,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ranking" => Ok(Task::Ranking),
            "tree" => Ok(Task::Tree),
            _ => Err(Error::Parse(format!("unknown task '{s}'"))),
        }
    }
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Task::Ranking => "ranking",
            Task::Tree => "tree",
        })
    }
}

/// Everything needed to regenerate a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub task: Task,
    pub n: usize,
    pub seed: u64,
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

impl GeneratorConfig {
    pub fn new(task: Task, n: usize, seed: u64) -> Self {
        Self {
            task,
            n,
            seed,
            ranking: RankingModel::default(),
            pair_sampler: PairSamplerParams::default(),
            tree_shape: TreeShape::default(),
            tree_model: TreeModelParams::default(),
            tree_sampler: TreeSamplerParams::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.task {
            Task::Ranking => {
                self.ranking.validate()?;
                self.pair_sampler.validate()
            }
            Task::Tree => {
                self.tree_model.validate()?;
                self.tree_sampler.validate()
            }
        }
    }

    /// The probe family of the generated labels.
    pub fn family(&self) -> Result<ProbeFamily> {
        Ok(match self.task {
            Task::Ranking => ProbeFamily::PairwiseRanking { k: self.ranking.k },
            Task::Tree => ProbeFamily::TreeAncestor(Arc::new(self.tree_shape.build()?)),
        })
    }
}

/// A generated dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub config: GeneratorConfig,
    pub family: ProbeFamily,
    pub examples: Vec<WeakExample>,
}

fn answers_for(family: &ProbeFamily, label: &Label, queries: Vec<ProbeIndex>) -> Result<UserFeedback> {
    queries.into_iter().map(|q| Ok((q, evaluate_probe(family, &q, label)?))).collect()
}

/// Example `index` of a dataset built from `config`, drawn in the given family.
///
/// Instances whose query set comes out empty are redrawn from the next
/// derived seed.
pub fn generate_example(config: &GeneratorConfig, family: &ProbeFamily, index: usize) -> Result<WeakExample> {
    let example_seed = derive_seed(config.seed, index as u64);
    for attempt in 0..MAX_QUERY_ATTEMPTS {
        let seed = derive_seed(example_seed, attempt);
        let (label, queries, scores, acc) = match (config.task, family) {
            (Task::Ranking, _) => {
                let ex = gen_ranking_example(&config.ranking, derive_seed(seed, 0))?;
                let q = sample_pair_queries(&ex.relevance, &config.pair_sampler, derive_seed(seed, 1));
                (Label::Permutation(ex.label), q, ex.scores, ex.acc)
            }
            (Task::Tree, ProbeFamily::TreeAncestor(tree)) => {
                let model = TreeModel { tree: tree.clone(), params: config.tree_model };
                let ex = gen_tree_example(&model, derive_seed(seed, 0))?;
                let q = sample_tree_queries(tree, ex.leaf as usize, &config.tree_sampler, derive_seed(seed, 1));
                (Label::TreeLeaf(ex.leaf), q, ex.scores, ex.acc)
            }
            (Task::Tree, _) => return Err(Error::domain("the tree task needs a tree family")),
        };
        if queries.is_empty() {
            continue;
        }
        let feedback = answers_for(family, &label, queries)?;
        return Ok(WeakExample {
            id: format!("{}-{index}", config.task),
            scores: Some(scores),
            acc: Some(acc),
            feedback,
            label: Some(label),
        });
    }
    Err(Error::domain(format!(
        "no instance with a nonempty query set after {MAX_QUERY_ATTEMPTS} attempts; the sampler parameters ask nothing"
    )))
}

/// Generates `config.n` examples.
pub fn generate(config: &GeneratorConfig, exec: Exec) -> Result<Dataset> {
    config.validate()?;
    let family = config.family()?;
    let examples =
        exec.map_range(config.n, |i| generate_example(config, &family, i)).into_iter().collect::<Result<Vec<_>>>()?;
    Ok(Dataset { config: config.clone(), family, examples })
}

/// Generates examples `start..start + n` of the stream defined by `config`.
pub fn generate_range(
    config: &GeneratorConfig,
    family: &ProbeFamily,
    start: usize,
    n: usize,
    exec: Exec,
) -> Result<Vec<WeakExample>> {
    exec.map_range(n, |i| generate_example(config, family, start + i)).into_iter().collect()
}
