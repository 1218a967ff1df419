//! Label spaces, probe families and probe-adapted predictive sets.
//!
//! Conventions:
//! - Items, ranks and bit positions are 1-based, tree nodes are 0-based.
//! - A permutation is stored as `y[k - 1]` = item at rank `k`.
//! - Canonical index order: pairs `(i, j)`, `i < j`, lexicographic; rank
//!   positions by rank then item; tree nodes in preorder; bits ascending.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use itertools::Itertools;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::tree::Tree;

/// A probe answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sign {
    Neg,
    Pos,
}

impl Sign {
    pub fn from_bool(positive: bool) -> Sign {
        if positive {
            Sign::Pos
        } else {
            Sign::Neg
        }
    }

    /// Sign of a real score; zero maps to `Pos`.
    pub fn of(x: f64) -> Sign {
        Sign::from_bool(x >= 0.0)
    }

    pub fn to_i8(self) -> i8 {
        match self {
            Sign::Neg => -1,
            Sign::Pos => 1,
        }
    }

    pub fn from_i64(v: i64) -> Result<Sign> {
        match v {
            1 => Ok(Sign::Pos),
            -1 => Ok(Sign::Neg),
            other => Err(Error::Parse(format!("probe answer must be +1 or -1, got {other}"))),
        }
    }

    pub fn flip(self) -> Sign {
        match self {
            Sign::Neg => Sign::Pos,
            Sign::Pos => Sign::Neg,
        }
    }
}

impl Serialize for Sign {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_i8(self.to_i8())
    }
}

impl<'de> Deserialize<'de> for Sign {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = i64::deserialize(d)?;
        Sign::from_i64(v).map_err(serde::de::Error::custom)
    }
}

/// Key of a single probe function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProbeIndex {
    /// Is item `i` ranked above item `j`? Requires `i < j`.
    Pair(u32, u32),
    /// Does item `item` sit at rank `rank`?
    RankItem { rank: u32, item: u32 },
    /// Is the node an ancestor of the leaf label?
    Node(u32),
    /// Value of the given coordinate.
    Bit(u32),
}

impl fmt::Display for ProbeIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProbeIndex::Pair(i, j) => write!(f, "p:{i}-{j}"),
            ProbeIndex::RankItem { rank, item } => write!(f, "r:{rank}-{item}"),
            ProbeIndex::Node(v) => write!(f, "t:{v}"),
            ProbeIndex::Bit(k) => write!(f, "b:{k}"),
        }
    }
}

impl FromStr for ProbeIndex {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("invalid probe key {s:?}"));
        let (tag, rest) = s.split_once(':').ok_or_else(bad)?;
        let num = |x: &str| x.parse::<u32>().map_err(|_| bad());
        let pair = |x: &str| -> Result<(u32, u32)> {
            let (a, b) = x.split_once('-').ok_or_else(bad)?;
            Ok((num(a)?, num(b)?))
        };
        match tag {
            "p" => {
                let (i, j) = pair(rest)?;
                if i >= j {
                    return Err(bad());
                }
                Ok(ProbeIndex::Pair(i, j))
            }
            "r" => {
                let (rank, item) = pair(rest)?;
                Ok(ProbeIndex::RankItem { rank, item })
            }
            "t" => Ok(ProbeIndex::Node(num(rest)?)),
            "b" => Ok(ProbeIndex::Bit(num(rest)?)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ProbeIndex {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ProbeIndex {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A structured label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    /// `y[k - 1]` is the item (1-based) at rank `k`.
    Permutation(Vec<u32>),
    /// Entries in {-1, +1}.
    BitVector(Vec<i8>),
    TreeLeaf(u32),
}

impl Label {
    /// Ranks of each item: `inv[item - 1]` = rank (1-based).
    pub fn inverse_permutation(perm: &[u32]) -> Vec<u32> {
        let mut inv = vec![0; perm.len()];
        for (pos, &item) in perm.iter().enumerate() {
            inv[item as usize - 1] = pos as u32 + 1;
        }
        inv
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyKind {
    PairwiseRanking,
    RankPosition,
    TreeAncestor,
    Bitvector,
}

impl FamilyKind {
    pub fn tag(self) -> &'static str {
        match self {
            FamilyKind::PairwiseRanking => "pairwise-ranking",
            FamilyKind::RankPosition => "rank-position",
            FamilyKind::TreeAncestor => "tree-ancestor",
            FamilyKind::Bitvector => "bitvector",
        }
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pairwise-ranking" => Ok(FamilyKind::PairwiseRanking),
            "rank-position" => Ok(FamilyKind::RankPosition),
            "tree-ancestor" => Ok(FamilyKind::TreeAncestor),
            "bitvector" => Ok(FamilyKind::Bitvector),
            _ => Err(Error::Parse(format!("unknown probe family {s:?}"))),
        }
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// A probe family over one label space.
#[derive(Debug, Clone, PartialEq)]
pub enum ProbeFamily {
    /// Pairwise comparisons over the permutations of `k` items.
    PairwiseRanking { k: u32 },
    /// Rank-position indicators over the permutations of `k` items.
    RankPosition { k: u32 },
    /// Reflexive ancestor queries over the leaves of a tree.
    TreeAncestor(Arc<Tree>),
    /// Coordinates of `{-1, +1}^k`.
    Bitvector { k: u32 },
}

impl ProbeFamily {
    pub fn kind(&self) -> FamilyKind {
        match self {
            ProbeFamily::PairwiseRanking { .. } => FamilyKind::PairwiseRanking,
            ProbeFamily::RankPosition { .. } => FamilyKind::RankPosition,
            ProbeFamily::TreeAncestor(_) => FamilyKind::TreeAncestor,
            ProbeFamily::Bitvector { .. } => FamilyKind::Bitvector,
        }
    }

    pub fn tree(&self) -> Option<&Tree> {
        match self {
            ProbeFamily::TreeAncestor(t) => Some(t),
            _ => None,
        }
    }

    pub fn contains_index(&self, index: &ProbeIndex) -> bool {
        match (self, *index) {
            (ProbeFamily::PairwiseRanking { k }, ProbeIndex::Pair(i, j)) => 1 <= i && i < j && j <= *k,
            (ProbeFamily::RankPosition { k }, ProbeIndex::RankItem { rank, item }) => {
                (1..=*k).contains(&rank) && (1..=*k).contains(&item)
            }
            (ProbeFamily::TreeAncestor(t), ProbeIndex::Node(v)) => t.contains(v as usize),
            (ProbeFamily::Bitvector { k }, ProbeIndex::Bit(b)) => (1..=*k).contains(&b),
            _ => false,
        }
    }

    /// Every probe index, in canonical order.
    pub fn indices(&self) -> Vec<ProbeIndex> {
        match self {
            ProbeFamily::PairwiseRanking { k } => {
                (1..=*k).tuple_combinations().map(|(i, j)| ProbeIndex::Pair(i, j)).collect()
            }
            ProbeFamily::RankPosition { k } => {
                (1..=*k).cartesian_product(1..=*k).map(|(rank, item)| ProbeIndex::RankItem { rank, item }).collect()
            }
            ProbeFamily::TreeAncestor(t) => t.preorder().iter().map(|&v| ProbeIndex::Node(v as u32)).collect(),
            ProbeFamily::Bitvector { k } => (1..=*k).map(ProbeIndex::Bit).collect(),
        }
    }

    /// Size of the label space, saturating at `u128::MAX`.
    pub fn space_size(&self) -> u128 {
        match self {
            ProbeFamily::PairwiseRanking { k } | ProbeFamily::RankPosition { k } => {
                (1..=*k as u128).try_fold(1u128, |acc, x| acc.checked_mul(x)).unwrap_or(u128::MAX)
            }
            ProbeFamily::TreeAncestor(t) => t.leaves().len() as u128,
            ProbeFamily::Bitvector { k } => 1u128.checked_shl(*k).unwrap_or(u128::MAX),
        }
    }

    /// Enumerates the label space, failing if it has more than `max_space_size` labels.
    pub fn labels(&self, max_space_size: u128) -> Result<Vec<Label>> {
        let size = self.space_size();
        if size > max_space_size {
            return Err(Error::Capacity { size, limit: max_space_size });
        }
        Ok(match self {
            ProbeFamily::PairwiseRanking { k } | ProbeFamily::RankPosition { k } => {
                (1..=*k).permutations(*k as usize).map(Label::Permutation).collect()
            }
            ProbeFamily::TreeAncestor(t) => t.leaves().iter().map(|&v| Label::TreeLeaf(v as u32)).collect(),
            ProbeFamily::Bitvector { k } => (0..1u64 << *k)
                .map(|mask| Label::BitVector((0..*k).map(|b| if mask >> b & 1 == 1 { -1 } else { 1 }).collect()))
                .collect(),
        })
    }

    pub fn validate_label(&self, label: &Label) -> Result<()> {
        match (self, label) {
            (ProbeFamily::PairwiseRanking { k } | ProbeFamily::RankPosition { k }, Label::Permutation(p)) => {
                let mut seen = vec![false; *k as usize];
                if p.len() != *k as usize {
                    return Err(Error::domain(format!("permutation must have {k} entries")));
                }
                for &item in p {
                    if item == 0 || item > *k || std::mem::replace(&mut seen[item as usize - 1], true) {
                        return Err(Error::domain(format!("{p:?} is not a permutation of 1..={k}")));
                    }
                }
                Ok(())
            }
            (ProbeFamily::TreeAncestor(t), Label::TreeLeaf(v)) => {
                if t.contains(*v as usize) && t.is_leaf(*v as usize) {
                    Ok(())
                } else {
                    Err(Error::domain(format!("node {v} is not a leaf of the tree")))
                }
            }
            (ProbeFamily::Bitvector { k }, Label::BitVector(b)) => {
                if b.len() == *k as usize && b.iter().all(|&x| x == 1 || x == -1) {
                    Ok(())
                } else {
                    Err(Error::domain(format!("{b:?} is not a vector in {{-1,+1}}^{k}")))
                }
            }
            _ => Err(Error::domain(format!("label {label:?} does not belong to {}", self.kind()))),
        }
    }

    fn validate_index(&self, index: &ProbeIndex) -> Result<()> {
        if self.contains_index(index) {
            Ok(())
        } else {
            Err(Error::domain(format!("probe {index} is not in the {} family", self.kind())))
        }
    }

    /// Probe value for an already validated index and label.
    fn eval_unchecked(&self, index: &ProbeIndex, label: &Label) -> Sign {
        match (index, label) {
            (ProbeIndex::Pair(i, j), Label::Permutation(p)) => {
                let rank_of = |item: u32| p.iter().position(|&x| x == item).unwrap();
                Sign::from_bool(rank_of(*j) > rank_of(*i))
            }
            (ProbeIndex::RankItem { rank, item }, Label::Permutation(p)) => {
                Sign::from_bool(p[*rank as usize - 1] == *item)
            }
            (ProbeIndex::Node(v), Label::TreeLeaf(y)) => {
                let t = self.tree().expect("tree family");
                Sign::from_bool(t.is_ancestor(*v as usize, *y as usize))
            }
            (ProbeIndex::Bit(b), Label::BitVector(bits)) => Sign::from_bool(bits[*b as usize - 1] > 0),
            _ => unreachable!("index and label validated against the same family"),
        }
    }
}

/// Value of probe `index` on `label`.
pub fn evaluate_probe(family: &ProbeFamily, index: &ProbeIndex, label: &Label) -> Result<Sign> {
    family.validate_index(index)?;
    family.validate_label(label)?;
    Ok(family.eval_unchecked(index, label))
}

/// Probe value on an explicit finite set: `Some(sign)` if every member agrees,
/// `None` (the value 0) otherwise.
pub fn probe_of_explicit_set(family: &ProbeFamily, index: &ProbeIndex, labels: &[Label]) -> Result<Option<Sign>> {
    let (first, rest) = labels.split_first().ok_or_else(|| Error::domain("empty label set"))?;
    let value = evaluate_probe(family, index, first)?;
    for label in rest {
        if evaluate_probe(family, index, label)? != value {
            return Ok(None);
        }
    }
    Ok(Some(value))
}

/// A probe-adapted predictive set, represented by the probes it answers.
///
/// The set is `{y : phi_i(y) = answers[i] for every answered i}`; no answers
/// means the whole label space.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbeAdaptedSet {
    answers: BTreeMap<ProbeIndex, Sign>,
}

impl ProbeAdaptedSet {
    /// The full label space.
    pub fn full() -> Self {
        Self::default()
    }

    pub fn from_answers(answers: BTreeMap<ProbeIndex, Sign>) -> Self {
        Self { answers }
    }

    pub fn answers(&self) -> &BTreeMap<ProbeIndex, Sign> {
        &self.answers
    }

    pub fn answer(&self, index: &ProbeIndex) -> Option<Sign> {
        self.answers.get(index).copied()
    }

    pub fn is_answered(&self, index: &ProbeIndex) -> bool {
        self.answers.contains_key(index)
    }

    /// Number of answered probes, `|I(C)|`.
    pub fn num_answered(&self) -> usize {
        self.answers.len()
    }

    pub fn is_full_space(&self) -> bool {
        self.answers.is_empty()
    }

    /// `true` if every index of `self` is answered by `other` with the same sign,
    /// that is, `other` is a subset of `self` as a set of labels.
    pub fn contains_set(&self, other: &ProbeAdaptedSet) -> bool {
        self.answers.iter().all(|(i, s)| other.answer(i) == Some(*s))
    }

    pub fn into_answers(self) -> BTreeMap<ProbeIndex, Sign> {
        self.answers
    }
}

impl FromIterator<(ProbeIndex, Sign)> for ProbeAdaptedSet {
    fn from_iter<T: IntoIterator<Item = (ProbeIndex, Sign)>>(iter: T) -> Self {
        Self { answers: iter.into_iter().collect() }
    }
}

/// Whether `label` satisfies every answer recorded in `set`.
pub fn membership(set: &ProbeAdaptedSet, family: &ProbeFamily, label: &Label) -> Result<bool> {
    family.validate_label(label)?;
    for (index, sign) in set.answers() {
        family.validate_index(index)?;
        if family.eval_unchecked(index, label) != *sign {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Whether the probe vector map `labels -> (eval(i, y))_i` is injective.
pub fn probe_vectors_injective<F>(labels: &[Label], indices: &[ProbeIndex], eval: F) -> bool
where
    F: Fn(&ProbeIndex, &Label) -> Sign,
{
    let mut seen = HashSet::with_capacity(labels.len());
    labels.iter().all(|y| {
        let v: Vec<Sign> = indices.iter().map(|i| eval(i, y)).collect();
        seen.insert(v)
    })
}

/// Exhaustively checks that distinct labels have distinct probe vectors.
pub fn check_identifiability(family: &ProbeFamily, max_space_size: u128) -> Result<bool> {
    let labels = family.labels(max_space_size)?;
    let indices = family.indices();
    Ok(probe_vectors_injective(&labels, &indices, |i, y| family.eval_unchecked(i, y)))
}

/// The weak set: every label consistent with the answered queries.
/// `answers` must define a value for every query.
pub fn materialize_weak_set(
    family: &ProbeFamily,
    queries: &BTreeSet<ProbeIndex>,
    answers: &BTreeMap<ProbeIndex, Sign>,
    max_space_size: u128,
) -> Result<Vec<Label>> {
    let constraints: Vec<(ProbeIndex, Sign)> = queries
        .iter()
        .map(|q| {
            family.validate_index(q)?;
            answers.get(q).map(|s| (*q, *s)).ok_or_else(|| Error::domain(format!("query {q} has no answer")))
        })
        .collect::<Result<_>>()?;
    Ok(family
        .labels(max_space_size)?
        .into_iter()
        .filter(|y| constraints.iter().all(|(i, s)| family.eval_unchecked(i, y) == *s))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::{IndexedRandom, SliceRandom};
    use rand::Rng;

    fn perm(v: &[u32]) -> Label {
        Label::Permutation(v.to_vec())
    }

    fn demo_tree() -> Arc<Tree> {
        Arc::new(Tree::from_parents(&[-1, 0, 0, 1, 1, 2, 2, 6]).unwrap())
    }

    #[test]
    fn evaluate_probe_examples() {
        let f = ProbeFamily::PairwiseRanking { k: 3 };
        assert_eq!(evaluate_probe(&f, &ProbeIndex::Pair(1, 2), &perm(&[1, 2, 3])), Ok(Sign::Pos));
        assert_eq!(evaluate_probe(&f, &ProbeIndex::Pair(1, 2), &perm(&[2, 1, 3])), Ok(Sign::Neg));

        let t = ProbeFamily::TreeAncestor(demo_tree());
        for leaf in [3, 4, 5, 7] {
            assert_eq!(evaluate_probe(&t, &ProbeIndex::Node(0), &Label::TreeLeaf(leaf)), Ok(Sign::Pos));
        }
        assert_eq!(evaluate_probe(&t, &ProbeIndex::Node(7), &Label::TreeLeaf(7)), Ok(Sign::Pos));
        assert_eq!(evaluate_probe(&t, &ProbeIndex::Node(1), &Label::TreeLeaf(7)), Ok(Sign::Neg));

        let r = ProbeFamily::RankPosition { k: 3 };
        let idx = ProbeIndex::RankItem { rank: 1, item: 1 };
        assert_eq!(evaluate_probe(&r, &idx, &perm(&[1, 2, 3])), Ok(Sign::Pos));
        assert_eq!(evaluate_probe(&r, &idx, &perm(&[2, 1, 3])), Ok(Sign::Neg));
    }

    #[test]
    fn evaluate_probe_domain_errors() {
        let f = ProbeFamily::PairwiseRanking { k: 3 };
        assert!(evaluate_probe(&f, &ProbeIndex::Pair(1, 4), &perm(&[1, 2, 3])).is_err());
        assert!(evaluate_probe(&f, &ProbeIndex::Bit(1), &perm(&[1, 2, 3])).is_err());
        assert!(evaluate_probe(&f, &ProbeIndex::Pair(1, 2), &perm(&[1, 1, 3])).is_err());
        let t = ProbeFamily::TreeAncestor(demo_tree());
        // Node 1 is internal, not a label.
        assert!(evaluate_probe(&t, &ProbeIndex::Node(0), &Label::TreeLeaf(1)).is_err());
    }

    #[test]
    fn probe_of_explicit_set_examples() {
        let f = ProbeFamily::PairwiseRanking { k: 4 };
        let y = perm(&[2, 4, 1, 3]);
        for i in f.indices() {
            assert_eq!(
                probe_of_explicit_set(&f, &i, std::slice::from_ref(&y)).unwrap(),
                Some(evaluate_probe(&f, &i, &y).unwrap())
            );
        }
        let opposite = [perm(&[1, 2, 3, 4]), perm(&[4, 3, 2, 1])];
        for i in f.indices() {
            assert_eq!(probe_of_explicit_set(&f, &i, &opposite).unwrap(), None);
        }

        let b = ProbeFamily::Bitvector { k: 2 };
        let set = [Label::BitVector(vec![1, 1]), Label::BitVector(vec![1, -1])];
        assert_eq!(probe_of_explicit_set(&b, &ProbeIndex::Bit(1), &set).unwrap(), Some(Sign::Pos));
        assert_eq!(probe_of_explicit_set(&b, &ProbeIndex::Bit(2), &set).unwrap(), None);
        assert!(probe_of_explicit_set(&b, &ProbeIndex::Bit(2), &[]).is_err());
    }

    #[test]
    fn membership_examples() {
        let f = ProbeFamily::PairwiseRanking { k: 3 };
        assert!(membership(&ProbeAdaptedSet::full(), &f, &perm(&[3, 1, 2])).unwrap());
        let set: ProbeAdaptedSet = [(ProbeIndex::Pair(1, 2), Sign::Pos)].into_iter().collect();
        assert!(membership(&set, &f, &perm(&[1, 2, 3])).unwrap());
        assert!(!membership(&set, &f, &perm(&[2, 1, 3])).unwrap());
    }

    #[test]
    fn identifiability_examples() {
        assert_eq!(check_identifiability(&ProbeFamily::PairwiseRanking { k: 3 }, 1000), Ok(true));
        assert_eq!(check_identifiability(&ProbeFamily::Bitvector { k: 4 }, 1000), Ok(true));
        let labels = ProbeFamily::PairwiseRanking { k: 3 }.labels(100).unwrap();
        assert!(!probe_vectors_injective(&labels, &[ProbeIndex::Pair(1, 2)], |_, _| Sign::Pos));
        assert!(matches!(
            check_identifiability(&ProbeFamily::PairwiseRanking { k: 6 }, 100),
            Err(Error::Capacity { size: 720, limit: 100 })
        ));
    }

    #[test]
    fn weak_set_examples() {
        let f = ProbeFamily::PairwiseRanking { k: 3 };
        let none = materialize_weak_set(&f, &BTreeSet::new(), &BTreeMap::new(), 100).unwrap();
        assert_eq!(none.len(), 6);

        let y = perm(&[1, 2, 3]);
        let answers: BTreeMap<_, _> =
            f.indices().into_iter().map(|i| (i, evaluate_probe(&f, &i, &y).unwrap())).collect();
        let queries: BTreeSet<_> = answers.keys().copied().collect();
        assert_eq!(materialize_weak_set(&f, &queries, &answers, 100).unwrap(), vec![y]);

        let b = ProbeFamily::Bitvector { k: 3 };
        let q: BTreeSet<_> = [ProbeIndex::Bit(1)].into();
        let a: BTreeMap<_, _> = [(ProbeIndex::Bit(1), Sign::Pos)].into();
        assert_eq!(materialize_weak_set(&b, &q, &a, 100).unwrap().len(), 4);
    }

    #[test]
    fn canonical_orders() {
        assert_eq!(
            ProbeFamily::PairwiseRanking { k: 3 }.indices(),
            vec![ProbeIndex::Pair(1, 2), ProbeIndex::Pair(1, 3), ProbeIndex::Pair(2, 3)]
        );
        let t = ProbeFamily::TreeAncestor(Arc::new(Tree::from_parents(&[-1, 2, 0, 0]).unwrap()));
        let nodes: Vec<_> = t.indices();
        assert_eq!(nodes, vec![ProbeIndex::Node(0), ProbeIndex::Node(2), ProbeIndex::Node(1), ProbeIndex::Node(3)]);
    }

    #[test]
    fn probe_key_strings() {
        for (key, s) in [
            (ProbeIndex::Pair(1, 12), "p:1-12"),
            (ProbeIndex::RankItem { rank: 3, item: 2 }, "r:3-2"),
            (ProbeIndex::Node(0), "t:0"),
            (ProbeIndex::Bit(7), "b:7"),
        ] {
            assert_eq!(key.to_string(), s);
            assert_eq!(s.parse::<ProbeIndex>().unwrap(), key);
        }
        for bad in ["p:2-1", "p:1", "x:1", "t:-1", "b:", "r:1-2-3"] {
            assert!(bad.parse::<ProbeIndex>().is_err(), "{bad}");
        }
    }

    fn random_small_family(rng: &mut impl Rng) -> ProbeFamily {
        match rng.random_range(0..4) {
            0 => ProbeFamily::PairwiseRanking { k: rng.random_range(2..=4) },
            1 => ProbeFamily::RankPosition { k: rng.random_range(2..=4) },
            2 => ProbeFamily::Bitvector { k: rng.random_range(1..=5) },
            _ => ProbeFamily::TreeAncestor(Arc::new(
                Tree::random_hierarchy(rng.random_range(1..=12), 4, 0.2, rng.random()).unwrap(),
            )),
        }
    }

    #[test]
    fn membership_matches_weak_set_materialization() {
        let mut rng = crate::rng::rng_from_seed(11);
        for _ in 0..1000 {
            let family = random_small_family(&mut rng);
            let labels = family.labels(1000).unwrap();
            let mut indices = family.indices();
            indices.shuffle(&mut rng);
            indices.truncate(rng.random_range(0..=indices.len()));
            let answers: BTreeMap<_, _> = indices.iter().map(|i| (*i, Sign::from_bool(rng.random()))).collect();
            let set = ProbeAdaptedSet::from_answers(answers.clone());
            let queries: BTreeSet<_> = answers.keys().copied().collect();
            let weak = materialize_weak_set(&family, &queries, &answers, 1000).unwrap();
            let y = labels.choose(&mut rng).unwrap();
            assert_eq!(membership(&set, &family, y).unwrap(), weak.contains(y));
        }
    }

    proptest! {
        #[test]
        fn probe_key_roundtrip(tag in 0u8..4, a in 0u32..500, b in 0u32..500) {
            let key = match tag {
                0 => ProbeIndex::Pair(a.min(b), a.max(b) + 1),
                1 => ProbeIndex::RankItem { rank: a, item: b },
                2 => ProbeIndex::Node(a),
                _ => ProbeIndex::Bit(b),
            };
            prop_assert_eq!(key.to_string().parse::<ProbeIndex>().unwrap(), key);
        }

        #[test]
        fn singleton_extension_agrees(k in 2u32..=4, pick in any::<prop::sample::Index>()) {
            let f = ProbeFamily::RankPosition { k };
            let labels = f.labels(100).unwrap();
            let y = pick.get(&labels);
            for i in f.indices() {
                prop_assert_eq!(
                    probe_of_explicit_set(&f, &i, std::slice::from_ref(y)).unwrap(),
                    Some(evaluate_probe(&f, &i, y).unwrap())
                );
            }
        }
    }
}
