//! JSONL wire format for weakly supervised examples, canonical JSON output,
//! and dataset digests.
//!
//! One record per line, with sorted keys:
//!
//! ```json
//! {"acc":{"p:1-2":0.9},"answers":{"p:1-2":1},"family":"pairwise-ranking","id":"a","pred":{"p:1-2":1},"queries":["p:1-2"],"scores":{"p:1-2":2.2}}
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::calibrate::WeakExample;
use crate::error::{Error, Result};
use crate::loss::UserFeedback;
use crate::nested::{AccuracyVector, ScoreVector};
use crate::probe::{FamilyKind, Label, ProbeFamily, ProbeIndex, Sign};
use crate::synthetic::GeneratorConfig;
use crate::tree::Tree;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeakExampleRecord {
    pub id: String,
    pub family: FamilyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<BTreeMap<ProbeIndex, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acc: Option<BTreeMap<ProbeIndex, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred: Option<BTreeMap<ProbeIndex, Sign>>,
    pub queries: Vec<ProbeIndex>,
    pub answers: BTreeMap<ProbeIndex, Sign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
}

fn index_matches_kind(index: &ProbeIndex, kind: FamilyKind) -> bool {
    matches!(
        (index, kind),
        (ProbeIndex::Pair(..), FamilyKind::PairwiseRanking)
            | (ProbeIndex::RankItem { .. }, FamilyKind::RankPosition)
            | (ProbeIndex::Node(_), FamilyKind::TreeAncestor)
            | (ProbeIndex::Bit(_), FamilyKind::Bitvector)
    )
}

impl WeakExampleRecord {
    pub fn from_example(example: &WeakExample, family: FamilyKind) -> Self {
        Self {
            id: example.id.clone(),
            family,
            scores: example.scores.as_ref().map(|s| s.as_map().clone()),
            acc: example.acc.as_ref().map(|a| a.accuracies()),
            pred: example.acc.as_ref().map(|a| a.predictions()),
            queries: example.feedback.queries().copied().collect(),
            answers: example.feedback.answers().clone(),
            label: example.label.clone(),
        }
    }

    /// Checks the record's internal consistency.
    pub fn validate(&self) -> Result<()> {
        if self.queries.is_empty() {
            return Err(Error::Parse("record has no queries".into()));
        }
        let q: BTreeSet<&ProbeIndex> = self.queries.iter().collect();
        if q.len() != self.queries.len() {
            return Err(Error::Parse("duplicate query".into()));
        }
        if !q.iter().copied().eq(self.answers.keys()) {
            return Err(Error::Parse("answer keys must equal the query list".into()));
        }
        if self.acc.is_some() != self.pred.is_some() {
            return Err(Error::Parse("acc and pred must be given together".into()));
        }
        if self.scores.is_none() && self.acc.is_none() {
            return Err(Error::Parse("record needs scores or acc with pred".into()));
        }
        let keys = self
            .queries
            .iter()
            .chain(self.scores.iter().flat_map(|m| m.keys()))
            .chain(self.acc.iter().flat_map(|m| m.keys()));
        for k in keys {
            if !index_matches_kind(k, self.family) {
                return Err(Error::Parse(format!("probe key {k} does not belong to {}", self.family)));
            }
        }
        Ok(())
    }

    pub fn into_example(self) -> Result<WeakExample> {
        self.validate()?;
        let scores = self.scores.map(ScoreVector::new).transpose()?;
        let acc = match (self.pred, self.acc) {
            (Some(p), Some(a)) => Some(AccuracyVector::new(p, a)?),
            _ => None,
        };
        Ok(WeakExample { id: self.id, scores, acc, feedback: UserFeedback::new(self.answers), label: self.label })
    }
}

/// Serializes with lexicographically sorted object keys and shortest
/// round-trip float formatting.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String> {
    // serde_json's Map is a BTreeMap unless `preserve_order` is enabled, so
    // going through Value sorts every object.
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| Error::Parse(e.to_string()))
}

/// Pretty-printed canonical JSON.
pub fn to_canonical_json_pretty<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value).map_err(|e| Error::Parse(e.to_string()))?;
    serde_json::to_string_pretty(&v).map_err(|e| Error::Parse(e.to_string()))
}

/// One JSONL line per example.
pub fn write_jsonl(examples: &[WeakExample], family: FamilyKind) -> Result<String> {
    let mut out = String::new();
    for e in examples {
        out.push_str(&to_canonical_json(&WeakExampleRecord::from_example(e, family))?);
        out.push('\n');
    }
    Ok(out)
}

/// A parsed dataset file.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedDataset {
    /// `None` for an empty file.
    pub family: Option<FamilyKind>,
    pub examples: Vec<WeakExample>,
}

/// Parses JSONL records. Blank lines are skipped; errors name the 1-based line.
pub fn read_jsonl(reader: impl BufRead) -> Result<ParsedDataset> {
    let mut family = None;
    let mut examples = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: WeakExampleRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("line {lineno}: {e}")))?;
        match family {
            None => family = Some(record.family),
            Some(f) if f != record.family => {
                return Err(Error::Parse(format!(
                    "line {lineno}: family {} differs from earlier records ({f})",
                    record.family
                )))
            }
            Some(_) => {}
        }
        let example = record.into_example().map_err(|e| match e {
            Error::Parse(m) | Error::Domain(m) => Error::Parse(format!("line {lineno}: {m}")),
            other => other,
        })?;
        examples.push(example);
    }
    Ok(ParsedDataset { family, examples })
}

pub fn parse_jsonl(text: &str) -> Result<ParsedDataset> {
    read_jsonl(text.as_bytes())
}

/// Checks every probe key and label of `examples` against a concrete family.
pub fn validate_against(examples: &[WeakExample], family: &ProbeFamily) -> Result<()> {
    for e in examples {
        let keys = e
            .feedback
            .queries()
            .chain(e.scores.iter().flat_map(|s| s.as_map().keys()))
            .chain(e.acc.iter().flat_map(|a| a.iter().map(|(i, _, _)| i)).collect::<Vec<_>>());
        for k in keys {
            if !family.contains_index(k) {
                return Err(Error::Parse(format!("example '{}': probe {k} is not in the family", e.id)));
            }
        }
        if let Some(l) = &e.label {
            family.validate_label(l).map_err(|err| Error::Parse(format!("example '{}': {err}", e.id)))?;
        }
    }
    Ok(())
}

/// `sha256:<hex>` of the given bytes.
pub fn digest(bytes: &[u8]) -> String {
    format!("sha256:{}", hex::encode(Sha256::digest(bytes)))
}

/// Sidecar document written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetMeta {
    pub generator: GeneratorConfig,
    pub family: FamilyKind,
    pub n: usize,
    /// Parent array of the label tree, for the tree task.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tree: Option<Tree>,
    pub digest: String,
    pub notes: Vec<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::par::Exec;
    use crate::synthetic::{generate, Task};

    const LINE: &str = r#"{"acc":{"p:1-2":0.9},"answers":{"p:1-2":1},"family":"pairwise-ranking","id":"a","pred":{"p:1-2":1},"queries":["p:1-2"],"scores":{"p:1-2":2.2}}"#;

    #[test]
    fn documented_line_round_trips() {
        let parsed = parse_jsonl(LINE).unwrap();
        assert_eq!(parsed.family, Some(FamilyKind::PairwiseRanking));
        let out = write_jsonl(&parsed.examples, FamilyKind::PairwiseRanking).unwrap();
        assert_eq!(out.trim_end(), LINE);
    }

    #[test]
    fn errors_name_the_line() {
        let bad = format!("{LINE}\n\n{}", LINE.replace(r#""answers":{"p:1-2":1}"#, r#""answers":{}"#));
        let err = parse_jsonl(&bad).unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
        let err = parse_jsonl("{not json").unwrap_err().to_string();
        assert!(err.contains("line 1"), "{err}");
        let wrong_kind = LINE.replace("pairwise-ranking", "bitvector");
        assert!(parse_jsonl(&wrong_kind).is_err());
        let no_outputs = r#"{"answers":{"b:1":1},"family":"bitvector","id":"x","queries":["b:1"]}"#;
        assert!(parse_jsonl(no_outputs).is_err());
        let mixed = format!(
            "{LINE}\n{}",
            r#"{"answers":{"b:1":1},"family":"bitvector","id":"x","queries":["b:1"],"scores":{"b:1":1.0}}"#
        );
        assert!(parse_jsonl(&mixed).unwrap_err().to_string().contains("line 2"));
    }

    #[test]
    fn generated_data_round_trips() {
        for task in [Task::Ranking, Task::Tree] {
            let mut config = GeneratorConfig::new(task, 25, 3);
            config.tree_shape = config.tree_shape.with_leaves(50);
            let data = generate(&config, Exec::default()).unwrap();
            let text = write_jsonl(&data.examples, data.family.kind()).unwrap();
            let back = parse_jsonl(&text).unwrap();
            assert_eq!(back.examples, data.examples);
            validate_against(&back.examples, &data.family).unwrap();
            assert_eq!(write_jsonl(&back.examples, data.family.kind()).unwrap(), text);
        }
    }

    #[test]
    fn empty_file() {
        let parsed = parse_jsonl("").unwrap();
        assert!(parsed.examples.is_empty());
        assert_eq!(parsed.family, None);
    }

    #[test]
    fn digest_is_stable() {
        assert_eq!(digest(b"abc"), "sha256:ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
