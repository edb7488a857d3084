//! Observation features: per-choice text embeddings concatenated in choice
//! order, with the hint embedding appended when present.
//!
//! Texts missing from the embedding table fall back to a hashed
//! bag-of-tokens vector.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::Observation;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: vector has {got} components, header says {expected}")]
    DimMismatch { line: usize, expected: usize, got: usize },
    #[error("line {line}: non-finite component")]
    NonFinite { line: usize },
}

/// Key normalization shared with the embedding exporter: trim, collapse
/// internal whitespace, lowercase.
pub fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMeta {
    pub model_name: String,
    pub created: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
    pub meta: EmbeddingMeta,
}

#[derive(Debug, Deserialize)]
struct HeaderLine {
    dim: usize,
    model: String,
    #[serde(default)]
    created: Option<String>,
}

#[derive(Debug, Deserialize)]
struct EntryLine {
    text: String,
    vec: Vec<f64>,
}

impl EmbeddingTable {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, text: &str) -> Option<&[f64]> {
        self.entries.get(&normalize_text(text)).map(Vec::as_slice)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Parses the embedding JSONL format: a `{"dim", "model"}` header line,
    /// then one `{"text", "vec"}` object per line.
    pub fn parse(text: &str) -> Result<EmbeddingTable, FeatureError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(FeatureError::Parse {
            line: 1,
            message: "missing header".into(),
        })?;
        let header: HeaderLine = serde_json::from_str(header).map_err(|e| FeatureError::Parse {
            line: 1,
            message: e.to_string(),
        })?;
        if header.dim == 0 {
            return Err(FeatureError::Parse {
                line: 1,
                message: "dim must be positive".into(),
            });
        }
        let mut entries = HashMap::new();
        for (line, raw) in lines {
            let entry: EntryLine = serde_json::from_str(raw).map_err(|e| FeatureError::Parse {
                line,
                message: e.to_string(),
            })?;
            if entry.vec.len() != header.dim {
                return Err(FeatureError::DimMismatch {
                    line,
                    expected: header.dim,
                    got: entry.vec.len(),
                });
            }
            if entry.vec.iter().any(|x| !x.is_finite()) {
                return Err(FeatureError::NonFinite { line });
            }
            let key = normalize_text(&entry.text);
            if entries.insert(key.clone(), entry.vec).is_some() {
                return Err(FeatureError::Parse {
                    line,
                    message: format!("duplicate text {key:?}"),
                });
            }
        }
        Ok(EmbeddingTable {
            dim: header.dim,
            entries,
            meta: EmbeddingMeta {
                model_name: header.model,
                created: header.created,
            },
        })
    }

    /// Writes the table in the format [`EmbeddingTable::parse`] reads, sorted
    /// by text.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::json!({"dim": self.dim, "model": self.meta.model_name}).to_string();
        out.push('\n');
        let mut keys: Vec<&String> = self.entries.keys().collect();
        keys.sort();
        for k in keys {
            let line = serde_json::json!({"text": k, "vec": self.entries[k]});
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn from_entries(
        dim: usize,
        model_name: &str,
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> EmbeddingTable {
        EmbeddingTable {
            dim,
            entries: entries
                .into_iter()
                .map(|(k, v)| {
                    assert_eq!(v.len(), dim, "vector length");
                    (normalize_text(&k), v)
                })
                .collect(),
            meta: EmbeddingMeta {
                model_name: model_name.to_string(),
                created: None,
            },
        }
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable, FeatureError> {
    EmbeddingTable::parse(&std::fs::read_to_string(path)?)
}

/// Signed feature hashing of lowercase alphanumeric tokens, L2-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HashFeaturizer {
    pub dim: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl HashFeaturizer {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "feature dimension must be positive");
        HashFeaturizer { dim }
    }

    pub fn featurize(&self, text: &str) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        for token in lower.split(|c: char| !c.is_alphanumeric()).filter(|t| !t.is_empty()) {
            let h = fnv1a(token.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            let sign = if (h >> 63) & 1 == 0 { 1.0 } else { -1.0 };
            v[bucket] += sign;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|x| *x /= norm);
        }
        v
    }
}

pub fn hash_featurize(text: &str, dim: usize) -> Vec<f64> {
    HashFeaturizer::new(dim).featurize(text)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub num_choices: usize,
    pub dim: usize,
    pub hint_included: bool,
}

impl Layout {
    pub fn len(&self) -> usize {
        self.num_choices * self.dim + if self.hint_included { self.dim } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub layout: Layout,
}

impl FeatureVector {
    pub fn choice(&self, i: usize) -> &[f64] {
        let d = self.layout.dim;
        &self.values[i * d..(i + 1) * d]
    }

    pub fn hint(&self) -> Option<&[f64]> {
        self.layout.hint_included.then(|| {
            let start = self.layout.num_choices * self.layout.dim;
            &self.values[start..start + self.layout.dim]
        })
    }
}

/// Text encoder used by learning agents: table lookup with hashed fallback.
#[derive(Debug, Clone)]
pub struct Featurizer {
    pub table: Option<EmbeddingTable>,
    pub fallback: HashFeaturizer,
    pub include_hint: bool,
}

impl Featurizer {
    pub fn hashed(dim: usize, include_hint: bool) -> Self {
        Featurizer {
            table: None,
            fallback: HashFeaturizer::new(dim),
            include_hint,
        }
    }

    pub fn with_table(table: EmbeddingTable, include_hint: bool) -> Self {
        let fallback = HashFeaturizer::new(table.dim());
        Featurizer {
            table: Some(table),
            fallback,
            include_hint,
        }
    }

    pub fn dim(&self) -> usize {
        self.fallback.dim
    }

    pub fn embed(&self, text: &str) -> Vec<f64> {
        match self.table.as_ref().and_then(|t| t.get(text)) {
            Some(v) => v.to_vec(),
            None => self.fallback.featurize(text),
        }
    }

    pub fn featurize(&self, obs: &Observation) -> FeatureVector {
        featurize_with(obs, self.table.as_ref(), &self.fallback, self.include_hint)
    }
}

/// `h_1 ++ ... ++ h_n` over the choices, then the hint embedding when the
/// observation has one and `include_hint` is set.
pub fn featurize(obs: &Observation, table: &EmbeddingTable, fallback: &HashFeaturizer) -> FeatureVector {
    featurize_with(obs, Some(table), fallback, true)
}

fn featurize_with(
    obs: &Observation,
    table: Option<&EmbeddingTable>,
    fallback: &HashFeaturizer,
    include_hint: bool,
) -> FeatureVector {
    let dim = fallback.dim;
    if let Some(t) = table {
        assert_eq!(t.dim(), dim, "embedding table and fallback disagree on dim");
    }
    let embed = |text: &str| match table.and_then(|t| t.get(text)) {
        Some(v) => v.to_vec(),
        None => fallback.featurize(text),
    };
    let hint = obs.hint.as_deref().filter(|_| include_hint);
    let mut values = Vec::with_capacity((obs.choices.len() + 1) * dim);
    for c in &obs.choices {
        values.extend(embed(c));
    }
    if let Some(h) = hint {
        values.extend(embed(h));
    }
    FeatureVector {
        values,
        layout: Layout {
            num_choices: obs.choices.len(),
            dim,
            hint_included: hint.is_some(),
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(choices: &[&str], hint: Option<&str>) -> Observation {
        Observation::visible(
            "q".into(),
            choices.iter().map(|s| s.to_string()).collect(),
            hint.map(String::from),
        )
    }

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_entries(
            4,
            "test",
            [
                ("go home".to_string(), vec![1.0, 2.0, 3.0, 4.0]),
                ("pay".to_string(), vec![5.0, 6.0, 7.0, 8.0]),
            ],
        )
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_text("  Take   the\tBus \n"), "take the bus");
    }

    #[test]
    fn concatenation_of_known_texts() {
        let f = featurize(&obs(&["Go  Home", "pay"], None), &table(), &HashFeaturizer::new(4));
        assert_eq!(f.values, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(f.layout.len(), 8);
    }

    #[test]
    fn permuting_choices_permutes_blocks() {
        let fb = HashFeaturizer::new(4);
        let a = featurize(&obs(&["go home", "unseen text", "pay"], Some("hint")), &table(), &fb);
        let b = featurize(&obs(&["pay", "go home", "unseen text"], Some("hint")), &table(), &fb);
        assert_eq!(a.choice(0), b.choice(1));
        assert_eq!(a.choice(1), b.choice(2));
        assert_eq!(a.choice(2), b.choice(0));
        assert_eq!(a.hint(), b.hint());
        assert_eq!(a.values.len(), 16);
    }

    #[test]
    fn unseen_text_uses_fallback() {
        let fb = HashFeaturizer::new(4);
        let f = featurize(&obs(&["never seen", "pay"], None), &table(), &fb);
        assert_eq!(f.choice(0), fb.featurize("never seen").as_slice());
        assert_eq!(f, featurize(&obs(&["never seen", "pay"], None), &table(), &fb));
    }

    #[test]
    fn hashed_features() {
        let fb = HashFeaturizer::new(32);
        assert!(fb.featurize("").iter().all(|&x| x == 0.0));
        assert!(fb.featurize("  ,, ").iter().all(|&x| x == 0.0));
        assert_eq!(fb.featurize("take bus"), fb.featurize("bus take"));
        let v = fb.featurize("drive to the pharmacy");
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parse_errors() {
        let ok = "{\"dim\": 2, \"model\": \"m\"}\n{\"text\": \"a\", \"vec\": [0.5, 1.0]}\n";
        assert_eq!(EmbeddingTable::parse(ok).unwrap().len(), 1);
        let bad_dim = format!("{ok}{{\"text\": \"b\", \"vec\": [1.0]}}\n");
        assert!(matches!(EmbeddingTable::parse(&bad_dim), Err(FeatureError::DimMismatch { line: 3, .. })));
        let dup = format!("{ok}{{\"text\": \" A \", \"vec\": [2.0, 1.0]}}\n");
        assert!(matches!(EmbeddingTable::parse(&dup), Err(FeatureError::Parse { line: 3, .. })));
        assert!(matches!(EmbeddingTable::parse(""), Err(FeatureError::Parse { .. })));
    }

    #[test]
    fn jsonl_round_trip() {
        let t = EmbeddingTable::from_entries(
            3,
            "m",
            [("x".to_string(), vec![0.1, 1.0 / 3.0, -2e-17])],
        );
        assert_eq!(EmbeddingTable::parse(&t.to_jsonl()).unwrap(), t);
    }
}
