//! Scenario data model: event sequence descriptions (ESDs), aligned event
//! clusters, and precomputed hint stores.
//!
//! Scenarios are read from a JSON document. Every loaded scenario is checked
//! by [`validate_scenario`]; a file that yields any error-severity finding is
//! rejected by [`load_scenario`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeIx, ScenarioGraph};

/// Shortest ESD that is kept. Shorter descriptions collapse straight to the
/// goal node.
pub const MIN_ESD_LEN: usize = 2;

const BUILTIN_SCENARIO: &str = include_str!("../assets/get_medicine.json");
const BUILTIN_HINTS: &str = include_str!("../assets/get_medicine.hints.jsonl");

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {}", format_findings(.0))]
    Validation(Vec<Finding>),
    #[error("hint file does not cover nodes: {}", .0.join(", "))]
    Coverage(Vec<String>),
    #[error("hint {hint:?} for node {node} repeats an action text verbatim")]
    Repeat { node: String, hint: String },
}

fn format_findings(findings: &[Finding]) -> String {
    findings
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .map(|f| f.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// One event of an ESD.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventDescription {
    pub esd_id: String,
    pub position: usize,
    pub text: String,
}

/// An event sequence description: one annotator's ordered account of the
/// scenario.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Esd {
    pub id: String,
    pub events: Vec<EventDescription>,
}

impl Esd {
    pub fn new(id: impl Into<String>, texts: &[&str]) -> Self {
        let id = id.into();
        let events = texts
            .iter()
            .enumerate()
            .map(|(position, text)| EventDescription {
                esd_id: id.clone(),
                position,
                text: text.to_string(),
            })
            .collect();
        Esd { id, events }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemberRef {
    pub esd: String,
    pub pos: usize,
}

/// A sub-step of an alternative sequence; each variant is a surface text that
/// can be shown as the choice for this sub-step.
pub type SubStep = Vec<String>;

/// A set of aligned events from different ESDs standing for one abstract
/// event, plus the alternative action sequences that carry it out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventCluster {
    pub id: String,
    pub label: String,
    pub members: Vec<MemberRef>,
    pub sequences: Vec<Vec<SubStep>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Scenario {
    pub title: String,
    pub esds: Vec<Esd>,
    pub clusters: Vec<EventCluster>,
    pub neg_distance: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FindingKind {
    NegDistance,
    DuplicateEsdId,
    DuplicateClusterId,
    TooShortEsd,
    EmptyText,
    DanglingMember,
    DuplicateMembership,
    UncoveredEvent,
    EmptyCluster,
    NoSequences,
    EmptySequence,
    EmptySubStep,
    SharedSurfaceText,
}

/// A validation result with its location in the scenario document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub kind: FindingKind,
    pub location: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.location, self.message)
    }
}

impl Finding {
    fn error(kind: FindingKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Error,
            kind,
            location: location.into(),
            message: message.into(),
        }
    }

    fn warning(kind: FindingKind, location: impl Into<String>, message: impl Into<String>) -> Self {
        Finding {
            severity: Severity::Warning,
            kind,
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct ScenarioFile {
    title: String,
    neg_distance: u32,
    esds: Vec<EsdFile>,
    clusters: Vec<EventCluster>,
}

#[derive(Debug, Serialize, Deserialize)]
struct EsdFile {
    id: String,
    events: Vec<String>,
}

impl From<ScenarioFile> for Scenario {
    fn from(file: ScenarioFile) -> Self {
        let esds = file
            .esds
            .into_iter()
            .map(|e| {
                let texts: Vec<&str> = e.events.iter().map(String::as_str).collect();
                Esd::new(e.id, &texts)
            })
            .collect();
        Scenario {
            title: file.title,
            esds,
            clusters: file.clusters,
            neg_distance: file.neg_distance,
        }
    }
}

impl Scenario {
    /// Parses and validates a scenario JSON document.
    pub fn from_json(text: &str) -> Result<Scenario, CorpusError> {
        let file: ScenarioFile =
            serde_json::from_str(text).map_err(|e| CorpusError::Parse(e.to_string()))?;
        let scenario = Scenario::from(file);
        let findings = validate_scenario(&scenario);
        if findings.iter().any(|f| f.severity == Severity::Error) {
            return Err(CorpusError::Validation(findings));
        }
        Ok(scenario)
    }

    pub fn to_json(&self) -> String {
        let file = ScenarioFile {
            title: self.title.clone(),
            neg_distance: self.neg_distance,
            esds: self
                .esds
                .iter()
                .map(|e| EsdFile {
                    id: e.id.clone(),
                    events: e.events.iter().map(|ev| ev.text.clone()).collect(),
                })
                .collect(),
            clusters: self.clusters.clone(),
        };
        serde_json::to_string_pretty(&file).expect("scenario serializes")
    }

    /// Cluster index of every `(esd, position)` event.
    pub fn membership(&self) -> HashMap<MemberRef, usize> {
        let mut map = HashMap::new();
        for (ci, cluster) in self.clusters.iter().enumerate() {
            for m in &cluster.members {
                map.entry(m.clone()).or_insert(ci);
            }
        }
        map
    }

    pub fn cluster_index(&self, id: &str) -> Option<usize> {
        self.clusters.iter().position(|c| c.id == id)
    }

    /// Number of alternative sequences of each cluster.
    pub fn split_counts(&self) -> Vec<usize> {
        self.clusters.iter().map(|c| c.sequences.len()).collect()
    }

    pub fn event_count(&self) -> usize {
        self.esds.iter().map(|e| e.events.len()).sum()
    }
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, CorpusError> {
    let text = read(path.as_ref())?;
    Scenario::from_json(&text)
}

pub fn save_scenario(scenario: &Scenario, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let path = path.as_ref();
    std::fs::write(path, scenario.to_json()).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// The bundled "Get Medicine" scenario.
pub fn builtin_scenario() -> Scenario {
    Scenario::from_json(BUILTIN_SCENARIO).expect("bundled scenario is valid")
}

/// Hint store matching [`builtin_scenario`].
pub fn builtin_hints(graph: &ScenarioGraph) -> HintStore {
    HintStore::parse(BUILTIN_HINTS, graph).expect("bundled hints are valid")
}

/// Mechanical checks on a parsed scenario. Editorial judgement about
/// inconsistent ESDs is left to the user.
pub fn validate_scenario(s: &Scenario) -> Vec<Finding> {
    use FindingKind::*;
    let mut findings = Vec::new();

    if s.neg_distance < 1 {
        findings.push(Finding::error(
            NegDistance,
            "neg_distance",
            "negative sampling distance must be at least 1",
        ));
    }

    let mut esd_len: HashMap<&str, usize> = HashMap::new();
    for (i, esd) in s.esds.iter().enumerate() {
        let loc = format!("esds[{i}] ({})", esd.id);
        if esd_len.insert(esd.id.as_str(), esd.events.len()).is_some() {
            findings.push(Finding::error(DuplicateEsdId, &loc, "duplicate ESD id"));
        }
        if esd.events.len() < MIN_ESD_LEN {
            findings.push(Finding::error(
                TooShortEsd,
                &loc,
                format!(
                    "ESD has {} event(s); at least {MIN_ESD_LEN} required",
                    esd.events.len()
                ),
            ));
        }
        for ev in &esd.events {
            if ev.text.trim().is_empty() {
                findings.push(Finding::error(
                    EmptyText,
                    format!("{loc}.events[{}]", ev.position),
                    "event text is empty",
                ));
            }
        }
    }

    let mut cluster_ids = HashSet::new();
    let mut owner: HashMap<&MemberRef, &str> = HashMap::new();
    for (i, c) in s.clusters.iter().enumerate() {
        let loc = format!("clusters[{i}] ({})", c.id);
        if !cluster_ids.insert(c.id.as_str()) {
            findings.push(Finding::error(DuplicateClusterId, &loc, "duplicate cluster id"));
        }
        if c.members.is_empty() {
            findings.push(Finding::error(
                EmptyCluster,
                &loc,
                "cluster has no members and is unreachable from any ESD",
            ));
        }
        for m in &c.members {
            match esd_len.get(m.esd.as_str()) {
                Some(&len) if m.pos < len => {}
                _ => findings.push(Finding::error(
                    DanglingMember,
                    &loc,
                    format!("member ({}, {}) does not resolve to an event", m.esd, m.pos),
                )),
            }
            if let Some(prev) = owner.insert(m, c.id.as_str()) {
                findings.push(Finding::error(
                    DuplicateMembership,
                    &loc,
                    format!("event ({}, {}) already belongs to cluster {prev}", m.esd, m.pos),
                ));
            }
        }
        if c.sequences.is_empty() {
            findings.push(Finding::error(NoSequences, &loc, "cluster has no action sequences"));
        }
        for (j, seq) in c.sequences.iter().enumerate() {
            if seq.is_empty() {
                findings.push(Finding::error(
                    EmptySequence,
                    format!("{loc}.sequences[{j}]"),
                    "sequence has no sub-steps",
                ));
            }
            for (k, step) in seq.iter().enumerate() {
                if step.is_empty() {
                    findings.push(Finding::error(
                        EmptySubStep,
                        format!("{loc}.sequences[{j}][{k}]"),
                        "sub-step has no surface text",
                    ));
                }
                if step.iter().any(|t| t.trim().is_empty()) {
                    findings.push(Finding::error(
                        EmptyText,
                        format!("{loc}.sequences[{j}][{k}]"),
                        "surface text is empty",
                    ));
                }
            }
        }
    }

    for esd in &s.esds {
        for ev in &esd.events {
            let key = MemberRef {
                esd: esd.id.clone(),
                pos: ev.position,
            };
            if !owner.contains_key(&key) {
                findings.push(Finding::error(
                    UncoveredEvent,
                    format!("esds ({}).events[{}]", esd.id, ev.position),
                    format!("event {:?} belongs to no cluster", ev.text),
                ));
            }
        }
    }

    // A surface text used by two different sub-steps makes the choice text
    // ambiguous; the engine still deduplicates by text.
    let mut seen: BTreeMap<String, String> = BTreeMap::new();
    for c in &s.clusters {
        for (j, seq) in c.sequences.iter().enumerate() {
            for (k, step) in seq.iter().enumerate() {
                let here = format!("{}:{j}:{k}", c.id);
                for text in step {
                    let key = text.trim().to_lowercase();
                    match seen.get(&key) {
                        Some(prev) if *prev != here => findings.push(Finding::warning(
                            SharedSurfaceText,
                            format!("clusters ({}).sequences[{j}][{k}]", c.id),
                            format!("surface text {text:?} also used by sub-step {prev}"),
                        )),
                        Some(_) => {}
                        None => {
                            seen.insert(key, here.clone());
                        }
                    }
                }
            }
        }
    }

    findings
}

/// Precomputed hint texts per scenario-graph node.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct HintStore {
    hints: HashMap<NodeIx, Vec<String>>,
}

#[derive(Debug, Deserialize)]
struct HintLine {
    node: String,
    hints: Vec<String>,
}

fn same_text(a: &str, b: &str) -> bool {
    a.trim().to_lowercase() == b.trim().to_lowercase()
}

impl HintStore {
    /// Parses a hint JSONL document against `graph`. Every node the game can
    /// stand on must be covered, and no hint may repeat an action text of its
    /// node or of the actions available there.
    pub fn parse(text: &str, graph: &ScenarioGraph) -> Result<HintStore, CorpusError> {
        let mut hints: HashMap<NodeIx, Vec<String>> = HashMap::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let parsed: HintLine = serde_json::from_str(line)
                .map_err(|e| CorpusError::Parse(format!("line {}: {e}", lineno + 1)))?;
            let ix = graph.index_of(&parsed.node).ok_or_else(|| {
                CorpusError::Parse(format!("line {}: unknown node {:?}", lineno + 1, parsed.node))
            })?;
            let texts: Vec<String> = parsed
                .hints
                .into_iter()
                .filter(|h| !h.trim().is_empty())
                .collect();
            for hint in &texts {
                let mut actions = graph.texts(ix).iter().chain(
                    graph
                        .frontier(ix)
                        .iter()
                        .flat_map(|&f| graph.texts(f).iter()),
                );
                if actions.any(|a| same_text(a, hint)) {
                    return Err(CorpusError::Repeat {
                        node: parsed.node.clone(),
                        hint: hint.clone(),
                    });
                }
            }
            hints.entry(ix).or_default().extend(texts);
        }
        let missing: Vec<String> = graph
            .playable_nodes()
            .filter(|ix| hints.get(ix).is_none_or(|h| h.is_empty()))
            .map(|ix| graph.name(ix).to_string())
            .collect();
        if !missing.is_empty() {
            return Err(CorpusError::Coverage(missing));
        }
        Ok(HintStore { hints })
    }

    pub fn get(&self, node: NodeIx) -> &[String] {
        self.hints.get(&node).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn all_texts(&self) -> impl Iterator<Item = &str> {
        self.hints.values().flatten().map(String::as_str)
    }
}

pub fn load_hints(path: impl AsRef<Path>, graph: &ScenarioGraph) -> Result<HintStore, CorpusError> {
    let text = read(path.as_ref())?;
    HintStore::parse(&text, graph)
}
