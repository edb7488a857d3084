//! Per-scenario statistics reports and environment-wide text statistics.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use crate::corpus::Scenario;
use crate::graph::{format_magnitude, stats, CompactGraph, GraphStats, ScenarioGraph};

/// Published node count, average degree and path magnitude for the ten
/// annotated scenarios, for side-by-side comparison only.
pub const REFERENCE_ROWS: &[(&str, usize, f64, &str)] = &[
    ("Taking a Bath", 525, 3.7, "3.1e+27"),
    ("Baking a Cake", 542, 3.6, "4.0e+26"),
    ("Flying in an Airplane", 528, 3.6, "2.6e+30"),
    ("Going Grocery Shopping", 544, 3.7, "2.3e+26"),
    ("Going on a Train", 427, 3.7, "3.1e+21"),
    ("Planting a Tree", 373, 3.7, "1.6e+16"),
    ("Riding on a Bus", 376, 3.8, "1.0e+17"),
    ("Repairing Flat Bicycle Tire", 402, 3.4, "8.4e+18"),
    ("Borrowing Book from Library", 397, 3.7, "3.1e+19"),
    ("Getting a Haircut", 528, 3.7, "4.0e+28"),
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceRow {
    pub nodes: usize,
    pub avg_degree: f64,
    pub paths: String,
}

pub fn reference_for(title: &str) -> Option<ReferenceRow> {
    let key = title.trim().to_lowercase();
    REFERENCE_ROWS
        .iter()
        .find(|(t, ..)| t.to_lowercase() == key)
        .map(|&(_, nodes, avg_degree, paths)| ReferenceRow {
            nodes,
            avg_degree,
            paths: paths.to_string(),
        })
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioReport {
    pub title: String,
    pub esds: usize,
    /// Clusters in the annotation file.
    pub annotated_clusters: usize,
    /// Cluster nodes in the compact graph.
    pub compact_clusters: usize,
    pub compact_edges: usize,
    pub stats: GraphStats,
    pub paths_magnitude: String,
    pub vocabulary_size: usize,
    pub avg_words_per_text: f64,
    pub reference: Option<ReferenceRow>,
}

impl ScenarioReport {
    pub fn clusters_match(&self) -> bool {
        self.annotated_clusters == self.compact_clusters
    }
}

fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Action texts of every step node, one entry per surface form.
fn action_texts(g: &ScenarioGraph) -> impl Iterator<Item = &String> {
    g.step_nodes().flat_map(|n| g.texts(n))
}

pub fn scenario_report(s: &Scenario, cg: &CompactGraph, g: &ScenarioGraph) -> ScenarioReport {
    let st = stats(g);
    let vocab: BTreeSet<String> = action_texts(g).flat_map(|t| tokens(t).collect::<Vec<_>>()).collect();
    let (words, texts) = action_texts(g).fold((0usize, 0usize), |(w, n), t| (w + tokens(t).count(), n + 1));
    ScenarioReport {
        title: s.title.clone(),
        esds: s.esds.len(),
        annotated_clusters: s.clusters.len(),
        compact_clusters: cg.cluster_count(),
        compact_edges: cg.edges().len(),
        paths_magnitude: format_magnitude(&st.total_paths),
        stats: st,
        vocabulary_size: vocab.len(),
        avg_words_per_text: if texts == 0 { 0.0 } else { words as f64 / texts as f64 },
        reference: reference_for(&s.title),
    }
}

/// Plain-text table with one row per scenario and, where a reference row
/// exists, the differences from it.
pub fn format_table(reports: &[ScenarioReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<32} {:>6} {:>8} {:>7} {:>6} {:>10} {:>6} {:>6}",
        "scenario", "ESDs", "clusters", "nodes", "deg", "paths", "vocab", "words"
    );
    for r in reports {
        let _ = writeln!(
            out,
            "{:<32} {:>6} {:>8} {:>7} {:>6.2} {:>10} {:>6} {:>6.2}",
            r.title,
            r.esds,
            r.compact_clusters,
            r.stats.node_count,
            r.stats.avg_degree,
            r.paths_magnitude,
            r.vocabulary_size,
            r.avg_words_per_text
        );
        if let Some(reference) = &r.reference {
            let _ = writeln!(
                out,
                "  reference: nodes {} (delta {:+}), deg {:.1} (delta {:+.2}), paths {}",
                reference.nodes,
                r.stats.node_count as i64 - reference.nodes as i64,
                reference.avg_degree,
                r.stats.avg_degree - reference.avg_degree,
                reference.paths
            );
        }
        if !r.clusters_match() {
            let _ = writeln!(
                out,
                "  cluster mismatch: {} annotated, {} in compact graph",
                r.annotated_clusters, r.compact_clusters
            );
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct EnvironmentStats {
    pub scenarios: usize,
    pub vocabulary_size: usize,
    pub avg_words_per_observation: f64,
    pub avg_states: f64,
}

/// Vocabulary over all action texts, mean words per action text and mean
/// scenario-graph size, across a set of scenarios.
pub fn environment_stats(graphs: &[&ScenarioGraph]) -> EnvironmentStats {
    let mut vocab = BTreeSet::new();
    let (mut words, mut texts, mut states) = (0usize, 0usize, 0usize);
    for g in graphs {
        for t in action_texts(g) {
            for tok in tokens(t) {
                words += 1;
                vocab.insert(tok);
            }
            texts += 1;
        }
        states += g.len();
    }
    let n = graphs.len().max(1) as f64;
    EnvironmentStats {
        scenarios: graphs.len(),
        vocabulary_size: vocab.len(),
        avg_words_per_observation: if texts == 0 { 0.0 } else { words as f64 / texts as f64 },
        avg_states: states as f64 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::builtin_scenario;
    use crate::graph::build_graphs;

    #[test]
    fn builtin_report() {
        let s = builtin_scenario();
        let (cg, g) = build_graphs(&s).unwrap();
        let r = scenario_report(&s, &cg, &g);
        assert!(r.clusters_match());
        assert_eq!(r.compact_clusters, 6);
        assert_eq!(r.stats.node_count, 31);
        assert!(r.reference.is_none());
        let table = format_table(&[r]);
        assert!(table.lines().count() == 2);
    }

    #[test]
    fn reference_lookup_ignores_case() {
        let r = reference_for("taking a bath").unwrap();
        assert_eq!(r.nodes, 525);
        assert_eq!(r.paths, "3.1e+27");
    }

    #[test]
    fn word_statistics() {
        let s = builtin_scenario();
        let (_, g) = build_graphs(&s).unwrap();
        let env = environment_stats(&[&g]);
        assert_eq!(env.scenarios, 1);
        assert_eq!(env.avg_states, 33.0);
        let mut words = 0;
        let mut texts = 0;
        for n in g.step_nodes() {
            for t in g.texts(n) {
                let spaced: String = t.chars().map(|c| if c.is_alphanumeric() { c } else { ' ' }).collect();
                words += spaced.split_whitespace().count();
                texts += 1;
            }
        }
        assert!((env.avg_words_per_observation - words as f64 / texts as f64).abs() < 1e-12);
    }
}
