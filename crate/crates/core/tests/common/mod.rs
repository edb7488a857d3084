//! Shared test helpers: a random scenario generator and graph oracles that
//! work from raw edges and node kinds only.

#![allow(dead_code)]

use std::collections::{BTreeSet, VecDeque};

use scriptworld::corpus::{Esd, EventCluster, MemberRef, Scenario};
use scriptworld::graph::{NodeIx, NodeKind, ScenarioGraph};
use scriptworld::GameRng;

pub struct SynthLimits {
    pub max_clusters: usize,
    pub max_sequences: usize,
    pub max_len: usize,
    pub max_extra_esds: usize,
}

impl Default for SynthLimits {
    fn default() -> Self {
        SynthLimits {
            max_clusters: 12,
            max_sequences: 3,
            max_len: 4,
            max_extra_esds: 4,
        }
    }
}

/// Random valid scenario. Clusters are visited in index order by every ESD
/// (so the compact graph is acyclic); the first ESD covers all clusters and
/// the others skip clusters at random. Text tokens are prefixed with `tag` so
/// scenarios built with different tags share no vocabulary.
pub fn random_scenario(seed: u64, limits: &SynthLimits, tag: &str) -> Scenario {
    let mut rng = GameRng::new(seed);
    let n = 2 + rng.index(limits.max_clusters - 1);
    let mut orders: Vec<Vec<usize>> = vec![(0..n).collect()];
    for _ in 0..rng.index(limits.max_extra_esds + 1) {
        let order: Vec<usize> = (0..n).filter(|_| rng.bernoulli(0.5)).collect();
        if order.len() >= 2 {
            orders.push(order);
        }
    }
    let esds: Vec<Esd> = orders
        .iter()
        .enumerate()
        .map(|(e, order)| {
            let texts: Vec<String> = order.iter().map(|c| format!("{tag}event{c} by{e}")).collect();
            let refs: Vec<&str> = texts.iter().map(String::as_str).collect();
            Esd::new(format!("e{e}"), &refs)
        })
        .collect();
    let clusters = (0..n)
        .map(|c| {
            let members = orders
                .iter()
                .enumerate()
                .filter_map(|(e, order)| {
                    order.iter().position(|&x| x == c).map(|pos| MemberRef {
                        esd: format!("e{e}"),
                        pos,
                    })
                })
                .collect();
            let sequences = (0..1 + rng.index(limits.max_sequences))
                .map(|j| {
                    (0..1 + rng.index(limits.max_len))
                        .map(|k| {
                            (0..1 + rng.index(2))
                                .map(|v| format!("{tag}act{c} {tag}alt{j} {tag}sub{k} {tag}form{v}"))
                                .collect()
                        })
                        .collect()
                })
                .collect();
            EventCluster {
                id: format!("c{c}"),
                label: format!("cluster {c}"),
                members,
                sequences,
            }
        })
        .collect();
    Scenario {
        title: format!("synthetic {tag}{seed}"),
        esds,
        clusters,
        neg_distance: 1 + rng.index(3) as u32,
    }
}

/// Undirected hop distances from `source` computed from the edge list.
pub fn undirected_bfs(g: &ScenarioGraph, source: NodeIx) -> Vec<Option<u32>> {
    let mut adj = vec![Vec::new(); g.len()];
    for (a, b) in g.edges() {
        adj[a.0].push(b.0);
        adj[b.0].push(a.0);
    }
    let mut dist = vec![None; g.len()];
    dist[source.0] = Some(0);
    let mut queue = VecDeque::from([source.0]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap();
        for &w in &adj[v] {
            if dist[w].is_none() {
                dist[w] = Some(d + 1);
                queue.push_back(w);
            }
        }
    }
    dist
}

/// Step nodes reachable from `node` through entry and exit nodes only.
pub fn frontier_oracle(g: &ScenarioGraph, node: NodeIx) -> BTreeSet<NodeIx> {
    let mut out = BTreeSet::new();
    let mut seen = BTreeSet::new();
    let mut stack = vec![node];
    while let Some(v) = stack.pop() {
        for &w in g.successors(v) {
            if !seen.insert(w) {
                continue;
            }
            match g.kind(w) {
                NodeKind::Step { .. } => {
                    out.insert(w);
                }
                NodeKind::Entry { .. } | NodeKind::Exit { .. } => stack.push(w),
                NodeKind::Start | NodeKind::End => {}
            }
        }
    }
    out
}

/// Number of distinct START-to-END walks, counted one walk at a time.
pub fn enumerate_paths(g: &ScenarioGraph) -> u64 {
    let end = g.end();
    let mut count = 0u64;
    let mut stack = vec![ScenarioGraph::START];
    while let Some(v) = stack.pop() {
        if v == end {
            count += 1;
            continue;
        }
        stack.extend_from_slice(g.successors(v));
    }
    count
}

/// Largest relative difference between `analytic` and central differences
/// of `f` around `params`, with the denominator floored at `floor`.
pub fn max_relative_error(analytic: &[f64], params: &[f64], f: impl Fn(&[f64]) -> f64, h: f64, floor: f64) -> f64 {
    let mut worst = 0.0f64;
    let mut p = params.to_vec();
    for i in 0..p.len() {
        let orig = p[i];
        p[i] = orig + h;
        let up = f(&p);
        p[i] = orig - h;
        let down = f(&p);
        p[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let denom = analytic[i].abs().max(numeric.abs()).max(floor);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    worst
}

/// One random gradient-check configuration for the choice scorer.
pub struct GradCase {
    pub dim: usize,
    pub hidden: Vec<usize>,
    pub num_choices: usize,
    pub hint: bool,
    pub gamma: f64,
}

pub fn random_grad_case(rng: &mut GameRng) -> GradCase {
    GradCase {
        dim: 1 + rng.index(4),
        hidden: (0..1 + rng.index(2)).map(|_| 1 + rng.index(4)).collect(),
        num_choices: 2 + rng.index(4),
        hint: rng.bernoulli(0.5),
        gamma: rng.unit(),
    }
}

pub fn random_features(rng: &mut GameRng, case: &GradCase) -> scriptworld::features::FeatureVector {
    let layout = scriptworld::features::Layout {
        num_choices: case.num_choices,
        dim: case.dim,
        hint_included: case.hint,
    };
    scriptworld::features::FeatureVector {
        values: (0..layout.len()).map(|_| rng.unit() * 2.0 - 1.0).collect(),
        layout,
    }
}

pub fn random_reward(rng: &mut GameRng) -> f64 {
    [-1.0, 0.0, 10.0][rng.index(3)]
}
