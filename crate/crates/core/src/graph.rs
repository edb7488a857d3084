//! Compact graph over event clusters and its expansion into the scenario
//! graph whose nodes are the game states.
//!
//! Compact graph: one node per cluster plus `START`/`END`. An edge `p -> q`
//! exists iff some ESD has consecutive events `e_i in p`, `e_(i+1) in q`.
//!
//! Scenario graph: every cluster `c` is split into `entry:c` and `exit:c`,
//! joined by one chain of step nodes per alternative sequence. Node names are
//! `START`, `END`, `entry:<cluster>`, `exit:<cluster>` and
//! `step:<cluster>:<sequence>:<step>` (0-based).

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::fmt::Write as _;

use num_bigint::BigUint;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{MemberRef, Scenario};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("compact graph has a cycle: {}", .0.join(" -> "))]
    Cycle(Vec<String>),
    #[error("event ({0}, {1}) belongs to no cluster")]
    Unaligned(String, usize),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

/// Index of a node in a [`ScenarioGraph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct NodeIx(pub usize);

/// Node of a [`CompactGraph`]: `0` is `START`, `1..=n` are clusters in
/// scenario order, `n + 1` is `END`.
pub type CompactIx = usize;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompactGraph {
    cluster_ids: Vec<String>,
    edges: BTreeSet<(CompactIx, CompactIx)>,
    succ: Vec<Vec<CompactIx>>,
    order: Vec<usize>,
}

impl CompactGraph {
    pub const START: CompactIx = 0;

    pub fn end(&self) -> CompactIx {
        self.cluster_ids.len() + 1
    }

    pub fn node_count(&self) -> usize {
        self.cluster_ids.len() + 2
    }

    pub fn cluster_count(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn cluster_of(&self, node: CompactIx) -> Option<usize> {
        (1..=self.cluster_ids.len()).contains(&node).then(|| node - 1)
    }

    pub fn name(&self, node: CompactIx) -> &str {
        match node {
            0 => "START",
            n if n == self.end() => "END",
            n => &self.cluster_ids[n - 1],
        }
    }

    pub fn edges(&self) -> &BTreeSet<(CompactIx, CompactIx)> {
        &self.edges
    }

    pub fn successors(&self, node: CompactIx) -> &[CompactIx] {
        &self.succ[node]
    }

    /// Topological index of each node; strictly increases along every edge.
    pub fn topo_index(&self, node: CompactIx) -> usize {
        self.order[node]
    }

    /// Edges with node names, for comparisons that ignore cluster order.
    pub fn named_edges(&self) -> BTreeSet<(String, String)> {
        self.edges
            .iter()
            .map(|&(a, b)| (self.name(a).to_string(), self.name(b).to_string()))
            .collect()
    }
}

pub fn build_compact(s: &Scenario) -> Result<CompactGraph, GraphError> {
    let n = s.clusters.len();
    let end = n + 1;
    let membership = s.membership();
    let node_of = |esd: &str, pos: usize| -> Result<CompactIx, GraphError> {
        membership
            .get(&MemberRef {
                esd: esd.to_string(),
                pos,
            })
            .map(|c| c + 1)
            .ok_or_else(|| GraphError::Unaligned(esd.to_string(), pos))
    };

    let mut edges = BTreeSet::new();
    for esd in &s.esds {
        let mut prev = CompactGraph::START;
        for ev in &esd.events {
            let node = node_of(&esd.id, ev.position)?;
            edges.insert((prev, node));
            prev = node;
        }
        if !esd.events.is_empty() {
            edges.insert((prev, end));
        }
    }

    let mut succ = vec![Vec::new(); n + 2];
    let mut indeg = vec![0usize; n + 2];
    for &(a, b) in &edges {
        succ[a].push(b);
        indeg[b] += 1;
    }

    // Kahn's algorithm with a min-queue keeps the order deterministic.
    let mut ready: BTreeSet<CompactIx> = (0..n + 2).filter(|&v| indeg[v] == 0).collect();
    let mut order = vec![usize::MAX; n + 2];
    let mut next = 0;
    while let Some(v) = ready.pop_first() {
        order[v] = next;
        next += 1;
        for &w in &succ[v] {
            indeg[w] -= 1;
            if indeg[w] == 0 {
                ready.insert(w);
            }
        }
    }
    let cluster_ids: Vec<String> = s.clusters.iter().map(|c| c.id.clone()).collect();
    if next < n + 2 {
        let cycle = find_cycle(&succ, &order);
        let name = |v: CompactIx| cluster_ids.get(v.wrapping_sub(1)).cloned().unwrap_or_default();
        return Err(GraphError::Cycle(cycle.into_iter().map(name).collect()));
    }

    Ok(CompactGraph {
        cluster_ids,
        edges,
        succ,
        order,
    })
}

/// Returns one cycle among nodes left unordered by Kahn's algorithm, closed
/// by repeating its first node.
fn find_cycle(succ: &[Vec<usize>], order: &[usize]) -> Vec<usize> {
    // Every unordered node has an unordered predecessor, so walking backwards
    // would also work; walking forwards along unordered successors must
    // revisit a node because the remaining subgraph has no sinks.
    let start = order.iter().position(|&o| o == usize::MAX).expect("cycle exists");
    let mut seen = HashMap::new();
    let mut path = Vec::new();
    let mut v = start;
    loop {
        if let Some(&at) = seen.get(&v) {
            let mut cycle: Vec<usize> = path[at..].to_vec();
            cycle.push(v);
            return cycle;
        }
        seen.insert(v, path.len());
        path.push(v);
        v = *succ[v]
            .iter()
            .find(|&&w| order[w] == usize::MAX)
            .expect("unordered node keeps an unordered successor");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    Start,
    End,
    Entry { cluster: usize },
    Exit { cluster: usize },
    Step { cluster: usize, sequence: usize, step: usize },
}

impl NodeKind {
    pub fn cluster(&self) -> Option<usize> {
        match *self {
            NodeKind::Entry { cluster }
            | NodeKind::Exit { cluster }
            | NodeKind::Step { cluster, .. } => Some(cluster),
            NodeKind::Start | NodeKind::End => None,
        }
    }

    pub fn is_step(&self) -> bool {
        matches!(self, NodeKind::Step { .. })
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioGraph {
    kinds: Vec<NodeKind>,
    names: Vec<String>,
    succ: Vec<Vec<NodeIx>>,
    pred: Vec<Vec<NodeIx>>,
    texts: Vec<Vec<String>>,
    frontier: Vec<Vec<NodeIx>>,
    by_name: HashMap<String, NodeIx>,
    cluster_ids: Vec<String>,
}

impl ScenarioGraph {
    pub const START: NodeIx = NodeIx(0);

    pub fn end(&self) -> NodeIx {
        NodeIx(self.kinds.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.kinds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kinds.is_empty()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeIx> {
        (0..self.kinds.len()).map(NodeIx)
    }

    pub fn kind(&self, n: NodeIx) -> NodeKind {
        self.kinds[n.0]
    }

    pub fn name(&self, n: NodeIx) -> &str {
        &self.names[n.0]
    }

    pub fn index_of(&self, name: &str) -> Option<NodeIx> {
        self.by_name.get(name).copied()
    }

    pub fn successors(&self, n: NodeIx) -> &[NodeIx] {
        &self.succ[n.0]
    }

    pub fn predecessors(&self, n: NodeIx) -> &[NodeIx] {
        &self.pred[n.0]
    }

    /// Surface texts of a step node; empty for every other node.
    pub fn texts(&self, n: NodeIx) -> &[String] {
        &self.texts[n.0]
    }

    pub fn cluster_id(&self, cluster: usize) -> &str {
        &self.cluster_ids[cluster]
    }

    /// Compact-graph node a scenario node was expanded from.
    pub fn compact_origin(&self, n: NodeIx) -> CompactIx {
        match self.kinds[n.0] {
            NodeKind::Start => CompactGraph::START,
            NodeKind::End => self.cluster_ids.len() + 1,
            kind => kind.cluster().expect("cluster node") + 1,
        }
    }

    /// Step nodes that are valid next actions from `n`: the step nodes
    /// reachable through entry/exit nodes only, never through `END`.
    pub fn frontier(&self, n: NodeIx) -> &[NodeIx] {
        &self.frontier[n.0]
    }

    /// Nodes the player can stand on while a game is in progress.
    pub fn playable_nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.nodes()
            .filter(move |&n| n != self.end() && !self.frontier[n.0].is_empty())
    }

    pub fn step_nodes(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.nodes().filter(move |&n| self.kinds[n.0].is_step())
    }

    pub fn edge_count(&self) -> usize {
        self.succ.iter().map(Vec::len).sum()
    }

    pub fn edges(&self) -> impl Iterator<Item = (NodeIx, NodeIx)> + '_ {
        self.nodes()
            .flat_map(move |a| self.succ[a.0].iter().map(move |&b| (a, b)))
    }

    /// Undirected hop distance, `None` when disconnected.
    pub fn hop_distance(&self, a: NodeIx, b: NodeIx) -> Option<u32> {
        self.bfs_from(a)[b.0]
    }

    /// Undirected BFS distances from `source` to every node.
    pub fn bfs_from(&self, source: NodeIx) -> Vec<Option<u32>> {
        let mut dist = vec![None; self.len()];
        dist[source.0] = Some(0);
        let mut queue = VecDeque::from([source]);
        while let Some(v) = queue.pop_front() {
            let d = dist[v.0].expect("queued nodes are labelled");
            for &w in self.succ[v.0].iter().chain(&self.pred[v.0]) {
                if dist[w.0].is_none() {
                    dist[w.0] = Some(d + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Node indices in a topological order.
    pub fn topo_order(&self) -> Vec<NodeIx> {
        let mut indeg: Vec<usize> = self.pred.iter().map(Vec::len).collect();
        let mut queue: VecDeque<NodeIx> = self.nodes().filter(|n| indeg[n.0] == 0).collect();
        let mut out = Vec::with_capacity(self.len());
        while let Some(v) = queue.pop_front() {
            out.push(v);
            for &w in &self.succ[v.0] {
                indeg[w.0] -= 1;
                if indeg[w.0] == 0 {
                    queue.push_back(w);
                }
            }
        }
        out
    }
}

/// Splits every cluster into entry/exit nodes joined by one chain per
/// alternative sequence. Single-sequence clusters are split the same way.
pub fn expand(cg: &CompactGraph, s: &Scenario) -> ScenarioGraph {
    let mut kinds = vec![NodeKind::Start];
    let mut texts: Vec<Vec<String>> = vec![Vec::new()];
    let mut edges: Vec<(usize, usize)> = Vec::new();
    let mut entry = Vec::with_capacity(s.clusters.len());
    let mut exit = Vec::with_capacity(s.clusters.len());

    for (ci, cluster) in s.clusters.iter().enumerate() {
        let entry_ix = kinds.len();
        kinds.push(NodeKind::Entry { cluster: ci });
        texts.push(Vec::new());
        let mut tails = Vec::new();
        for (j, seq) in cluster.sequences.iter().enumerate() {
            let mut prev = entry_ix;
            for (k, variants) in seq.iter().enumerate() {
                let ix = kinds.len();
                kinds.push(NodeKind::Step {
                    cluster: ci,
                    sequence: j,
                    step: k,
                });
                texts.push(variants.clone());
                edges.push((prev, ix));
                prev = ix;
            }
            tails.push(prev);
        }
        let exit_ix = kinds.len();
        kinds.push(NodeKind::Exit { cluster: ci });
        texts.push(Vec::new());
        edges.extend(tails.into_iter().map(|t| (t, exit_ix)));
        entry.push(entry_ix);
        exit.push(exit_ix);
    }
    let end_ix = kinds.len();
    kinds.push(NodeKind::End);
    texts.push(Vec::new());

    let compact_end = cg.end();
    for &(a, b) in cg.edges() {
        let from = if a == CompactGraph::START { 0 } else { exit[a - 1] };
        let to = if b == compact_end { end_ix } else { entry[b - 1] };
        edges.push((from, to));
    }

    let n = kinds.len();
    let mut succ = vec![Vec::new(); n];
    let mut pred = vec![Vec::new(); n];
    for (a, b) in edges {
        succ[a].push(NodeIx(b));
        pred[b].push(NodeIx(a));
    }
    for list in succ.iter_mut().chain(pred.iter_mut()) {
        list.sort();
        list.dedup();
    }

    let cluster_ids: Vec<String> = s.clusters.iter().map(|c| c.id.clone()).collect();
    let names: Vec<String> = kinds
        .iter()
        .map(|k| match *k {
            NodeKind::Start => "START".to_string(),
            NodeKind::End => "END".to_string(),
            NodeKind::Entry { cluster } => format!("entry:{}", cluster_ids[cluster]),
            NodeKind::Exit { cluster } => format!("exit:{}", cluster_ids[cluster]),
            NodeKind::Step {
                cluster,
                sequence,
                step,
            } => format!("step:{}:{sequence}:{step}", cluster_ids[cluster]),
        })
        .collect();
    let by_name = names
        .iter()
        .enumerate()
        .map(|(i, name)| (name.clone(), NodeIx(i)))
        .collect();

    let frontier = (0..n)
        .map(|v| {
            let mut found = BTreeSet::new();
            let mut stack: Vec<NodeIx> = succ[v].clone();
            let mut seen = vec![false; n];
            while let Some(w) = stack.pop() {
                if std::mem::replace(&mut seen[w.0], true) {
                    continue;
                }
                match kinds[w.0] {
                    NodeKind::Step { .. } => {
                        found.insert(w);
                    }
                    NodeKind::End => {}
                    _ => stack.extend(succ[w.0].iter().copied()),
                }
            }
            found.into_iter().collect()
        })
        .collect();

    ScenarioGraph {
        kinds,
        names,
        succ,
        pred,
        texts,
        frontier,
        by_name,
        cluster_ids,
    }
}

/// Convenience: compact graph and its expansion.
pub fn build_graphs(s: &Scenario) -> Result<(CompactGraph, ScenarioGraph), GraphError> {
    let cg = build_compact(s)?;
    let g = expand(&cg, s);
    Ok((cg, g))
}

/// Total START-to-END paths by enumerating compact paths depth-first and
/// summing, for each path, the product of the split counts (number of
/// alternative sequences) of its clusters.
///
/// Enumeration is exponential in the number of compact paths; use
/// [`count_paths_dp`] on large graphs.
pub fn count_paths_formula(cg: &CompactGraph, s: &Scenario) -> BigUint {
    let splits = s.split_counts();
    let end = cg.end();
    let mut total = BigUint::from(0u32);
    // Stack of (node, product so far, next successor index).
    let mut stack: Vec<(CompactIx, BigUint, usize)> = vec![(CompactGraph::START, 1u32.into(), 0)];
    while let Some((node, product, next)) = stack.pop() {
        if node == end {
            total += product;
            continue;
        }
        let succ = cg.successors(node);
        if next < succ.len() {
            let child = succ[next];
            stack.push((node, product.clone(), next + 1));
            let factor = cg.cluster_of(child).map_or(1, |c| splits[c]);
            stack.push((child, product * factor, 0));
        }
    }
    total
}

/// START-to-END path count of the scenario graph by dynamic programming
/// over a topological order.
pub fn count_paths_dp(g: &ScenarioGraph) -> BigUint {
    let mut paths = vec![BigUint::from(0u32); g.len()];
    paths[ScenarioGraph::START.0] = 1u32.into();
    for v in g.topo_order() {
        if paths[v.0] == BigUint::from(0u32) {
            continue;
        }
        let here = paths[v.0].clone();
        for &w in g.successors(v) {
            paths[w.0] += &here;
        }
    }
    paths[g.end().0].clone()
}

/// Undirected hop distance between two named nodes; `Ok(None)` means the
/// nodes are disconnected.
pub fn hop_distance(g: &ScenarioGraph, a: &str, b: &str) -> Result<Option<u32>, GraphError> {
    let ia = g
        .index_of(a)
        .ok_or_else(|| GraphError::UnknownNode(a.to_string()))?;
    let ib = g
        .index_of(b)
        .ok_or_else(|| GraphError::UnknownNode(b.to_string()))?;
    Ok(g.hop_distance(ia, ib))
}

/// All-pairs undirected hop distances, `u32::MAX` for disconnected pairs.
#[derive(Debug, Clone)]
pub struct DistanceTable {
    n: usize,
    dist: Vec<u32>,
}

impl DistanceTable {
    pub const UNREACHABLE: u32 = u32::MAX;

    /// Distances measured on the scenario graph itself.
    pub fn scenario(g: &ScenarioGraph) -> Self {
        let n = g.len();
        let mut dist = Vec::with_capacity(n * n);
        for a in g.nodes() {
            dist.extend(g.bfs_from(a).into_iter().map(|d| d.unwrap_or(Self::UNREACHABLE)));
        }
        DistanceTable { n, dist }
    }

    /// Distances between the compact-graph nodes each scenario node was
    /// expanded from.
    pub fn compact(cg: &CompactGraph, g: &ScenarioGraph) -> Self {
        let m = cg.node_count();
        let mut adj = vec![Vec::new(); m];
        for &(a, b) in cg.edges() {
            adj[a].push(b);
            adj[b].push(a);
        }
        let mut cdist = vec![Self::UNREACHABLE; m * m];
        for s in 0..m {
            cdist[s * m + s] = 0;
            let mut queue = VecDeque::from([s]);
            while let Some(v) = queue.pop_front() {
                let d = cdist[s * m + v];
                for &w in &adj[v] {
                    if cdist[s * m + w] == Self::UNREACHABLE {
                        cdist[s * m + w] = d + 1;
                        queue.push_back(w);
                    }
                }
            }
        }
        let n = g.len();
        let mut dist = Vec::with_capacity(n * n);
        for a in g.nodes() {
            let ca = g.compact_origin(a);
            dist.extend(g.nodes().map(|b| cdist[ca * m + g.compact_origin(b)]));
        }
        DistanceTable { n, dist }
    }

    pub fn get(&self, a: NodeIx, b: NodeIx) -> u32 {
        self.dist[a.0 * self.n + b.0]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub node_count: usize,
    pub avg_degree: f64,
    #[serde(serialize_with = "serialize_biguint")]
    pub total_paths: BigUint,
}

fn serialize_biguint<S: serde::Serializer>(v: &BigUint, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&v.to_string())
}

/// Node count and mean total degree over non-sentinel nodes, and the total
/// path count.
pub fn stats(g: &ScenarioGraph) -> GraphStats {
    let inner: Vec<NodeIx> = g
        .nodes()
        .filter(|&n| !matches!(g.kind(n), NodeKind::Start | NodeKind::End))
        .collect();
    let degree_sum: usize = inner
        .iter()
        .map(|&n| g.successors(n).len() + g.predecessors(n).len())
        .sum();
    let avg_degree = if inner.is_empty() {
        0.0
    } else {
        degree_sum as f64 / inner.len() as f64
    };
    GraphStats {
        node_count: inner.len(),
        avg_degree,
        total_paths: count_paths_dp(g),
    }
}

/// Formats a path count the way large counts are usually reported, e.g.
/// `3.1e+27`.
pub fn format_magnitude(v: &BigUint) -> String {
    let digits = v.to_string();
    if digits.len() <= 6 {
        return digits;
    }
    let exp = digits.len() - 1;
    // Round to two significant digits.
    let lead: u64 = digits[..3].parse().expect("digits");
    let rounded = (lead + 5) / 10;
    let (rounded, exp) = if rounded >= 100 { (rounded / 10, exp + 1) } else { (rounded, exp) };
    format!("{}.{}e+{exp}", rounded / 10, rounded % 10)
}

/// Anything that can be written out as a Graphviz digraph.
pub trait DotGraph {
    fn dot_nodes(&self) -> Vec<(String, Option<String>)>;
    fn dot_edges(&self) -> Vec<(String, String)>;
}

impl DotGraph for CompactGraph {
    fn dot_nodes(&self) -> Vec<(String, Option<String>)> {
        (0..self.node_count())
            .map(|v| (self.name(v).to_string(), None))
            .collect()
    }

    fn dot_edges(&self) -> Vec<(String, String)> {
        self.named_edges().into_iter().collect()
    }
}

impl DotGraph for ScenarioGraph {
    fn dot_nodes(&self) -> Vec<(String, Option<String>)> {
        self.nodes()
            .map(|v| (self.name(v).to_string(), self.texts(v).first().cloned()))
            .collect()
    }

    fn dot_edges(&self) -> Vec<(String, String)> {
        self.edges()
            .map(|(a, b)| (self.name(a).to_string(), self.name(b).to_string()))
            .collect()
    }
}

fn dot_id(id: &str) -> String {
    let plain = id
        .chars()
        .next()
        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if plain {
        id.to_string()
    } else {
        format!("\"{}\"", id.replace('\\', "\\\\").replace('"', "\\\""))
    }
}

/// Graphviz DOT text with nodes and edges sorted by name.
pub fn export_dot(g: &impl DotGraph) -> String {
    let mut nodes = g.dot_nodes();
    nodes.sort();
    let mut edges = g.dot_edges();
    edges.sort();
    let mut out = String::from("digraph scenario {\n  rankdir=LR;\n");
    for (id, label) in nodes {
        match label {
            Some(label) => {
                let _ = writeln!(out, "  {} [label={}];", dot_id(&id), dot_id(&label));
            }
            None => {
                let _ = writeln!(out, "  {};", dot_id(&id));
            }
        }
    }
    for (a, b) in edges {
        let _ = writeln!(out, "  {} -> {};", dot_id(&a), dot_id(&b));
    }
    out.push_str("}\n");
    out
}

#[derive(Debug, Serialize)]
pub struct GraphDump<'a> {
    pub title: &'a str,
    pub nodes: Vec<NodeDump<'a>>,
    pub edges: Vec<(&'a str, &'a str)>,
}

#[derive(Debug, Serialize)]
pub struct NodeDump<'a> {
    pub id: &'a str,
    #[serde(flatten)]
    pub kind: NodeKind,
    pub texts: &'a [String],
}

/// JSON dump of the scenario graph: nodes (with kind and action texts) and
/// edges by name.
pub fn dump_json(g: &ScenarioGraph, title: &str) -> String {
    let dump = GraphDump {
        title,
        nodes: g
            .nodes()
            .map(|v| NodeDump {
                id: g.name(v),
                kind: g.kind(v),
                texts: g.texts(v),
            })
            .collect(),
        edges: g.edges().map(|(a, b)| (g.name(a), g.name(b))).collect(),
    };
    serde_json::to_string(&dump).expect("graph dump serializes")
}
