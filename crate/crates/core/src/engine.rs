//! The playable environment: episode lifecycle, choice sets, rewards,
//! termination, back-hops and hints.
//!
//! A game starts at `START`. At every node the valid next actions are the
//! step nodes of [`ScenarioGraph::frontier`]; the correct choice is a surface
//! text of one of them and the wrong choices come from step nodes more than
//! `neg_distance` undirected hops away. Correct picks give 0 (10 on the pick
//! that completes the script), wrong picks give -1 and push the player back.
//!
//! Draw order of one observation (kept stable for replay):
//! 1. frontier node, 2. its surface text, 3. shuffle of eligible negative
//!    nodes, 4. one text offset per negative node visited, 5. shuffle of the
//!    choice order, 6. hint (handicap only).
//!
//! A wrong pick that does not end the game then draws one predecessor per
//! back-hop before the next observation is sampled.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{builtin_hints, builtin_scenario, HintStore, Scenario};
use crate::features::normalize_text;
use crate::graph::{build_graphs, CompactGraph, DistanceTable, GraphError, NodeIx, NodeKind, ScenarioGraph};
use crate::rng::GameRng;

/// Bumped whenever a change alters the transcript produced for a given seed.
pub const ENGINE_VERSION: &str = "scriptworld-engine/1";

pub const GOAL_REWARD: i32 = 10;
pub const WRONG_REWARD: i32 = -1;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("cannot sample {needed} wrong choices at node {node}: only {available} eligible")]
    Sampling {
        node: String,
        needed: usize,
        available: usize,
    },
    #[error("action index {index} out of range for {len} choices")]
    OutOfRange { index: usize, len: usize },
    #[error("game already finished")]
    Terminated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum DistanceSpace {
    #[default]
    #[serde(rename = "scenario-graph")]
    ScenarioGraph,
    #[serde(rename = "compact-graph")]
    CompactGraph,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GameConfig {
    pub num_choices: usize,
    pub back_hop: u32,
    pub handicap: bool,
    /// Defaults to the scenario's own distance when unset.
    pub neg_distance: Option<u32>,
    pub consecutive_wrong_limit: u32,
    pub max_steps: Option<u64>,
    pub seed: u64,
    pub distance_space: DistanceSpace,
}

impl Default for GameConfig {
    fn default() -> Self {
        GameConfig {
            num_choices: 2,
            back_hop: 1,
            handicap: false,
            neg_distance: None,
            consecutive_wrong_limit: 5,
            max_steps: Some(10_000),
            seed: 0,
            distance_space: DistanceSpace::ScenarioGraph,
        }
    }
}

impl GameConfig {
    pub fn validate(&self) -> Result<(), EngineError> {
        if self.num_choices < 2 {
            return Err(EngineError::Config("num_choices must be at least 2".into()));
        }
        if self.back_hop < 1 {
            return Err(EngineError::Config("back_hop must be at least 1".into()));
        }
        if self.consecutive_wrong_limit < 1 {
            return Err(EngineError::Config(
                "consecutive_wrong_limit must be at least 1".into(),
            ));
        }
        if self.neg_distance == Some(0) {
            return Err(EngineError::Config("neg_distance must be at least 1".into()));
        }
        if self.max_steps == Some(0) {
            return Err(EngineError::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// (num_choices, neg_distance, space) of a cached feasibility check.
type SamplingKey = (usize, u32, DistanceSpace);

/// Immutable assets shared by every game over one scenario.
#[derive(Debug)]
pub struct World {
    pub scenario: Scenario,
    pub compact: CompactGraph,
    pub graph: ScenarioGraph,
    pub hints: Option<HintStore>,
    scenario_dist: DistanceTable,
    compact_dist: DistanceTable,
    feasibility: Mutex<HashMap<SamplingKey, Result<(), EngineError>>>,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<World, GraphError> {
        let (compact, graph) = build_graphs(&scenario)?;
        let scenario_dist = DistanceTable::scenario(&graph);
        let compact_dist = DistanceTable::compact(&compact, &graph);
        Ok(World {
            scenario,
            compact,
            graph,
            hints: None,
            scenario_dist,
            compact_dist,
            feasibility: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_hints(mut self, hints: HintStore) -> World {
        self.hints = Some(hints);
        self
    }

    /// The bundled scenario together with its hints.
    pub fn builtin() -> World {
        let world = World::new(builtin_scenario()).expect("bundled scenario is acyclic");
        let hints = builtin_hints(&world.graph);
        world.with_hints(hints)
    }

    pub fn distances(&self, space: DistanceSpace) -> &DistanceTable {
        match space {
            DistanceSpace::ScenarioGraph => &self.scenario_dist,
            DistanceSpace::CompactGraph => &self.compact_dist,
        }
    }

    /// Step nodes that may supply wrong choices at `node`.
    pub fn negative_candidates(&self, node: NodeIx, neg_distance: u32, space: DistanceSpace) -> Vec<NodeIx> {
        let dist = self.distances(space);
        let frontier = self.graph.frontier(node);
        self.graph
            .step_nodes()
            .filter(|&n| {
                let d = dist.get(node, n);
                d != DistanceTable::UNREACHABLE && d > neg_distance && !frontier.contains(&n)
            })
            .collect()
    }

    fn valid_texts(&self, node: NodeIx) -> HashSet<String> {
        self.graph
            .frontier(node)
            .iter()
            .flat_map(|&f| self.graph.texts(f))
            .map(|t| normalize_text(t))
            .collect()
    }

    /// Checks that every playable node can furnish `num_choices - 1` wrong
    /// choices. Results are cached per setting.
    pub fn check_sampling(&self, num_choices: usize, neg_distance: u32, space: DistanceSpace) -> Result<(), EngineError> {
        let key = (num_choices, neg_distance, space);
        let mut cache = self.feasibility.lock().expect("feasibility cache");
        if let Some(r) = cache.get(&key) {
            return r.clone();
        }
        let needed = num_choices - 1;
        let mut result = Ok(());
        for node in self.graph.playable_nodes() {
            let valid = self.valid_texts(node);
            let mut usable_nodes = 0;
            let mut usable_texts = HashSet::new();
            for n in self.negative_candidates(node, neg_distance, space) {
                let texts: Vec<String> = self
                    .graph
                    .texts(n)
                    .iter()
                    .map(|t| normalize_text(t))
                    .filter(|t| !valid.contains(t))
                    .collect();
                if !texts.is_empty() {
                    usable_nodes += 1;
                }
                usable_texts.extend(texts);
            }
            let available = usable_nodes.min(usable_texts.len());
            if available < needed {
                result = Err(EngineError::Sampling {
                    node: self.graph.name(node).to_string(),
                    needed,
                    available,
                });
                break;
            }
        }
        cache.insert(key, result.clone());
        result
    }
}

/// What the agent sees. The correct index and the source node of each choice
/// are hidden: never serialized.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub quest: String,
    pub choices: Vec<String>,
    pub hint: Option<String>,
    #[serde(skip)]
    pub correct_index: Option<usize>,
    #[serde(skip)]
    sources: Vec<NodeIx>,
}

impl Observation {
    /// Builds an observation with no hidden fields, as received by a remote
    /// agent.
    pub fn visible(quest: String, choices: Vec<String>, hint: Option<String>) -> Self {
        Observation {
            quest,
            choices,
            hint,
            correct_index: None,
            sources: Vec::new(),
        }
    }

    /// Node each choice text was drawn from; empty for remote observations.
    pub fn sources(&self) -> &[NodeIx] {
        &self.sources
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EndReason {
    InProgress,
    GoalReached,
    TooManyWrong,
    StepCapExceeded,
}

impl EndReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            EndReason::InProgress => "InProgress",
            EndReason::GoalReached => "GoalReached",
            EndReason::TooManyWrong => "TooManyWrong",
            EndReason::StepCapExceeded => "StepCapExceeded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepResult {
    pub reward: i32,
    pub done: bool,
    pub reason: EndReason,
    pub next_observation: Option<Observation>,
}

#[derive(Debug, Clone)]
pub struct GameState {
    pub current: NodeIx,
    pub consecutive_wrong: u32,
    pub cumulative_reward: i64,
    pub step_index: u64,
    pub wrong_total: u64,
    pub done: bool,
    pub reason: EndReason,
    pub last_observation: Observation,
    rng: GameRng,
    visited: Vec<bool>,
}

/// First line of an episode log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogHeader {
    pub version: String,
    pub scenario: String,
    pub config: GameConfig,
}

/// One step of an episode log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    pub node: String,
    pub choices: Vec<String>,
    pub hint: Option<String>,
    pub action: usize,
    pub correct: usize,
    pub reward: i32,
    pub done: bool,
    pub reason: EndReason,
    #[serde(skip)]
    pub node_after: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub steps: Vec<StepRecord>,
}

impl EpisodeLog {
    /// Header line followed by one JSON object per step.
    pub fn to_jsonl(&self) -> String {
        let mut out = serde_json::to_string(&self.header).expect("header serializes");
        out.push('\n');
        for step in &self.steps {
            out.push_str(&serde_json::to_string(step).expect("step serializes"));
            out.push('\n');
        }
        out
    }

    pub fn total_reward(&self) -> i64 {
        self.steps.iter().map(|s| i64::from(s.reward)).sum()
    }
}

pub struct Game {
    world: Arc<World>,
    cfg: GameConfig,
    neg_distance: u32,
    state: GameState,
    log: Vec<StepRecord>,
}

impl Game {
    /// Starts a game at `START`. The generator is seeded from `cfg.seed`.
    pub fn new(world: Arc<World>, cfg: GameConfig) -> Result<(Game, Observation), EngineError> {
        let rng = GameRng::new(cfg.seed);
        Game::with_rng(world, cfg, rng)
    }

    pub fn with_rng(world: Arc<World>, cfg: GameConfig, mut rng: GameRng) -> Result<(Game, Observation), EngineError> {
        cfg.validate()?;
        if cfg.handicap && world.hints.is_none() {
            return Err(EngineError::Config("handicap mode needs a hint store".into()));
        }
        let neg_distance = cfg.neg_distance.unwrap_or(world.scenario.neg_distance);
        world.check_sampling(cfg.num_choices, neg_distance, cfg.distance_space)?;

        let start = ScenarioGraph::START;
        let obs = sample_choices(&world, &cfg, neg_distance, start, &mut rng)?;
        let mut visited = vec![false; world.graph.len()];
        visited[start.0] = true;
        let state = GameState {
            current: start,
            consecutive_wrong: 0,
            cumulative_reward: 0,
            step_index: 0,
            wrong_total: 0,
            done: false,
            reason: EndReason::InProgress,
            last_observation: obs.clone(),
            rng,
            visited,
        };
        Ok((
            Game {
                world,
                cfg,
                neg_distance,
                state,
                log: Vec::new(),
            },
            obs,
        ))
    }

    pub fn state(&self) -> &GameState {
        &self.state
    }

    pub fn config(&self) -> &GameConfig {
        &self.cfg
    }

    pub fn world(&self) -> &Arc<World> {
        &self.world
    }

    pub fn observation(&self) -> &Observation {
        &self.state.last_observation
    }

    /// Name of the current node; white-box access for tabular agents.
    pub fn current_node(&self) -> &str {
        self.world.graph.name(self.state.current)
    }

    pub fn is_done(&self) -> bool {
        self.state.done
    }

    /// Scenario-graph nodes passed through so far, in index order.
    pub fn visited(&self) -> impl Iterator<Item = NodeIx> + '_ {
        self.state
            .visited
            .iter()
            .enumerate()
            .filter(|(_, &v)| v)
            .map(|(i, _)| NodeIx(i))
    }

    pub fn step(&mut self, action: usize) -> Result<StepResult, EngineError> {
        if self.state.done {
            return Err(EngineError::Terminated);
        }
        let len = self.state.last_observation.choices.len();
        if action >= len {
            return Err(EngineError::OutOfRange { index: action, len });
        }
        let world = Arc::clone(&self.world);
        let g = &world.graph;
        let obs = &self.state.last_observation;
        let correct = obs.correct_index.expect("engine observations carry the answer");
        let before = self.state.current;

        let (reward, reason) = if action == correct {
            let target = obs.sources[action];
            self.mark_path(before, target);
            self.state.current = target;
            self.state.consecutive_wrong = 0;
            if g.frontier(target).is_empty() {
                self.mark_path(target, g.end());
                (GOAL_REWARD, EndReason::GoalReached)
            } else {
                (0, EndReason::InProgress)
            }
        } else {
            self.state.consecutive_wrong += 1;
            self.state.wrong_total += 1;
            if self.state.consecutive_wrong >= self.cfg.consecutive_wrong_limit {
                (WRONG_REWARD, EndReason::TooManyWrong)
            } else {
                for _ in 0..self.cfg.back_hop {
                    let preds = g.predecessors(self.state.current);
                    if preds.is_empty() {
                        break;
                    }
                    self.state.current = preds[self.state.rng.index(preds.len())];
                    self.state.visited[self.state.current.0] = true;
                }
                (WRONG_REWARD, EndReason::InProgress)
            }
        };

        self.state.step_index += 1;
        self.state.cumulative_reward += i64::from(reward);
        let mut reason = reason;
        if reason == EndReason::InProgress
            && self.cfg.max_steps.is_some_and(|cap| self.state.step_index >= cap)
        {
            reason = EndReason::StepCapExceeded;
        }
        let done = reason != EndReason::InProgress;
        self.state.done = done;
        self.state.reason = reason;

        let record = StepRecord {
            t: self.state.step_index - 1,
            node: g.name(before).to_string(),
            choices: self.state.last_observation.choices.clone(),
            hint: self.state.last_observation.hint.clone(),
            action,
            correct,
            reward,
            done,
            reason,
            node_after: g.name(self.state.current).to_string(),
        };
        self.log.push(record);

        let next_observation = if done {
            None
        } else {
            let obs = sample_choices(
                &world,
                &self.cfg,
                self.neg_distance,
                self.state.current,
                &mut self.state.rng,
            )?;
            self.state.last_observation = obs.clone();
            Some(obs)
        };
        Ok(StepResult {
            reward,
            done,
            reason,
            next_observation,
        })
    }

    /// Marks `to` and the entry/exit nodes passed on the way from `from`.
    fn mark_path(&mut self, from: NodeIx, to: NodeIx) {
        let g = &self.world.graph;
        let mut parent: HashMap<NodeIx, NodeIx> = HashMap::new();
        let mut stack = vec![from];
        while let Some(v) = stack.pop() {
            if v == to {
                break;
            }
            for &w in g.successors(v) {
                let passable = w == to || !matches!(g.kind(w), NodeKind::Step { .. } | NodeKind::End);
                if passable && !parent.contains_key(&w) {
                    parent.insert(w, v);
                    stack.push(w);
                }
            }
        }
        let mut v = to;
        while v != from {
            self.state.visited[v.0] = true;
            match parent.get(&v) {
                Some(&p) => v = p,
                None => break,
            }
        }
    }

    pub fn transcript(&self) -> EpisodeLog {
        EpisodeLog {
            header: LogHeader {
                version: ENGINE_VERSION.to_string(),
                scenario: self.world.scenario.title.clone(),
                config: self.cfg.clone(),
            },
            steps: self.log.clone(),
        }
    }
}

/// Builds the observation shown at `node`.
pub fn sample_choices(
    world: &World,
    cfg: &GameConfig,
    neg_distance: u32,
    node: NodeIx,
    rng: &mut GameRng,
) -> Result<Observation, EngineError> {
    let g = &world.graph;
    let frontier = g.frontier(node);
    let needed = cfg.num_choices - 1;
    if frontier.is_empty() {
        return Err(EngineError::Sampling {
            node: g.name(node).to_string(),
            needed,
            available: 0,
        });
    }
    let target = frontier[rng.index(frontier.len())];
    let target_texts = g.texts(target);
    let correct = target_texts[rng.index(target_texts.len())].clone();

    let valid = world.valid_texts(node);
    let mut used: HashSet<String> = HashSet::from([normalize_text(&correct)]);
    let mut eligible = world.negative_candidates(node, neg_distance, cfg.distance_space);
    let available = eligible.len();
    rng.shuffle(&mut eligible);

    let mut choices = vec![(correct, target)];
    for n in eligible {
        if choices.len() == cfg.num_choices {
            break;
        }
        let texts = g.texts(n);
        let offset = rng.index(texts.len());
        for i in 0..texts.len() {
            let text = &texts[(offset + i) % texts.len()];
            let key = normalize_text(text);
            if !valid.contains(&key) && !used.contains(&key) {
                used.insert(key);
                choices.push((text.clone(), n));
                break;
            }
        }
    }
    if choices.len() < cfg.num_choices {
        return Err(EngineError::Sampling {
            node: g.name(node).to_string(),
            needed,
            available: available.min(choices.len() - 1),
        });
    }

    let mut order: Vec<usize> = (0..choices.len()).collect();
    rng.shuffle(&mut order);
    let correct_index = order.iter().position(|&i| i == 0);
    let (texts, sources): (Vec<String>, Vec<NodeIx>) =
        order.iter().map(|&i| choices[i].clone()).unzip();

    let hint = if cfg.handicap {
        let hints = world.hints.as_ref().map(|h| h.get(node)).unwrap_or(&[]);
        rng.choose(hints).cloned()
    } else {
        None
    };

    Ok(Observation {
        quest: world.scenario.title.clone(),
        choices: texts,
        hint,
        correct_index,
        sources,
    })
}
