use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::RngCore;
use serde::Serialize;

use super::{Agent, AgentConfig, AgentError, AgentKind, AgentView};
use crate::engine::{EndReason, Game, GameConfig, Observation, World, ENGINE_VERSION};
use crate::features::Featurizer;
use crate::rng::GameRng;

/// Episode indices at or above this value are used for evaluation so they
/// never coincide with training episodes.
pub const EVAL_OFFSET: u64 = 1 << 40;

/// Fresh games over one world. Episode `k` is seeded with a value derived
/// from `(cfg.seed, k)`, which its transcript header records.
#[derive(Clone)]
pub struct EnvFactory {
    pub world: Arc<World>,
    pub cfg: GameConfig,
}

impl EnvFactory {
    pub fn new(world: Arc<World>, cfg: GameConfig) -> Self {
        EnvFactory { world, cfg }
    }

    pub fn episode_seed(&self, episode: u64) -> u64 {
        GameRng::stream(self.cfg.seed, episode).next_u64()
    }

    pub fn make(&self, episode: u64) -> Result<(Game, Observation), AgentError> {
        let cfg = GameConfig {
            seed: self.episode_seed(episode),
            ..self.cfg.clone()
        };
        Ok(Game::new(Arc::clone(&self.world), cfg)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub score: i64,
    pub steps: u64,
    pub reason: EndReason,
    pub visited: Vec<bool>,
}

pub fn run_episode(agent: &mut dyn Agent, env: &EnvFactory, episode: u64) -> Result<EpisodeOutcome, AgentError> {
    let (mut game, mut obs) = env.make(episode)?;
    agent.begin_episode(episode);
    loop {
        let node = game.current_node().to_string();
        let view = AgentView {
            obs: &obs,
            node: Some(&node),
        };
        let action = agent.act(&view)?;
        let result = game.step(action)?;
        let next_node = game.current_node().to_string();
        let next_view = result.next_observation.as_ref().map(|o| AgentView {
            obs: o,
            node: Some(&next_node),
        });
        agent.observe(&view, action, result.reward, next_view.as_ref())?;
        match result.next_observation {
            Some(o) => obs = o,
            None => break,
        }
    }
    agent.end_episode()?;
    let mut visited = vec![false; game.world().graph.len()];
    for n in game.visited() {
        visited[n.0] = true;
    }
    Ok(EpisodeOutcome {
        score: game.state().cumulative_reward,
        steps: game.state().step_index,
        reason: game.state().reason,
        visited,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub mean: f64,
    pub sd: f64,
}

impl EvalSummary {
    pub fn from_scores(scores: &[i64]) -> EvalSummary {
        let n = scores.len();
        if n == 0 {
            return EvalSummary {
                episodes: 0,
                mean: 0.0,
                sd: 0.0,
            };
        }
        let mean = scores.iter().sum::<i64>() as f64 / n as f64;
        let var = if n > 1 {
            scores.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        EvalSummary {
            episodes: n,
            mean,
            sd: var.sqrt(),
        }
    }
}

/// Trailing mean over at most `window` entries ending at each index.
pub fn moving_average(scores: &[i64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(scores.len());
    let mut sum = 0i64;
    for (t, &s) in scores.iter().enumerate() {
        sum += s;
        if t >= window {
            sum -= scores[t - window];
        }
        out.push(sum as f64 / (t + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub agent: String,
    pub window: usize,
    pub scores: Vec<i64>,
    pub moving_avg: Vec<f64>,
    /// Percentage of scenario-graph nodes visited in episodes `0..=t`.
    pub coverage_pct: Vec<f64>,
    pub eval: EvalSummary,
    /// Kept out of the CSV and summary so artifacts stay reproducible.
    #[serde(skip)]
    pub wall_clock_secs: f64,
}

impl TrainReport {
    /// Mean of the last `n` training scores.
    pub fn last_mean(&self, n: usize) -> f64 {
        let tail = &self.scores[self.scores.len().saturating_sub(n)..];
        if tail.is_empty() {
            0.0
        } else {
            tail.iter().sum::<i64>() as f64 / tail.len() as f64
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,score,moving_avg,coverage_pct\n");
        for t in 0..self.scores.len() {
            let _ = writeln!(
                out,
                "{},{},{:.4},{:.4}",
                t, self.scores[t], self.moving_avg[t], self.coverage_pct[t]
            );
        }
        out
    }

    /// Run summary stamped with engine version and both configurations.
    pub fn summary_json(&self, game: &GameConfig, agent: &AgentConfig) -> serde_json::Value {
        serde_json::json!({
            "engine_version": ENGINE_VERSION,
            "agent": self.agent,
            "seed": game.seed,
            "game_config": game,
            "agent_config": agent,
            "episodes": self.scores.len(),
            "window": self.window,
            "final_moving_avg": self.moving_avg.last().copied().unwrap_or(0.0),
            "final_coverage_pct": self.coverage_pct.last().copied().unwrap_or(0.0),
            "eval": self.eval,
        })
    }
}

fn accumulate(outcomes: impl IntoIterator<Item = EpisodeOutcome>, nodes: usize, window: usize) -> (Vec<i64>, Vec<f64>, Vec<f64>) {
    let mut seen = vec![false; nodes];
    let mut covered = 0usize;
    let mut scores = Vec::new();
    let mut coverage = Vec::new();
    for o in outcomes {
        for (s, v) in seen.iter_mut().zip(&o.visited) {
            if *v && !*s {
                *s = true;
                covered += 1;
            }
        }
        scores.push(o.score);
        coverage.push(100.0 * covered as f64 / nodes as f64);
    }
    let ma = moving_average(&scores, window);
    (scores, ma, coverage)
}

/// Trains `agent` for `episodes` episodes, then evaluates the frozen policy
/// for `cfg.eval_episodes` episodes.
pub fn train(agent: &mut dyn Agent, env: &EnvFactory, cfg: &AgentConfig, episodes: usize) -> Result<TrainReport, AgentError> {
    cfg.validate()?;
    let clock = Instant::now();
    agent.set_training(true);
    let mut outcomes = Vec::with_capacity(episodes);
    for k in 0..episodes {
        outcomes.push(run_episode(agent, env, k as u64)?);
    }
    let (scores, moving_avg, coverage_pct) = accumulate(outcomes, env.world.graph.len(), cfg.moving_avg_window);
    let eval = evaluate(agent, env, cfg.eval_episodes)?;
    Ok(TrainReport {
        agent: agent.name().to_string(),
        window: cfg.moving_avg_window,
        scores,
        moving_avg,
        coverage_pct,
        eval,
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    })
}

/// Frozen-policy evaluation over `episodes` held-out episodes.
pub fn evaluate(agent: &mut dyn Agent, env: &EnvFactory, episodes: usize) -> Result<EvalSummary, AgentError> {
    agent.set_training(false);
    let scores = (0..episodes as u64)
        .map(|k| run_episode(agent, env, EVAL_OFFSET + k).map(|o| o.score))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalSummary::from_scores(&scores))
}

/// Runs episodes `first..first + count` with frozen agents spread over
/// `workers` threads. Each worker gets its own agent from `make`; outcomes
/// come back in episode order, so results do not depend on `workers`.
pub fn run_parallel<F>(make: F, env: &EnvFactory, first: u64, count: usize, workers: usize) -> Result<Vec<EpisodeOutcome>, AgentError>
where
    F: Fn() -> Result<Box<dyn Agent + Send>, AgentError> + Sync,
{
    let workers = workers.clamp(1, count.max(1));
    let chunk = count.div_ceil(workers);
    let results: Vec<Result<Vec<EpisodeOutcome>, AgentError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let make = &make;
                scope.spawn(move || {
                    let mut agent = make()?;
                    agent.set_training(false);
                    let lo = w * chunk;
                    let hi = ((w + 1) * chunk).min(count);
                    (lo..hi).map(|k| run_episode(agent.as_mut(), env, first + k as u64)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(count);
    for r in results {
        out.extend(r?);
    }
    Ok(out)
}

/// Runs a non-learning agent (random or oracle) on `workers` threads and
/// reports it like a training run.
pub fn train_frozen(
    kind: AgentKind,
    env: &EnvFactory,
    cfg: &AgentConfig,
    episodes: usize,
    workers: usize,
) -> Result<TrainReport, AgentError> {
    if !matches!(kind, AgentKind::Random | AgentKind::Oracle) {
        return Err(AgentError::Config(format!("{kind:?} learns and cannot run on several workers")));
    }
    cfg.validate()?;
    let clock = Instant::now();
    let make = || kind.build(cfg, Featurizer::hashed(cfg.feature_dim, cfg.include_hint));
    let outcomes = run_parallel(make, env, 0, episodes, workers)?;
    let (scores, moving_avg, coverage_pct) = accumulate(outcomes, env.world.graph.len(), cfg.moving_avg_window);
    let eval_scores: Vec<i64> = run_parallel(make, env, EVAL_OFFSET, cfg.eval_episodes, workers)?
        .into_iter()
        .map(|o| o.score)
        .collect();
    Ok(TrainReport {
        agent: make()?.name().to_string(),
        window: cfg.moving_avg_window,
        scores,
        moving_avg,
        coverage_pct,
        eval: EvalSummary::from_scores(&eval_scores),
        wall_clock_secs: clock.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScoreMatrix {
    pub names: Vec<String>,
    /// `values[i][j]`: agent trained on scenario `i`, evaluated on `j`.
    pub values: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("train\\eval");
        for n in &self.names {
            out.push(',');
            out.push_str(&csv_field(n));
        }
        out.push('\n');
        for (name, row) in self.names.iter().zip(&self.values) {
            out.push_str(&csv_field(name));
            for v in row {
                let _ = write!(out, ",{v:.4}");
            }
            out.push('\n');
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Evaluates each trained agent on every environment with a frozen policy.
/// `trained[i]` must have been trained on `envs[i]`.
pub fn cross_eval(
    trained: &mut [Box<dyn Agent + Send>],
    envs: &[(String, EnvFactory)],
    eval_episodes: usize,
) -> Result<ScoreMatrix, AgentError> {
    if trained.len() != envs.len() {
        return Err(AgentError::Config("one trained agent per scenario is required".into()));
    }
    if let Some((_, first)) = envs.first() {
        if let Some((name, e)) = envs.iter().find(|(_, e)| e.cfg.num_choices != first.cfg.num_choices) {
            return Err(AgentError::FeatureDimMismatch(format!(
                "{name} uses {} choices, expected {}",
                e.cfg.num_choices, first.cfg.num_choices
            )));
        }
    }
    let mut values = Vec::with_capacity(envs.len());
    for agent in trained.iter_mut() {
        let row = envs
            .iter()
            .map(|(_, env)| evaluate(agent.as_mut(), env, eval_episodes).map(|s| s.mean))
            .collect::<Result<Vec<_>, _>>()?;
        values.push(row);
    }
    Ok(ScoreMatrix {
        names: envs.iter().map(|(n, _)| n.clone()).collect(),
        values,
    })
}
