//! Baseline agents and the training and evaluation loop.
//!
//! All learners are written from scratch on `f64` so every gradient can be
//! checked against finite differences.

mod dqn;
pub mod nn;
mod reinforce;
mod tabular;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, Observation};
use crate::features::{FeatureVector, Featurizer};
use crate::rng::GameRng;

pub use dqn::{dqn_loss_and_grad, dqn_update, td_target, DqnAgent, DqnState, ReplayBuffer, Transition};
pub use nn::{ChoiceScorer, Mlp};
pub use reinforce::{
    discounted_returns, reinforce_loss_and_grad, reinforce_update, softmax, EpisodeStep, ReinforceAgent,
    ReinforceState, RunningMean,
};
pub use tabular::{tabular_q_update, QTable, TabularAgent};
pub use train::{
    cross_eval, evaluate, moving_average, run_episode, run_parallel, train, train_frozen, EnvFactory,
    EpisodeOutcome, EvalSummary, ScoreMatrix, TrainReport, EVAL_OFFSET,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("oracle access is not available for this observation")]
    OracleUnavailable,
    #[error("feature shape mismatch: network expects dim {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("feature dimension differs across scenarios: {0}")]
    FeatureDimMismatch(String),
    #[error("non-finite loss ({loss}) at update {update}")]
    NonFiniteLoss { loss: f64, update: u64 },
    #[error("agent needs white-box node ids")]
    MissingWhiteBox,
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub decay_steps: u64,
}

impl EpsilonSchedule {
    pub fn constant(eps: f64) -> Self {
        EpsilonSchedule {
            start: eps,
            end: eps,
            decay_steps: 0,
        }
    }

    /// Linear decay from `start` to `end` over `decay_steps` steps.
    pub fn at(&self, step: u64) -> f64 {
        if step >= self.decay_steps {
            return self.end;
        }
        let frac = step as f64 / self.decay_steps as f64;
        self.start + (self.end - self.start) * frac
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentConfig {
    pub gamma: f64,
    pub epsilon_schedule: EpsilonSchedule,
    pub learning_rate: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub target_sync_interval: u64,
    pub hidden_sizes: Vec<usize>,
    pub seed: u64,
    /// Width of the hashed text features.
    pub feature_dim: usize,
    /// Feed the hint embedding to feature-based agents when present.
    pub include_hint: bool,
    pub moving_avg_window: usize,
    /// Frozen-policy episodes run after training.
    pub eval_episodes: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            epsilon_schedule: EpsilonSchedule {
                start: 1.0,
                end: 0.01,
                decay_steps: 10_000,
            },
            learning_rate: 0.1,
            replay_capacity: 10_000,
            batch_size: 32,
            target_sync_interval: 250,
            hidden_sizes: Vec::new(),
            seed: 0,
            feature_dim: 64,
            include_hint: true,
            moving_avg_window: 100,
            eval_episodes: 100,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(AgentError::Config("gamma must lie in [0, 1]".into()));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 {
            return Err(AgentError::Config("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 || self.replay_capacity < self.batch_size {
            return Err(AgentError::Config(
                "batch_size must be positive and fit in the replay buffer".into(),
            ));
        }
        if self.feature_dim == 0 || self.moving_avg_window == 0 {
            return Err(AgentError::Config("feature_dim and moving_avg_window must be positive".into()));
        }
        Ok(())
    }
}

/// What an agent gets to see at a decision point. `node` is the current
/// scenario-graph node id, given only in white-box mode.
#[derive(Debug, Clone, Copy)]
pub struct AgentView<'a> {
    pub obs: &'a Observation,
    pub node: Option<&'a str>,
}

pub trait Agent {
    fn name(&self) -> &'static str;

    /// Called before each episode with its index in the run.
    fn begin_episode(&mut self, _episode: u64) {}

    fn act(&mut self, view: &AgentView<'_>) -> Result<usize, AgentError>;

    /// Called after every step; `next` is `None` when the step ended the
    /// episode.
    fn observe(
        &mut self,
        _view: &AgentView<'_>,
        _action: usize,
        _reward: i32,
        _next: Option<&AgentView<'_>>,
    ) -> Result<(), AgentError> {
        Ok(())
    }

    fn end_episode(&mut self) -> Result<(), AgentError> {
        Ok(())
    }

    /// Switches between learning (exploring) and frozen greedy play.
    fn set_training(&mut self, _training: bool) {}

    /// Learned state as JSON, for agents that have any.
    fn snapshot(&self) -> Option<serde_json::Value> {
        None
    }
}

pub fn act_random(obs: &Observation, rng: &mut GameRng) -> usize {
    if obs.choices.len() <= 1 {
        0
    } else {
        rng.index(obs.choices.len())
    }
}

pub fn act_oracle(obs: &Observation) -> Result<usize, AgentError> {
    obs.correct_index.ok_or(AgentError::OracleUnavailable)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn act_epsilon_greedy(
    qnet: &ChoiceScorer,
    features: &FeatureVector,
    epsilon: f64,
    rng: &mut GameRng,
) -> Result<usize, AgentError> {
    if features.layout.dim != qnet.dim {
        return Err(AgentError::ShapeMismatch {
            expected: qnet.dim,
            got: features.layout.dim,
        });
    }
    if rng.bernoulli(epsilon) {
        return Ok(rng.index(features.layout.num_choices));
    }
    Ok(argmax(&qnet.scores(features)))
}

/// Uniform policy. Reseeds per episode so results do not depend on how
/// episodes are split across workers.
pub struct RandomAgent {
    seed: u64,
    rng: GameRng,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent {
            seed,
            rng: GameRng::new(seed),
        }
    }
}

impl Agent for RandomAgent {
    fn name(&self) -> &'static str {
        "random"
    }

    fn begin_episode(&mut self, episode: u64) {
        self.rng = GameRng::stream(self.seed, episode);
    }

    fn act(&mut self, view: &AgentView<'_>) -> Result<usize, AgentError> {
        Ok(act_random(view.obs, &mut self.rng))
    }
}

/// Reads the hidden answer. Only works on observations produced in-process.
pub struct OracleAgent;

impl Agent for OracleAgent {
    fn name(&self) -> &'static str {
        "oracle"
    }

    fn act(&mut self, view: &AgentView<'_>) -> Result<usize, AgentError> {
        act_oracle(view.obs)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    Oracle,
    Tabq,
    Dqn,
    Reinforce,
}

impl AgentKind {
    pub fn build(self, cfg: &AgentConfig, featurizer: Featurizer) -> Result<Box<dyn Agent + Send>, AgentError> {
        cfg.validate()?;
        Ok(match self {
            AgentKind::Random => Box::new(RandomAgent::new(cfg.seed)),
            AgentKind::Oracle => Box::new(OracleAgent),
            AgentKind::Tabq => Box::new(TabularAgent::new(cfg.clone())),
            AgentKind::Dqn => Box::new(DqnAgent::new(cfg.clone(), featurizer)),
            AgentKind::Reinforce => Box::new(ReinforceAgent::new(cfg.clone(), featurizer)),
        })
    }

    /// Rebuilds a learner from [`Agent::snapshot`] output.
    pub fn restore(
        self,
        cfg: &AgentConfig,
        featurizer: Featurizer,
        snapshot: &serde_json::Value,
    ) -> Result<Box<dyn Agent + Send>, AgentError> {
        let bad = |e: serde_json::Error| AgentError::Config(format!("bad snapshot: {e}"));
        Ok(match self {
            AgentKind::Tabq => {
                let mut a = TabularAgent::new(cfg.clone());
                a.table = serde_json::from_value(snapshot.clone()).map_err(bad)?;
                Box::new(a)
            }
            AgentKind::Dqn => {
                let mut a = DqnAgent::new(cfg.clone(), featurizer);
                a.set_network(serde_json::from_value(snapshot.clone()).map_err(bad)?)?;
                Box::new(a)
            }
            AgentKind::Reinforce => {
                let mut a = ReinforceAgent::new(cfg.clone(), featurizer);
                a.set_network(serde_json::from_value(snapshot.clone()).map_err(bad)?)?;
                Box::new(a)
            }
            AgentKind::Random | AgentKind::Oracle => self.build(cfg, featurizer)?,
        })
    }

    pub fn needs_white_box(self) -> bool {
        self == AgentKind::Tabq
    }
}

impl std::str::FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(AgentKind::Random),
            "oracle" => Ok(AgentKind::Oracle),
            "tabq" => Ok(AgentKind::Tabq),
            "dqn" => Ok(AgentKind::Dqn),
            "reinforce" => Ok(AgentKind::Reinforce),
            other => Err(format!("unknown agent {other:?}")),
        }
    }
}
