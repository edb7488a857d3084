use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::nn::ChoiceScorer;
use super::{act_epsilon_greedy, Agent, AgentConfig, AgentError, AgentView};
use crate::features::{FeatureVector, Featurizer};
use crate::rng::GameRng;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub features: FeatureVector,
    pub action: usize,
    pub reward: f64,
    /// `None` when the transition ended the episode.
    pub next_features: Option<FeatureVector>,
}

impl Transition {
    pub fn done(&self) -> bool {
        self.next_features.is_none()
    }
}

/// Fixed-capacity FIFO of transitions with uniform sampling.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity),
        }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample(&self, n: usize, rng: &mut GameRng) -> Vec<&Transition> {
        (0..n).map(|_| &self.items[rng.index(self.items.len())]).collect()
    }
}

/// TD target `r + gamma * max_a' Q_target(s', a') * (1 - done)`.
pub fn td_target(target: &ChoiceScorer, t: &Transition, gamma: f64) -> f64 {
    match &t.next_features {
        None => t.reward,
        Some(next) => {
            let best = target.scores(next).into_iter().fold(f64::NEG_INFINITY, f64::max);
            t.reward + gamma * best
        }
    }
}

/// Mean squared TD error over `batch` and its gradient with respect to the
/// parameters of `q` (the target network is held fixed).
pub fn dqn_loss_and_grad(q: &ChoiceScorer, target: &ChoiceScorer, batch: &[&Transition], gamma: f64) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; q.param_count()];
    let n = batch.len() as f64;
    let mut loss = 0.0;
    for t in batch {
        let y = td_target(target, t, gamma);
        let scores = q.scores(&t.features);
        let err = scores[t.action] - y;
        loss += err * err / n;
        let mut d = vec![0.0; scores.len()];
        d[t.action] = 2.0 * err / n;
        q.backward(&t.features, &d, &mut grad);
    }
    (loss, grad)
}

/// One SGD step on the TD loss. `update` counts updates made so far,
/// including this one; the target network copies `q` every
/// `target_sync_interval` updates.
pub fn dqn_update(
    q: &mut ChoiceScorer,
    target: &mut ChoiceScorer,
    batch: &[&Transition],
    cfg: &AgentConfig,
    update: u64,
) -> Result<f64, AgentError> {
    let (loss, grad) = dqn_loss_and_grad(q, target, batch, cfg.gamma);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(AgentError::NonFiniteLoss { loss, update });
    }
    q.net.sgd_step(&grad, cfg.learning_rate);
    if cfg.target_sync_interval > 0 && update.is_multiple_of(cfg.target_sync_interval) {
        target.net.params.clone_from(&q.net.params);
    }
    Ok(loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DqnState {
    pub q: ChoiceScorer,
    pub target: ChoiceScorer,
}

/// Q-learning with experience replay and a target network. The network
/// scores each choice separately, so it works for any number of choices.
pub struct DqnAgent {
    cfg: AgentConfig,
    featurizer: Featurizer,
    q: ChoiceScorer,
    target: ChoiceScorer,
    replay: ReplayBuffer,
    rng: GameRng,
    steps: u64,
    updates: u64,
    training: bool,
    pending: Option<FeatureVector>,
}

impl DqnAgent {
    pub fn new(cfg: AgentConfig, featurizer: Featurizer) -> Self {
        let mut rng = GameRng::new(cfg.seed);
        let q = ChoiceScorer::new(featurizer.dim(), &cfg.hidden_sizes, &mut rng);
        DqnAgent {
            target: q.clone(),
            q,
            replay: ReplayBuffer::new(cfg.replay_capacity),
            featurizer,
            rng,
            cfg,
            steps: 0,
            updates: 0,
            training: true,
            pending: None,
        }
    }

    pub fn network(&self) -> &ChoiceScorer {
        &self.q
    }

    pub fn set_network(&mut self, state: DqnState) -> Result<(), AgentError> {
        if state.q.dim != self.featurizer.dim() {
            return Err(AgentError::ShapeMismatch {
                expected: self.featurizer.dim(),
                got: state.q.dim,
            });
        }
        self.q = state.q;
        self.target = state.target;
        Ok(())
    }

    fn features(&mut self, view: &AgentView<'_>) -> FeatureVector {
        match self.pending.take() {
            Some(f) if f.layout.num_choices == view.obs.choices.len() => f,
            _ => self.featurizer.featurize(view.obs),
        }
    }
}

impl Agent for DqnAgent {
    fn name(&self) -> &'static str {
        "dqn"
    }

    fn act(&mut self, view: &AgentView<'_>) -> Result<usize, AgentError> {
        let fv = self.features(view);
        let eps = if self.training {
            self.cfg.epsilon_schedule.at(self.steps)
        } else {
            0.0
        };
        let a = act_epsilon_greedy(&self.q, &fv, eps, &mut self.rng)?;
        self.pending = Some(fv);
        Ok(a)
    }

    fn observe(
        &mut self,
        view: &AgentView<'_>,
        action: usize,
        reward: i32,
        next: Option<&AgentView<'_>>,
    ) -> Result<(), AgentError> {
        let features = self.features(view);
        let next_features = next.map(|v| self.featurizer.featurize(v.obs));
        self.pending = next_features.clone();
        if !self.training {
            return Ok(());
        }
        self.replay.push(Transition {
            features,
            action,
            reward: f64::from(reward),
            next_features,
        });
        self.steps += 1;
        if self.replay.len() >= self.cfg.batch_size {
            self.updates += 1;
            let batch = self.replay.sample(self.cfg.batch_size, &mut self.rng);
            dqn_update(&mut self.q, &mut self.target, &batch, &self.cfg, self.updates)?;
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<(), AgentError> {
        self.pending = None;
        Ok(())
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        serde_json::to_value(DqnState {
            q: self.q.clone(),
            target: self.target.clone(),
        })
        .ok()
    }
}
