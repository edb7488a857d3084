use serde::{Deserialize, Serialize};

use super::nn::ChoiceScorer;
use super::{argmax, Agent, AgentConfig, AgentError, AgentView};
use crate::features::{FeatureVector, Featurizer};
use crate::rng::GameRng;

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeStep {
    pub features: FeatureVector,
    pub action: usize,
    pub reward: f64,
}

/// `G_t = r_t + gamma * G_{t+1}`.
pub fn discounted_returns(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] + gamma * g;
        out[t] = g;
    }
    out
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

/// Mean of every return seen so far.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RunningMean {
    pub count: u64,
    pub mean: f64,
}

impl RunningMean {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.mean += (x - self.mean) / self.count as f64;
    }
}

/// Loss `-sum_t log pi(a_t|s_t) * (G_t - baseline)` and its gradient.
pub fn reinforce_loss_and_grad(
    policy: &ChoiceScorer,
    episode: &[EpisodeStep],
    gamma: f64,
    baseline: f64,
) -> (f64, Vec<f64>) {
    let rewards: Vec<f64> = episode.iter().map(|s| s.reward).collect();
    let returns = discounted_returns(&rewards, gamma);
    let mut grad = vec![0.0; policy.param_count()];
    let mut loss = 0.0;
    for (step, g) in episode.iter().zip(&returns) {
        let adv = g - baseline;
        let probs = softmax(&policy.scores(&step.features));
        loss -= probs[step.action].ln() * adv;
        // d(-log pi_a)/d(score_i) = pi_i - [i == a]
        let d: Vec<f64> = probs
            .iter()
            .enumerate()
            .map(|(i, p)| (p - if i == step.action { 1.0 } else { 0.0 }) * adv)
            .collect();
        policy.backward(&step.features, &d, &mut grad);
    }
    (loss, grad)
}

/// One SGD step on a finished episode; the baseline absorbs the episode's
/// returns afterwards.
pub fn reinforce_update(
    policy: &mut ChoiceScorer,
    episode: &[EpisodeStep],
    cfg: &AgentConfig,
    baseline: &mut RunningMean,
    update: u64,
) -> Result<f64, AgentError> {
    let (loss, grad) = reinforce_loss_and_grad(policy, episode, cfg.gamma, baseline.mean);
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(AgentError::NonFiniteLoss { loss, update });
    }
    policy.net.sgd_step(&grad, cfg.learning_rate);
    let rewards: Vec<f64> = episode.iter().map(|s| s.reward).collect();
    for g in discounted_returns(&rewards, cfg.gamma) {
        baseline.push(g);
    }
    Ok(loss)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReinforceState {
    pub policy: ChoiceScorer,
    pub baseline: RunningMean,
}

/// Softmax policy over per-choice scores. Samples while training and plays
/// the most probable choice when frozen.
pub struct ReinforceAgent {
    cfg: AgentConfig,
    featurizer: Featurizer,
    policy: ChoiceScorer,
    baseline: RunningMean,
    rng: GameRng,
    episode: Vec<EpisodeStep>,
    pending: Option<FeatureVector>,
    updates: u64,
    training: bool,
}

impl ReinforceAgent {
    pub fn new(cfg: AgentConfig, featurizer: Featurizer) -> Self {
        let mut rng = GameRng::new(cfg.seed);
        let policy = ChoiceScorer::new(featurizer.dim(), &cfg.hidden_sizes, &mut rng);
        ReinforceAgent {
            cfg,
            featurizer,
            policy,
            baseline: RunningMean::default(),
            rng,
            episode: Vec::new(),
            pending: None,
            updates: 0,
            training: true,
        }
    }

    pub fn network(&self) -> &ChoiceScorer {
        &self.policy
    }

    pub fn set_network(&mut self, state: ReinforceState) -> Result<(), AgentError> {
        if state.policy.dim != self.featurizer.dim() {
            return Err(AgentError::ShapeMismatch {
                expected: self.featurizer.dim(),
                got: state.policy.dim,
            });
        }
        self.policy = state.policy;
        self.baseline = state.baseline;
        Ok(())
    }
}

impl Agent for ReinforceAgent {
    fn name(&self) -> &'static str {
        "reinforce"
    }

    fn act(&mut self, view: &AgentView<'_>) -> Result<usize, AgentError> {
        let fv = self.featurizer.featurize(view.obs);
        if fv.layout.dim != self.policy.dim {
            return Err(AgentError::ShapeMismatch {
                expected: self.policy.dim,
                got: fv.layout.dim,
            });
        }
        let scores = self.policy.scores(&fv);
        let a = if self.training {
            let probs = softmax(&scores);
            let u = self.rng.unit();
            let mut acc = 0.0;
            probs
                .iter()
                .position(|p| {
                    acc += p;
                    u < acc
                })
                .unwrap_or(probs.len() - 1)
        } else {
            argmax(&scores)
        };
        self.pending = Some(fv);
        Ok(a)
    }

    fn observe(
        &mut self,
        view: &AgentView<'_>,
        action: usize,
        reward: i32,
        _next: Option<&AgentView<'_>>,
    ) -> Result<(), AgentError> {
        if self.training {
            let features = self
                .pending
                .take()
                .unwrap_or_else(|| self.featurizer.featurize(view.obs));
            self.episode.push(EpisodeStep {
                features,
                action,
                reward: f64::from(reward),
            });
        }
        Ok(())
    }

    fn end_episode(&mut self) -> Result<(), AgentError> {
        let episode = std::mem::take(&mut self.episode);
        if self.training && !episode.is_empty() {
            self.updates += 1;
            reinforce_update(&mut self.policy, &episode, &self.cfg, &mut self.baseline, self.updates)?;
        }
        Ok(())
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        serde_json::to_value(ReinforceState {
            policy: self.policy.clone(),
            baseline: self.baseline,
        })
        .ok()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::Layout;

    #[test]
    fn undiscounted_final_reward_propagates() {
        let mut r = vec![0.0; 9];
        r.push(10.0);
        assert!(discounted_returns(&r, 1.0).iter().all(|&g| g == 10.0));
    }

    #[test]
    fn discounting() {
        assert_eq!(discounted_returns(&[1.0, 1.0, 1.0], 0.5), vec![1.75, 1.5, 1.0]);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 1000.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((p[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn identical_episodes_give_identical_updates() {
        let mut rng = GameRng::new(4);
        let policy = ChoiceScorer::new(2, &[3], &mut rng);
        let ep = vec![
            EpisodeStep {
                features: FeatureVector {
                    values: vec![0.1, 0.2, 0.3, 0.4],
                    layout: Layout {
                        num_choices: 2,
                        dim: 2,
                        hint_included: false,
                    },
                },
                action: 1,
                reward: 0.0,
            },
            EpisodeStep {
                features: FeatureVector {
                    values: vec![0.5, -0.2, 0.0, 1.0],
                    layout: Layout {
                        num_choices: 2,
                        dim: 2,
                        hint_included: false,
                    },
                },
                action: 0,
                reward: 10.0,
            },
        ];
        let cfg = AgentConfig::default();
        let (mut a, mut b) = (policy.clone(), policy);
        let (mut ba, mut bb) = (RunningMean::default(), RunningMean::default());
        reinforce_update(&mut a, &ep, &cfg, &mut ba, 1).unwrap();
        reinforce_update(&mut b, &ep, &cfg, &mut bb, 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(ba, bb);
    }

    #[test]
    fn running_mean() {
        let mut m = RunningMean::default();
        for x in [1.0, 2.0, 6.0] {
            m.push(x);
        }
        assert!((m.mean - 3.0).abs() < 1e-12);
    }
}
