use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{argmax, Agent, AgentConfig, AgentError, AgentView};
use crate::features::normalize_text;
use crate::rng::GameRng;

/// Q-values keyed by state, then by normalized action text. Unseen entries
/// read as 0.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QTable {
    values: BTreeMap<String, BTreeMap<String, f64>>,
}

impl QTable {
    pub fn get(&self, state: &str, action: &str) -> f64 {
        self.values
            .get(state)
            .and_then(|m| m.get(&normalize_text(action)))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn set(&mut self, state: &str, action: &str, value: f64) {
        self.values
            .entry(state.to_string())
            .or_default()
            .insert(normalize_text(action), value);
    }

    /// Largest value over `actions` at `state`; 0 for an empty list.
    pub fn max_over<S: AsRef<str>>(&self, state: &str, actions: &[S]) -> f64 {
        actions
            .iter()
            .map(|a| self.get(state, a.as_ref()))
            .fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
            .unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.values.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// `Q(s,a) <- Q(s,a) + alpha * (r + gamma * max_a' Q(s',a') - Q(s,a))`.
/// `next` is `None` for a terminal transition, otherwise the next state key
/// with the actions offered there. Returns the updated value.
pub fn tabular_q_update<S: AsRef<str>>(
    table: &mut QTable,
    state: &str,
    action: &str,
    reward: f64,
    next: Option<(&str, &[S])>,
    alpha: f64,
    gamma: f64,
) -> f64 {
    let future = next.map_or(0.0, |(s, acts)| table.max_over(s, acts));
    let q = table.get(state, action);
    let updated = q + alpha * (reward + gamma * future - q);
    table.set(state, action, updated);
    updated
}

/// Tabular Q-learning over white-box node ids; `alpha` is the configured
/// learning rate.
pub struct TabularAgent {
    pub table: QTable,
    cfg: AgentConfig,
    rng: GameRng,
    steps: u64,
    training: bool,
}

impl TabularAgent {
    pub fn new(cfg: AgentConfig) -> Self {
        TabularAgent {
            table: QTable::default(),
            rng: GameRng::new(cfg.seed),
            cfg,
            steps: 0,
            training: true,
        }
    }
}

impl Agent for TabularAgent {
    fn name(&self) -> &'static str {
        "tabq"
    }

    fn act(&mut self, view: &AgentView<'_>) -> Result<usize, AgentError> {
        let state = view.node.ok_or(AgentError::MissingWhiteBox)?;
        let n = view.obs.choices.len();
        if self.training && self.rng.bernoulli(self.cfg.epsilon_schedule.at(self.steps)) {
            return Ok(self.rng.index(n));
        }
        let q: Vec<f64> = view.obs.choices.iter().map(|c| self.table.get(state, c)).collect();
        Ok(argmax(&q))
    }

    fn observe(
        &mut self,
        view: &AgentView<'_>,
        action: usize,
        reward: i32,
        next: Option<&AgentView<'_>>,
    ) -> Result<(), AgentError> {
        if !self.training {
            return Ok(());
        }
        let state = view.node.ok_or(AgentError::MissingWhiteBox)?;
        let next = match next {
            Some(v) => Some((v.node.ok_or(AgentError::MissingWhiteBox)?, v.obs.choices.as_slice())),
            None => None,
        };
        tabular_q_update(
            &mut self.table,
            state,
            &view.obs.choices[action],
            f64::from(reward),
            next,
            self.cfg.learning_rate,
            self.cfg.gamma,
        );
        self.steps += 1;
        Ok(())
    }

    fn set_training(&mut self, training: bool) {
        self.training = training;
    }

    fn snapshot(&self) -> Option<serde_json::Value> {
        serde_json::to_value(&self.table).ok()
    }
}
