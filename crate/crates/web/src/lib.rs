//! Browser bindings for the bundled scenario: an interactive game, the graph
//! report, and a random-policy score sweep.

use std::sync::{Arc, OnceLock};

use scriptworld::agents::{run_episode, EnvFactory, EvalSummary, RandomAgent};
use scriptworld::graph::{export_dot, format_magnitude, stats};
use scriptworld::{EndReason, Game, GameConfig, Observation, World};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn world() -> Arc<World> {
    static WORLD: OnceLock<Arc<World>> = OnceLock::new();
    Arc::clone(WORLD.get_or_init(|| Arc::new(World::builtin())))
}

fn js(e: String) -> JsValue {
    JsValue::from_str(&e)
}

#[wasm_bindgen]
pub struct WebGame {
    game: Game,
    obs: Observation,
}

#[wasm_bindgen]
impl WebGame {
    #[wasm_bindgen(constructor)]
    pub fn new(choices: usize, handicap: bool, seed: u32) -> Result<WebGame, JsValue> {
        WebGame::create(choices, handicap, seed).map_err(js)
    }

    /// Current quest, choices, hint and score as JSON.
    pub fn observation(&self) -> String {
        let s = self.game.state();
        json!({
            "quest": self.obs.quest,
            "choices": self.obs.choices,
            "hint": self.obs.hint,
            "score": s.cumulative_reward,
            "step": s.step_index,
            "wrong_streak": s.consecutive_wrong,
            "done": s.done,
        })
        .to_string()
    }

    /// Takes choice `index` and returns the reward, end flag, reason and score.
    pub fn step(&mut self, index: usize) -> Result<String, JsValue> {
        self.play(index).map_err(js)
    }

    /// Episode log as JSON lines.
    pub fn transcript(&self) -> String {
        self.game.transcript().to_jsonl()
    }
}

impl WebGame {
    pub fn create(choices: usize, handicap: bool, seed: u32) -> Result<WebGame, String> {
        let cfg = GameConfig {
            num_choices: choices,
            handicap,
            seed: u64::from(seed),
            ..GameConfig::default()
        };
        let (game, obs) = Game::new(world(), cfg).map_err(|e| e.to_string())?;
        Ok(WebGame { game, obs })
    }

    pub fn play(&mut self, index: usize) -> Result<String, String> {
        let r = self.game.step(index).map_err(|e| e.to_string())?;
        if let Some(next) = r.next_observation {
            self.obs = next;
        }
        Ok(json!({
            "reward": r.reward,
            "done": r.done,
            "reason": r.reason.as_str(),
            "score": self.game.state().cumulative_reward,
        })
        .to_string())
    }

    pub fn correct_index(&self) -> Option<usize> {
        self.obs.correct_index
    }
}

/// Size, degree and path statistics plus DOT sources for both graphs.
#[wasm_bindgen]
pub fn graph_report() -> String {
    let w = world();
    let st = stats(&w.graph);
    json!({
        "title": w.scenario.title,
        "clusters": w.compact.cluster_count(),
        "nodes": st.node_count,
        "avg_degree": st.avg_degree,
        "total_paths": st.total_paths.to_string(),
        "paths_magnitude": format_magnitude(&st.total_paths),
        "dot": export_dot(&w.graph),
        "compact_dot": export_dot(&w.compact),
    })
    .to_string()
}

/// Random-policy score for each choice count from 2 to `max_choices`.
#[wasm_bindgen]
pub fn random_scores(max_choices: usize, episodes: usize, seed: u32) -> Result<String, JsValue> {
    random_sweep(max_choices, episodes, seed).map_err(js)
}

pub fn random_sweep(max_choices: usize, episodes: usize, seed: u32) -> Result<String, String> {
    let mut rows = Vec::new();
    for choices in 2..=max_choices {
        let env = EnvFactory::new(
            world(),
            GameConfig {
                num_choices: choices,
                seed: u64::from(seed),
                ..GameConfig::default()
            },
        );
        let mut agent = RandomAgent::new(u64::from(seed));
        let mut scores = Vec::with_capacity(episodes);
        let mut goals = 0usize;
        for k in 0..episodes as u64 {
            let o = run_episode(&mut agent, &env, k).map_err(|e| e.to_string())?;
            goals += usize::from(o.reason == EndReason::GoalReached);
            scores.push(o.score);
        }
        let s = EvalSummary::from_scores(&scores);
        rows.push(json!({
            "choices": choices,
            "mean": s.mean,
            "sd": s.sd,
            "goal_rate": goals as f64 / episodes.max(1) as f64,
        }));
    }
    Ok(serde_json::Value::Array(rows).to_string())
}
