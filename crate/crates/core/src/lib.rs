//! Choice-based text game environment built from script knowledge.
//!
//! Aligned event sequence descriptions ([`corpus`]) become a compact event
//! graph and an expanded scenario graph ([`graph`]); the [`engine`] plays
//! multiple-choice games over the latter. [`agents`] holds baseline learners
//! and [`protocol`] exposes the engine to agents in other processes.

pub mod agents;
pub mod corpus;
pub mod engine;
pub mod features;
pub mod graph;
pub mod protocol;
pub mod report;
pub mod rng;

pub use corpus::{load_hints, load_scenario, HintStore, Scenario};
pub use engine::{EndReason, Game, GameConfig, Observation, StepResult, World};
pub use graph::{CompactGraph, ScenarioGraph};
pub use rng::GameRng;
