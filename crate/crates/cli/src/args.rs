use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use scriptworld::agents::AgentKind;

#[derive(Debug, Parser)]
#[command(name = "scriptworld", version, about = "Text game over script knowledge graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Play a game interactively on stdin/stdout.
    Play(PlayArgs),
    /// Train an agent and write its learning curve, summary and model.
    Train(TrainArgs),
    /// Evaluate a saved model or a baseline agent.
    Eval(EvalArgs),
    /// Print graph statistics for one or more scenarios.
    Stats(StatsArgs),
    /// Write a scenario graph as DOT or JSON.
    Export(ExportArgs),
    /// Serve the NDJSON agent protocol on stdio or TCP.
    Serve(ServeArgs),
    /// Train on each scenario and evaluate on every other one.
    GenMatrix(MatrixArgs),
    /// Re-run an episode log and check it reproduces exactly.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SourceArgs {
    /// Scenario annotation file (JSON).
    #[arg(long, value_name = "PATH", conflicts_with = "builtin")]
    pub scenario: Option<PathBuf>,
    /// Use the bundled scenario (the default when --scenario is absent).
    #[arg(long)]
    pub builtin: bool,
    /// Hint file (JSONL); replaces the bundled hints.
    #[arg(long, value_name = "PATH")]
    pub hints: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GameArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Number of choices per turn.
    #[arg(long, default_value_t = 2)]
    pub choices: usize,
    /// Show a hint for the correct action.
    #[arg(long)]
    pub handicap: bool,
    /// Nodes to step back after a wrong choice.
    #[arg(long, default_value_t = 1)]
    pub back_hop: u32,
    /// Minimum hop distance of wrong choices (defaults to the scenario's).
    #[arg(long)]
    pub neg_distance: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AgentArg {
    Random,
    Oracle,
    Tabq,
    Dqn,
    Reinforce,
}

impl From<AgentArg> for AgentKind {
    fn from(a: AgentArg) -> Self {
        match a {
            AgentArg::Random => AgentKind::Random,
            AgentArg::Oracle => AgentKind::Oracle,
            AgentArg::Tabq => AgentKind::Tabq,
            AgentArg::Dqn => AgentKind::Dqn,
            AgentArg::Reinforce => AgentKind::Reinforce,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct LearnerArgs {
    #[arg(long, value_enum, default_value_t = AgentArg::Dqn)]
    pub agent: AgentArg,
    /// Agent hyperparameters as JSON; unset fields keep their defaults.
    #[arg(long, value_name = "PATH")]
    pub agent_config: Option<PathBuf>,
    /// Embedding table (JSONL) used instead of hashed features.
    #[arg(long, value_name = "PATH")]
    pub embeddings: Option<PathBuf>,
    /// Threads for evaluation and for non-learning agents.
    #[arg(long, default_value_t = 1)]
    pub workers: usize,
}

#[derive(Debug, Args)]
pub struct PlayArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Write the episode log (JSONL) here when the game ends.
    #[arg(long, value_name = "PATH")]
    pub transcript: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    /// Output directory for curve.csv, summary.json and model.json.
    #[arg(long, value_name = "DIR", default_value = "run")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub game: GameArgs,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// model.json written by `train`; overrides --agent.
    #[arg(long, value_name = "PATH")]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub episodes: usize,
    /// Also write the summary JSON to this directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Directory of scenario files; every *.json inside is reported.
    #[arg(long, value_name = "DIR", conflicts_with_all = ["scenario", "builtin"])]
    pub corpus: Option<PathBuf>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Graphviz DOT output.
    #[arg(long, conflicts_with = "json")]
    pub dot: bool,
    /// Node and edge JSON output.
    #[arg(long)]
    pub json: bool,
    /// Export the compact cluster graph instead (DOT only).
    #[arg(long, conflicts_with = "json")]
    pub compact: bool,
    /// Output file; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Listen on this address instead of stdio.
    #[arg(long, value_name = "ADDR")]
    pub tcp: Option<String>,
    /// Stop after this many TCP connections.
    #[arg(long, requires = "tcp")]
    pub max_connections: Option<usize>,
    /// Session id echoed in every message.
    #[arg(long, default_value = "")]
    pub session: String,
}

#[derive(Debug, Args)]
pub struct MatrixArgs {
    /// Directory of scenario files.
    #[arg(long, value_name = "DIR")]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub choices: usize,
    #[arg(long, default_value_t = 1)]
    pub back_hop: u32,
    #[arg(long)]
    pub neg_distance: Option<u32>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub learner: LearnerArgs,
    /// Training episodes per scenario.
    #[arg(long, default_value_t = 1000)]
    pub episodes: usize,
    /// Output CSV; stdout when absent.
    #[arg(long, value_name = "PATH")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    #[command(flatten)]
    pub source: SourceArgs,
    /// Episode log written by `play --transcript` or the server.
    pub log: PathBuf,
}
