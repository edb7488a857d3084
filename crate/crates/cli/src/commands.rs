use std::fs;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use scriptworld::agents::{
    cross_eval, run_parallel, train as train_agent, train_frozen, AgentConfig, AgentKind, EnvFactory, EvalSummary,
    EVAL_OFFSET,
};
use scriptworld::engine::ENGINE_VERSION;
use scriptworld::features::{load_embeddings, Featurizer};
use scriptworld::graph::{dump_json, export_dot};
use scriptworld::protocol::{replay_file, serve_stdio, serve_tcp, ServeOptions};
use scriptworld::report::{environment_stats, format_table, scenario_report};
use scriptworld::{load_hints, load_scenario, GameConfig, World};
use serde_json::json;

use crate::args::{EvalArgs, ExportArgs, GameArgs, LearnerArgs, MatrixArgs, ReplayArgs, ServeArgs, SourceArgs, StatsArgs, TrainArgs};

pub fn load_world(source: &SourceArgs) -> Result<Arc<World>> {
    let mut world = match &source.scenario {
        Some(path) => {
            let s = load_scenario(path).with_context(|| format!("loading {}", path.display()))?;
            World::new(s)?
        }
        None => World::builtin(),
    };
    if let Some(path) = &source.hints {
        let hints = load_hints(path, &world.graph).with_context(|| format!("loading {}", path.display()))?;
        world = world.with_hints(hints);
    }
    Ok(Arc::new(world))
}

/// Every `*.json` file in `dir`, in file-name order.
fn load_corpus(dir: &Path) -> Result<Vec<Arc<World>>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e == "json"));
    paths.sort();
    if paths.is_empty() {
        bail!("no scenario files in {}", dir.display());
    }
    paths
        .iter()
        .map(|p| {
            let s = load_scenario(p).with_context(|| format!("loading {}", p.display()))?;
            Ok(Arc::new(World::new(s).with_context(|| format!("building {}", p.display()))?))
        })
        .collect()
}

pub fn game_config(g: &GameArgs) -> GameConfig {
    GameConfig {
        num_choices: g.choices,
        back_hop: g.back_hop,
        handicap: g.handicap,
        neg_distance: g.neg_distance,
        seed: g.seed,
        ..GameConfig::default()
    }
}

fn agent_config(l: &LearnerArgs, seed: u64) -> Result<AgentConfig> {
    let mut cfg: AgentConfig = match &l.agent_config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => AgentConfig::default(),
    };
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

fn featurizer(l: &LearnerArgs, cfg: &AgentConfig) -> Result<Featurizer> {
    Ok(match &l.embeddings {
        Some(path) => {
            let table = load_embeddings(path).with_context(|| format!("loading {}", path.display()))?;
            Featurizer::with_table(table, cfg.include_hint)
        }
        None => Featurizer::hashed(cfg.feature_dim, cfg.include_hint),
    })
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let world = load_world(&args.game.source)?;
    let game = game_config(&args.game);
    let env = EnvFactory::new(world, game.clone());
    let cfg = agent_config(&args.learner, args.game.seed)?;
    let kind = AgentKind::from(args.learner.agent);
    let clock = Instant::now();
    let (report, snapshot) = if matches!(kind, AgentKind::Random | AgentKind::Oracle) {
        (train_frozen(kind, &env, &cfg, args.episodes, args.learner.workers)?, None)
    } else {
        let mut agent = kind.build(&cfg, featurizer(&args.learner, &cfg)?)?;
        let report = train_agent(agent.as_mut(), &env, &cfg, args.episodes)?;
        (report, agent.snapshot())
    };
    write(&args.out.join("curve.csv"), &report.to_csv())?;
    write(&args.out.join("summary.json"), &pretty(&report.summary_json(&game, &cfg)))?;
    if let Some(snapshot) = snapshot {
        let model = json!({
            "engine_version": ENGINE_VERSION,
            "agent": kind,
            "agent_config": cfg,
            "snapshot": snapshot,
        });
        write(&args.out.join("model.json"), &pretty(&model))?;
    }
    say!("agent: {}", report.agent);
    say!("episodes: {}", report.scores.len());
    say!("last {} mean: {:.3}", report.window, report.last_mean(report.window));
    say!("coverage: {:.1}%", report.coverage_pct.last().copied().unwrap_or(0.0));
    say!("eval mean: {:.3} sd: {:.3} over {}", report.eval.mean, report.eval.sd, report.eval.episodes);
    eprintln!("wall clock: {:.2}s, output in {}", clock.elapsed().as_secs_f64(), args.out.display());
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<()> {
    let world = load_world(&args.game.source)?;
    let game = game_config(&args.game);
    let env = EnvFactory::new(world, game.clone());
    let (kind, cfg, snapshot) = match &args.model {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let model: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let kind: AgentKind = serde_json::from_value(model["agent"].clone()).context("model has no valid agent field")?;
            let cfg: AgentConfig =
                serde_json::from_value(model["agent_config"].clone()).context("model has no valid agent_config")?;
            (kind, cfg, Some(model["snapshot"].clone()))
        }
        None => {
            let kind = AgentKind::from(args.learner.agent);
            if !matches!(kind, AgentKind::Random | AgentKind::Oracle) {
                bail!("evaluating a learning agent needs --model");
            }
            (kind, agent_config(&args.learner, args.game.seed)?, None)
        }
    };
    let feat = featurizer(&args.learner, &cfg)?;
    let make = || match &snapshot {
        Some(s) => kind.restore(&cfg, feat.clone(), s),
        None => kind.build(&cfg, feat.clone()),
    };
    let scores: Vec<i64> = run_parallel(make, &env, EVAL_OFFSET, args.episodes, args.learner.workers)?
        .into_iter()
        .map(|o| o.score)
        .collect();
    let summary = EvalSummary::from_scores(&scores);
    say!("mean: {:.3} sd: {:.3} episodes: {}", summary.mean, summary.sd, summary.episodes);
    if let Some(dir) = &args.out {
        let out = json!({
            "engine_version": ENGINE_VERSION,
            "agent": kind,
            "seed": game.seed,
            "game_config": game,
            "agent_config": cfg,
            "eval": summary,
        });
        write(&dir.join("eval.json"), &pretty(&out))?;
    }
    Ok(())
}

pub fn stats(args: &StatsArgs) -> Result<()> {
    let worlds = match &args.corpus {
        Some(dir) => load_corpus(dir)?,
        None => vec![load_world(&args.source)?],
    };
    let reports: Vec<_> = worlds.iter().map(|w| scenario_report(&w.scenario, &w.compact, &w.graph)).collect();
    let graphs: Vec<_> = worlds.iter().map(|w| &w.graph).collect();
    let env = environment_stats(&graphs);
    if args.json {
        say!("{}", pretty(&json!({"scenarios": reports, "environment": env})).trim_end());
        return Ok(());
    }
    say_raw!("{}", format_table(&reports));
    for r in &reports {
        say!(
            "{}: nodes {}, avg degree {:.4}, total paths {}",
            r.title, r.stats.node_count, r.stats.avg_degree, r.stats.total_paths
        );
    }
    say!(
        "environment: {} scenarios, vocabulary {}, {:.2} words per text, {:.1} states on average",
        env.scenarios, env.vocabulary_size, env.avg_words_per_observation, env.avg_states
    );
    Ok(())
}

pub fn export(args: &ExportArgs) -> Result<()> {
    let world = load_world(&args.source)?;
    let text = if args.json {
        dump_json(&world.graph, &world.scenario.title)
    } else if args.compact {
        export_dot(&world.compact)
    } else {
        export_dot(&world.graph)
    };
    match &args.out {
        Some(path) => write(path, &text),
        None => {
            say_raw!("{text}");
            Ok(())
        }
    }
}

pub fn serve(args: &ServeArgs) -> Result<()> {
    let world = load_world(&args.source)?;
    match &args.tcp {
        Some(addr) => {
            let listener = TcpListener::bind(addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            serve_tcp(world, listener, args.max_connections)?;
        }
        None => {
            let opts = ServeOptions {
                session: args.session.clone(),
            };
            let summary = serve_stdio(&world, &opts)?;
            eprintln!("session closed: {} episodes, {} errors", summary.episodes.len(), summary.errors);
        }
    }
    Ok(())
}

pub fn gen_matrix(args: &MatrixArgs) -> Result<()> {
    let worlds = load_corpus(&args.corpus)?;
    let cfg = agent_config(&args.learner, args.seed)?;
    let kind = AgentKind::from(args.learner.agent);
    let feat = featurizer(&args.learner, &cfg)?;
    let game = GameConfig {
        num_choices: args.choices,
        back_hop: args.back_hop,
        neg_distance: args.neg_distance,
        seed: args.seed,
        ..GameConfig::default()
    };
    let envs: Vec<(String, EnvFactory)> = worlds
        .into_iter()
        .map(|w| (w.scenario.title.clone(), EnvFactory::new(w, game.clone())))
        .collect();
    let mut agents = Vec::with_capacity(envs.len());
    for (name, env) in &envs {
        let mut agent = kind.build(&cfg, feat.clone())?;
        let report = train_agent(agent.as_mut(), env, &cfg, args.episodes)?;
        eprintln!("trained on {name}: eval mean {:.3}", report.eval.mean);
        agents.push(agent);
    }
    let matrix = cross_eval(&mut agents, &envs, cfg.eval_episodes)?;
    match &args.out {
        Some(path) => write(path, &matrix.to_csv()),
        None => {
            say_raw!("{}", matrix.to_csv());
            Ok(())
        }
    }
}

pub fn replay(args: &ReplayArgs) -> Result<()> {
    let world = load_world(&args.source)?;
    replay_file(&args.log, &world).with_context(|| format!("replaying {}", args.log.display()))?;
    say!("replay ok: {}", args.log.display());
    Ok(())
}
