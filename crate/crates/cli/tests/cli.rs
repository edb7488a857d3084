use std::io::Write;
use std::path::Path;
use std::process::{Command, Output, Stdio};
use std::sync::Arc;

use scriptworld::{Game, GameConfig, World};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_scriptworld"))
}

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Answers (1-based) that a player choosing by `pick` would type, computed
/// against an in-process game with the same configuration.
fn answers(cfg: GameConfig, pick: impl Fn(usize, usize) -> usize) -> String {
    let (mut game, mut obs) = Game::new(Arc::new(World::builtin()), cfg).unwrap();
    let mut input = String::new();
    loop {
        let a = pick(obs.correct_index.unwrap(), obs.choices.len());
        input.push_str(&format!("{}\n", a + 1));
        let r = game.step(a).unwrap();
        match r.next_observation {
            Some(next) if !r.done => obs = next,
            _ => return input,
        }
    }
}

fn play_cfg(seed: u64) -> GameConfig {
    GameConfig {
        num_choices: 2,
        handicap: true,
        seed,
        ..GameConfig::default()
    }
}

#[test]
fn perfect_play_scores_ten() {
    let input = answers(play_cfg(7), |correct, _| correct);
    let o = run(&["play", "--builtin", "--choices", "2", "--handicap", "--seed", "7"], &input);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(out.lines().last(), Some("score: 10"));
    assert!(out.contains("hint: "));
}

#[test]
fn five_wrong_entries_end_the_game() {
    let input = answers(play_cfg(2), |correct, n| (correct + 1) % n);
    assert_eq!(input.lines().count(), 5);
    let o = run(&["play", "--handicap", "--seed", "2"], &input);
    let out = stdout(&o);
    assert!(out.contains("end: TooManyWrong"));
    assert_eq!(out.lines().last(), Some("score: -5"));
}

#[test]
fn non_numeric_input_reprompts() {
    let clean = answers(play_cfg(7), |correct, _| correct);
    let noisy: String = clean.lines().map(|l| format!("go\n0\n99\n{l}\n")).collect();
    let a = run(&["play", "--handicap", "--seed", "7"], &clean);
    let b = run(&["play", "--handicap", "--seed", "7"], &noisy);
    assert_eq!(stdout(&b).lines().last(), Some("score: 10"));
    let reprompts = stdout(&b).matches("enter a number from 1 to 2").count();
    assert_eq!(reprompts, 3 * clean.lines().count());
    assert_eq!(stdout(&a).lines().filter(|l| l.starts_with("reward")).collect::<Vec<_>>(),
               stdout(&b).lines().filter(|l| l.starts_with("reward")).collect::<Vec<_>>());
}

#[test]
fn transcript_replays() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("game.jsonl");
    let input = answers(play_cfg(11), |correct, n| if correct == 0 { n - 1 } else { correct });
    let o = run(&["play", "--handicap", "--seed", "11", "--transcript", log.to_str().unwrap()], &input);
    assert!(o.status.success());
    let r = run(&["replay", log.to_str().unwrap()], "");
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let text = std::fs::read_to_string(&log).unwrap();
    let tampered = text.replacen("\"action\":", "\"action\":1,\"x\":", 1);
    std::fs::write(&log, tampered).unwrap();
    assert_eq!(run(&["replay", log.to_str().unwrap()], "").status.code(), Some(1));
}

#[test]
fn stats_match_graph_values() {
    let o = run(&["stats", "--builtin", "--json"], "");
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let world = World::builtin();
    let expected = scriptworld::graph::stats(&world.graph);
    let got = &v["scenarios"][0]["stats"];
    assert_eq!(got["node_count"], expected.node_count);
    assert_eq!(got["avg_degree"], expected.avg_degree);
    assert_eq!(got["total_paths"], expected.total_paths.to_string());
    let table = stdout(&run(&["stats", "--builtin"], ""));
    assert!(table.contains(&format!("nodes {}", expected.node_count)));
    assert!(table.contains(&format!("total paths {}", expected.total_paths)));
}

#[test]
fn tabular_training_reaches_the_goal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let args = [
        "train", "--agent", "tabq", "--builtin", "--choices", "2", "--handicap", "--episodes", "2000", "--seed", "1",
        "--out", out.to_str().unwrap(),
    ];
    let o = run(&args, "");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    let scores: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(scores.len(), 2000);
    let last: f64 = scores[scores.len() - 100..].iter().sum::<f64>() / 100.0;
    assert!(last >= 9.0, "last-100 mean {last}");

    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 1);
    assert_eq!(summary["engine_version"], scriptworld::engine::ENGINE_VERSION);

    // Same seed, same files.
    let again = dir.path().join("again");
    let mut args2 = args.to_vec();
    *args2.last_mut().unwrap() = again.to_str().unwrap();
    assert!(run(&args2, "").status.success());
    for f in ["curve.csv", "summary.json", "model.json"] {
        assert_eq!(read(&out.join(f)), read(&again.join(f)), "{f}");
    }

    let model = out.join("model.json");
    let e = run(&["eval", "--model", model.to_str().unwrap(), "--handicap", "--seed", "1", "--workers", "3"], "");
    assert_eq!(stdout(&e).trim(), "mean: 10.000 sd: 0.000 episodes: 100");
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn dot_export_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.dot");
    let b = dir.path().join("b.dot");
    assert!(run(&["export", "--dot", "--builtin", "--out", a.to_str().unwrap()], "").status.success());
    assert!(run(&["export", "--dot", "--builtin", "--out", b.to_str().unwrap()], "").status.success());
    assert_eq!(read(&a), read(&b));
    assert!(String::from_utf8(read(&a)).unwrap().starts_with("digraph"));
}

#[test]
fn random_eval_ignores_worker_count() {
    let one = run(&["eval", "--agent", "random", "--episodes", "300", "--workers", "1"], "");
    let four = run(&["eval", "--agent", "random", "--episodes", "300", "--workers", "4"], "");
    assert_eq!(stdout(&one), stdout(&four));
}

#[test]
fn serve_speaks_ndjson_on_stdio() {
    let o = run(&["serve", "--session", "s1"], "{\"type\":\"hello\"}\nnot json\n{\"type\":\"bye\"}\n");
    let kinds: Vec<String> = stdout(&o)
        .lines()
        .map(|l| {
            let v: serde_json::Value = serde_json::from_str(l).unwrap();
            assert_eq!(v["session"], "s1");
            v["type"].as_str().unwrap().to_string()
        })
        .collect();
    assert_eq!(kinds, ["hello", "error", "bye"]);
}

#[test]
fn bad_flags_exit_with_two() {
    for args in [&["play", "--bogus"][..], &["train", "--agent", "ppo"], &["play", "--choices", "many"], &["stats", "--builtin", "--scenario", "x.json"]] {
        assert_eq!(run(args, "").status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_failures_exit_with_one() {
    let o = run(&["stats", "--scenario", "/nonexistent.json"], "");
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).starts_with("error: "));
    assert_eq!(run(&["play", "--choices", "1"], "").status.code(), Some(1));
}

#[test]
fn every_subcommand_documents_its_flags() {
    for (sub, flags) in [
        ("play", &["--scenario", "--builtin", "--choices", "--handicap", "--hints", "--back-hop", "--neg-distance", "--seed", "--transcript"][..]),
        ("train", &["--agent", "--episodes", "--embeddings", "--out", "--workers"]),
        ("eval", &["--model", "--workers"]),
        ("serve", &["--tcp"]),
        ("gen-matrix", &["--corpus", "--agent"]),
    ] {
        let help = stdout(&run(&[sub, "--help"], ""));
        for f in flags {
            assert!(help.contains(f), "{sub} --help lacks {f}");
        }
    }
}

#[test]
fn gen_matrix_writes_a_square_csv() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for name in ["first", "second"] {
        let mut s = scriptworld::corpus::builtin_scenario();
        s.title = name.to_string();
        std::fs::write(corpus.join(format!("{name}.json")), s.to_json()).unwrap();
    }
    std::fs::write(corpus.join("notes.txt"), "ignored").unwrap();
    let out = dir.path().join("m.csv");
    let o = run(
        &["gen-matrix", "--corpus", corpus.to_str().unwrap(), "--agent", "tabq", "--episodes", "300", "--out", out.to_str().unwrap()],
        "",
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "train\\eval,first,second");
    assert_eq!(rows.len(), 3);
    assert!(rows[1].starts_with("first,") && rows[2].starts_with("second,"));
}
