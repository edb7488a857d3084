use std::io::{self, BufRead, Write};

use anyhow::{bail, Context, Result};
use scriptworld::{EndReason, Game, Observation};

use crate::args::PlayArgs;
use crate::commands::{game_config, load_world};

fn render(out: &mut impl Write, obs: &Observation) -> io::Result<()> {
    writeln!(out)?;
    writeln!(out, "{}", obs.quest)?;
    if let Some(hint) = &obs.hint {
        writeln!(out, "hint: {hint}")?;
    }
    for (i, choice) in obs.choices.iter().enumerate() {
        writeln!(out, "  {}. {choice}", i + 1)?;
    }
    Ok(())
}

/// Reads lines until one parses as a choice number in `1..=n`.
fn read_choice(input: &mut impl BufRead, out: &mut impl Write, n: usize) -> Result<usize> {
    loop {
        write!(out, "> ")?;
        out.flush()?;
        let mut line = String::new();
        if input.read_line(&mut line)? == 0 {
            bail!("input closed before the game ended");
        }
        match line.trim().parse::<usize>() {
            Ok(k) if (1..=n).contains(&k) => return Ok(k - 1),
            _ => writeln!(out, "enter a number from 1 to {n}")?,
        }
    }
}

pub fn run(args: &PlayArgs) -> Result<()> {
    let world = load_world(&args.game.source)?;
    let (mut game, mut obs) = Game::new(world, game_config(&args.game))?;
    let stdin = io::stdin();
    let mut input = stdin.lock();
    let stdout = io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "{}", game.world().scenario.title)?;
    let reason = loop {
        render(&mut out, &obs)?;
        let action = read_choice(&mut input, &mut out, obs.choices.len())?;
        let r = game.step(action)?;
        writeln!(out, "reward: {}  score: {}", r.reward, game.state().cumulative_reward)?;
        match r.next_observation {
            Some(next) if !r.done => obs = next,
            _ => break r.reason,
        }
    };
    let verdict = match reason {
        EndReason::GoalReached => "goal reached",
        EndReason::TooManyWrong => "too many wrong choices in a row",
        EndReason::StepCapExceeded => "step limit reached",
        EndReason::InProgress => "unfinished",
    };
    writeln!(out, "end: {} ({verdict})", reason.as_str())?;
    writeln!(out, "score: {}", game.state().cumulative_reward)?;
    if let Some(path) = &args.transcript {
        std::fs::write(path, game.transcript().to_jsonl()).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}
