//! Newline-delimited JSON bridge for agents running in another process.
//!
//! Every line is one message `{"type", "session", "seq", "payload"}`. The
//! server numbers its own messages with a strictly increasing `seq`; an
//! `action` must carry the `seq` of the observation it answers.
//!
//! ```text
//! hello -> configure -> (reset -> observation -> action -> step_result
//!                        -> ... -> episode_end)* -> bye
//! ```
//!
//! Malformed or out-of-order input is answered with an `error` message whose
//! payload holds a machine-readable `code`; the session stays open.

use std::io::{self, BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::{EngineError, EpisodeLog, Game, GameConfig, LogHeader, Observation, World, ENGINE_VERSION};

pub const PROTOCOL_VERSION: &str = "scriptworld-wire/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageType {
    Hello,
    Configure,
    Reset,
    Observation,
    Action,
    StepResult,
    EpisodeEnd,
    Error,
    Bye,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    #[serde(rename = "type")]
    pub kind: MessageType,
    #[serde(default)]
    pub session: String,
    #[serde(default)]
    pub seq: u64,
    #[serde(default)]
    pub payload: Value,
}

impl WireMessage {
    pub fn new(kind: MessageType, payload: Value) -> Self {
        WireMessage {
            kind,
            session: String::new(),
            seq: 0,
            payload,
        }
    }

    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("message serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    BadJson,
    BadState,
    BadIndex,
    BadConfig,
}

#[derive(Debug, Clone, Default)]
pub struct ServeOptions {
    pub session: String,
}

/// What a finished session produced.
#[derive(Debug, Clone, Default)]
pub struct SessionSummary {
    pub episodes: Vec<EpisodeLog>,
    pub errors: usize,
    pub said_bye: bool,
}

enum Phase {
    AwaitHello,
    AwaitConfigure,
    Ready,
    Playing { game: Box<Game>, obs_seq: u64 },
}

struct Session<'a, W: Write> {
    world: &'a Arc<World>,
    out: W,
    id: String,
    seq: u64,
    cfg: GameConfig,
    episode: u64,
    phase: Phase,
    summary: SessionSummary,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ResetPayload {
    #[serde(default)]
    seed: Option<u64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionPayload {
    index: usize,
}

fn observation_payload(obs: &Observation) -> Value {
    serde_json::to_value(obs).expect("observation serializes")
}

impl<W: Write> Session<'_, W> {
    fn send(&mut self, kind: MessageType, payload: Value) -> io::Result<u64> {
        self.seq += 1;
        let msg = WireMessage {
            kind,
            session: self.id.clone(),
            seq: self.seq,
            payload,
        };
        self.out.write_all(msg.to_line().as_bytes())?;
        self.out.flush()?;
        Ok(self.seq)
    }

    fn error(&mut self, code: ErrorCode, message: impl Into<String>) -> io::Result<()> {
        self.summary.errors += 1;
        self.send(MessageType::Error, json!({"code": code, "message": message.into()}))?;
        Ok(())
    }

    fn send_observation(&mut self) -> io::Result<()> {
        let payload = match &self.phase {
            Phase::Playing { game, .. } => observation_payload(game.observation()),
            _ => return Ok(()),
        };
        let seq = self.send(MessageType::Observation, payload)?;
        if let Phase::Playing { obs_seq, .. } = &mut self.phase {
            *obs_seq = seq;
        }
        Ok(())
    }

    /// Handles one input line; returns `false` once the session is over.
    fn handle(&mut self, line: &[u8]) -> io::Result<bool> {
        let text = match std::str::from_utf8(line) {
            Ok(t) => t.trim(),
            Err(_) => {
                self.error(ErrorCode::BadJson, "input is not UTF-8")?;
                return Ok(true);
            }
        };
        if text.is_empty() {
            return Ok(true);
        }
        let msg: WireMessage = match serde_json::from_str(text) {
            Ok(m) => m,
            Err(e) => {
                self.error(ErrorCode::BadJson, e.to_string())?;
                return Ok(true);
            }
        };
        match (msg.kind, &self.phase) {
            (MessageType::Bye, _) => {
                self.send(MessageType::Bye, json!({}))?;
                self.summary.said_bye = true;
                return Ok(false);
            }
            (MessageType::Hello, Phase::AwaitHello) => {
                self.phase = Phase::AwaitConfigure;
                self.send(
                    MessageType::Hello,
                    json!({
                        "protocol": PROTOCOL_VERSION,
                        "engine": ENGINE_VERSION,
                        "scenario": self.world.scenario.title,
                        "hints": self.world.hints.is_some(),
                    }),
                )?;
            }
            (MessageType::Configure, Phase::AwaitConfigure | Phase::Ready) => self.configure(msg.payload)?,
            (MessageType::Reset, Phase::Ready | Phase::Playing { .. }) => self.reset(msg.payload)?,
            (MessageType::Action, Phase::Playing { obs_seq, .. }) => {
                if msg.seq != *obs_seq {
                    let expected = *obs_seq;
                    self.error(
                        ErrorCode::BadState,
                        format!("action answers seq {} but the latest observation is {expected}", msg.seq),
                    )?;
                    self.send_observation()?;
                } else {
                    self.act(msg.payload)?;
                }
            }
            (kind, _) => {
                let state = match self.phase {
                    Phase::AwaitHello => "awaiting hello",
                    Phase::AwaitConfigure => "awaiting configure",
                    Phase::Ready => "awaiting reset",
                    Phase::Playing { .. } => "awaiting action",
                };
                self.error(ErrorCode::BadState, format!("unexpected {kind:?} while {state}"))?;
            }
        }
        Ok(true)
    }

    fn configure(&mut self, payload: Value) -> io::Result<()> {
        let payload = if payload.is_null() { json!({}) } else { payload };
        let cfg: GameConfig = match serde_json::from_value(payload) {
            Ok(c) => c,
            Err(e) => return self.error(ErrorCode::BadConfig, e.to_string()),
        };
        let check = cfg.validate().and_then(|_| {
            if cfg.handicap && self.world.hints.is_none() {
                return Err(EngineError::Config("handicap mode needs a hint store".into()));
            }
            let d = cfg.neg_distance.unwrap_or(self.world.scenario.neg_distance);
            self.world.check_sampling(cfg.num_choices, d, cfg.distance_space)
        });
        if let Err(e) = check {
            return self.error(ErrorCode::BadConfig, e.to_string());
        }
        self.cfg = cfg;
        self.phase = Phase::Ready;
        let echo = serde_json::to_value(&self.cfg).expect("config serializes");
        self.send(MessageType::Configure, echo)?;
        Ok(())
    }

    fn reset(&mut self, payload: Value) -> io::Result<()> {
        let payload = if payload.is_null() { json!({}) } else { payload };
        let reset: ResetPayload = match serde_json::from_value(payload) {
            Ok(r) => r,
            Err(e) => return self.error(ErrorCode::BadJson, e.to_string()),
        };
        let cfg = GameConfig {
            seed: reset.seed.unwrap_or_else(|| self.cfg.seed.wrapping_add(self.episode)),
            ..self.cfg.clone()
        };
        match Game::new(Arc::clone(self.world), cfg) {
            Ok((game, _)) => {
                self.episode += 1;
                self.phase = Phase::Playing { game: Box::new(game), obs_seq: 0 };
                self.send_observation()
            }
            Err(e) => self.error(ErrorCode::BadConfig, e.to_string()),
        }
    }

    fn act(&mut self, payload: Value) -> io::Result<()> {
        let action: ActionPayload = match serde_json::from_value(payload) {
            Ok(a) => a,
            Err(e) => return self.error(ErrorCode::BadJson, e.to_string()),
        };
        let Phase::Playing { game, .. } = &mut self.phase else {
            return Ok(());
        };
        let result = match game.step(action.index) {
            Ok(r) => r,
            Err(EngineError::OutOfRange { index, len }) => {
                return self.error(ErrorCode::BadIndex, format!("index {index} out of range for {len} choices"));
            }
            Err(e) => return self.error(ErrorCode::BadState, e.to_string()),
        };
        let state = game.state();
        let score = state.cumulative_reward;
        let steps = state.step_index;
        self.send(
            MessageType::StepResult,
            json!({
                "reward": result.reward,
                "done": result.done,
                "reason": result.reason,
                "score": score,
            }),
        )?;
        if result.done {
            let Phase::Playing { game, .. } = std::mem::replace(&mut self.phase, Phase::Ready) else {
                unreachable!("phase checked above");
            };
            self.summary.episodes.push(game.transcript());
            self.send(
                MessageType::EpisodeEnd,
                json!({
                    "episode": self.episode - 1,
                    "score": score,
                    "steps": steps,
                    "reason": result.reason,
                }),
            )?;
        } else {
            self.send_observation()?;
        }
        Ok(())
    }
}

/// Runs one session over a line-oriented byte stream until `bye` or end of
/// input.
pub fn serve<R: BufRead, W: Write>(world: &Arc<World>, mut input: R, output: W, opts: &ServeOptions) -> io::Result<SessionSummary> {
    let mut session = Session {
        world,
        out: output,
        id: opts.session.clone(),
        seq: 0,
        cfg: GameConfig::default(),
        episode: 0,
        phase: Phase::AwaitHello,
        summary: SessionSummary::default(),
    };
    let mut line = Vec::new();
    loop {
        line.clear();
        if input.read_until(b'\n', &mut line)? == 0 {
            break;
        }
        if !session.handle(&line)? {
            break;
        }
    }
    Ok(session.summary)
}

pub fn serve_stdio(world: &Arc<World>, opts: &ServeOptions) -> io::Result<SessionSummary> {
    let stdin = io::stdin();
    let stdout = io::stdout();
    serve(world, stdin.lock(), stdout.lock(), opts)
}

/// Accepts connections on `listener`, one thread and one session per
/// connection. Stops after `max_connections` sessions when given.
pub fn serve_tcp(world: Arc<World>, listener: TcpListener, max_connections: Option<usize>) -> io::Result<()> {
    let mut handles = Vec::new();
    for (i, stream) in listener.incoming().enumerate() {
        let stream: TcpStream = stream?;
        let world = Arc::clone(&world);
        handles.push(std::thread::spawn(move || {
            let reader = BufReader::new(stream.try_clone()?);
            let opts = ServeOptions {
                session: format!("s{i}"),
            };
            serve(&world, reader, stream, &opts)
        }));
        if max_connections.is_some_and(|m| i + 1 >= m) {
            break;
        }
    }
    for h in handles {
        h.join().expect("session thread panicked")?;
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("log written by {found}, this engine is {expected}")]
    VersionMismatch { expected: String, found: String },
    #[error("log is for scenario {found:?}, loaded scenario is {expected:?}")]
    ScenarioMismatch { expected: String, found: String },
    #[error("transcript diverges at step {step}")]
    Mismatch { step: usize },
    #[error("engine: {0}")]
    Engine(#[from] EngineError),
}

#[derive(Deserialize)]
struct LoggedAction {
    action: usize,
}

/// Re-plays the logged actions with the logged configuration and checks the
/// regenerated transcript byte for byte.
pub fn replay(log: &str, world: &Arc<World>) -> Result<(), ReplayError> {
    let mut lines = log.lines();
    let header_line = lines.next().ok_or(ReplayError::Parse {
        line: 1,
        message: "empty log".into(),
    })?;
    let header: LogHeader = serde_json::from_str(header_line).map_err(|e| ReplayError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if header.version != ENGINE_VERSION {
        return Err(ReplayError::VersionMismatch {
            expected: ENGINE_VERSION.into(),
            found: header.version,
        });
    }
    if header.scenario != world.scenario.title {
        return Err(ReplayError::ScenarioMismatch {
            expected: world.scenario.title.clone(),
            found: header.scenario,
        });
    }
    let logged: Vec<&str> = lines.collect();
    let (mut game, _) = Game::new(Arc::clone(world), header.config.clone())?;
    for (step, raw) in logged.iter().enumerate() {
        let a: LoggedAction = serde_json::from_str(raw).map_err(|e| ReplayError::Parse {
            line: step + 2,
            message: e.to_string(),
        })?;
        if game.is_done() || game.step(a.action).is_err() {
            return Err(ReplayError::Mismatch { step });
        }
    }
    let regenerated = game.transcript().to_jsonl();
    let mut regen = regenerated.lines().skip(1);
    for (step, raw) in logged.iter().enumerate() {
        if regen.next() != Some(*raw) {
            return Err(ReplayError::Mismatch { step });
        }
    }
    if regen.next().is_some() || !game.is_done() {
        return Err(ReplayError::Mismatch { step: logged.len() });
    }
    Ok(())
}

pub fn replay_file(path: impl AsRef<Path>, world: &Arc<World>) -> Result<(), ReplayError> {
    replay(&std::fs::read_to_string(path)?, world)
}
