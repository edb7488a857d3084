use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::mpsc::{channel, Receiver, Sender};
use std::sync::Arc;

use proptest::prelude::*;
use scriptworld::protocol::{serve, serve_tcp, MessageType, ServeOptions, WireMessage};
use scriptworld::{GameRng, World};
use serde_json::{json, Value};

/// Byte pipe between threads; reads block until the writer sends or drops.
struct PipeReader {
    rx: Receiver<Vec<u8>>,
    buf: Vec<u8>,
    pos: usize,
}

impl Read for PipeReader {
    fn read(&mut self, out: &mut [u8]) -> std::io::Result<usize> {
        if self.pos == self.buf.len() {
            match self.rx.recv() {
                Ok(chunk) => {
                    self.buf = chunk;
                    self.pos = 0;
                }
                Err(_) => return Ok(0),
            }
        }
        let n = out.len().min(self.buf.len() - self.pos);
        out[..n].copy_from_slice(&self.buf[self.pos..self.pos + n]);
        self.pos += n;
        Ok(n)
    }
}

struct PipeWriter(Sender<Vec<u8>>);

impl Write for PipeWriter {
    fn write(&mut self, data: &[u8]) -> std::io::Result<usize> {
        self.0
            .send(data.to_vec())
            .map_err(|_| std::io::Error::from(std::io::ErrorKind::BrokenPipe))?;
        Ok(data.len())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

fn pipe() -> (PipeWriter, BufReader<PipeReader>) {
    let (tx, rx) = channel();
    (
        PipeWriter(tx),
        BufReader::new(PipeReader {
            rx,
            buf: Vec::new(),
            pos: 0,
        }),
    )
}

struct Client<R: BufRead, W: Write> {
    reader: R,
    writer: W,
    traffic: String,
}

impl<R: BufRead, W: Write> Client<R, W> {
    fn send(&mut self, kind: &str, seq: u64, payload: Value) {
        let line = json!({"type": kind, "session": "", "seq": seq, "payload": payload}).to_string();
        writeln!(self.writer, "{line}").unwrap();
        self.writer.flush().unwrap();
    }

    fn recv(&mut self) -> WireMessage {
        let mut line = String::new();
        self.reader.read_line(&mut line).unwrap();
        self.traffic.push_str(&line);
        serde_json::from_str(&line).unwrap()
    }

    /// Plays random actions for `episodes` episodes; returns the per-episode
    /// (summed step rewards, reported score).
    fn play(&mut self, episodes: usize, seed: u64) -> Vec<(i64, i64)> {
        let mut rng = GameRng::new(seed);
        let mut out = Vec::new();
        self.send("hello", 0, json!({}));
        assert_eq!(self.recv().kind, MessageType::Hello);
        self.send("configure", 0, json!({"num_choices": 3, "seed": seed}));
        assert_eq!(self.recv().kind, MessageType::Configure);
        for _ in 0..episodes {
            self.send("reset", 0, json!({}));
            let mut obs = self.recv();
            let mut sum = 0i64;
            loop {
                assert_eq!(obs.kind, MessageType::Observation);
                let n = obs.payload["choices"].as_array().unwrap().len();
                self.send("action", obs.seq, json!({"index": rng.index(n)}));
                let result = self.recv();
                assert_eq!(result.kind, MessageType::StepResult);
                sum += result.payload["reward"].as_i64().unwrap();
                let next = self.recv();
                if next.kind == MessageType::EpisodeEnd {
                    out.push((sum, next.payload["score"].as_i64().unwrap()));
                    break;
                }
                obs = next;
            }
        }
        self.send("bye", 0, json!({}));
        assert_eq!(self.recv().kind, MessageType::Bye);
        out
    }
}

#[test]
fn scripted_random_client_over_pipes() {
    let world = Arc::new(World::builtin());
    let (to_server, server_in) = pipe();
    let (server_out, from_server) = pipe();
    let server = std::thread::spawn(move || serve(&world, server_in, server_out, &ServeOptions::default()).unwrap());
    let mut client = Client {
        reader: from_server,
        writer: to_server,
        traffic: String::new(),
    };
    let results = client.play(3, 5);
    let summary = server.join().unwrap();

    assert_eq!(results.len(), 3);
    assert_eq!(summary.episodes.len(), 3);
    for ((sum, score), log) in results.iter().zip(&summary.episodes) {
        assert_eq!(sum, score);
        assert_eq!(*score, log.total_reward());
    }
    assert!(!client.traffic.contains("correct"));
    let seqs: Vec<u64> = client
        .traffic
        .lines()
        .map(|l| serde_json::from_str::<WireMessage>(l).unwrap().seq)
        .collect();
    assert!(seqs.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn tcp_sessions_run_concurrently() {
    let world = Arc::new(World::builtin());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || serve_tcp(world, listener, Some(2)));
    let clients: Vec<_> = (0..2)
        .map(|i| {
            std::thread::spawn(move || {
                let stream = TcpStream::connect(addr).unwrap();
                let mut c = Client {
                    reader: BufReader::new(stream.try_clone().unwrap()),
                    writer: stream,
                    traffic: String::new(),
                };
                c.play(2, i)
            })
        })
        .collect();
    for c in clients {
        let results = c.join().unwrap();
        assert!(results.iter().all(|(sum, score)| sum == score));
    }
    server.join().unwrap().unwrap();
}

#[test]
fn bad_index_keeps_the_session() {
    let world = Arc::new(World::builtin());
    let input = concat!(
        "{\"type\":\"hello\"}\n",
        "{\"type\":\"configure\",\"payload\":{\"num_choices\":2}}\n",
        "{\"type\":\"reset\"}\n",
        "{\"type\":\"action\",\"seq\":3,\"payload\":{\"index\":7}}\n",
        "{\"type\":\"action\",\"seq\":3,\"payload\":{\"index\":0}}\n",
    );
    let mut out = Vec::new();
    serve(&world, input.as_bytes(), &mut out, &ServeOptions::default()).unwrap();
    let msgs: Vec<WireMessage> = String::from_utf8(out)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(msgs[3].kind, MessageType::Error);
    assert_eq!(msgs[3].payload["code"], "BAD_INDEX");
    assert_eq!(msgs[4].kind, MessageType::StepResult);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn byte_noise_never_crashes(noise in proptest::collection::vec(any::<u8>(), 0..400)) {
        let world = Arc::new(World::builtin());
        let mut out = Vec::new();
        serve(&world, noise.as_slice(), &mut out, &ServeOptions::default()).unwrap();
        let expected = noise
            .split(|&b| b == b'\n')
            .filter(|l| std::str::from_utf8(l).map_or(true, |s| !s.trim().is_empty()))
            .count();
        let replies: Vec<WireMessage> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        prop_assert_eq!(replies.len(), expected);
    }
}
