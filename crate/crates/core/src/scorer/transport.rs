//! Line-delimited JSON transports: a child process speaking the protocol
//! on stdin/stdout, or a TCP peer.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::process::{Child, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use super::{ScoreRequest, ScoreResponse, Scorer, ScorerError};

/// Where a scorer lives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Endpoint {
    /// The in-process n-gram scorer.
    Builtin,
    /// `cmd:<program> [args...]`, whitespace separated.
    Command(Vec<String>),
    /// `tcp:<host>:<port>`.
    Tcp(String),
}

impl Endpoint {
    pub fn parse(s: &str) -> Result<Endpoint, String> {
        let s = s.trim();
        if s == "builtin" {
            Ok(Endpoint::Builtin)
        } else if let Some(rest) = s.strip_prefix("cmd:") {
            let argv: Vec<String> = rest.split_whitespace().map(str::to_string).collect();
            if argv.is_empty() {
                return Err("empty command endpoint".into());
            }
            Ok(Endpoint::Command(argv))
        } else if let Some(addr) = s.strip_prefix("tcp:") {
            if !addr.contains(':') {
                return Err(format!("tcp endpoint {addr:?} lacks a port"));
            }
            Ok(Endpoint::Tcp(addr.to_string()))
        } else {
            Err(format!("unknown endpoint {s:?}; use builtin, cmd:... or tcp:host:port"))
        }
    }

    /// Opens a transport; `None` for [`Endpoint::Builtin`].
    pub fn connect(&self, timeout: Duration, window: usize) -> Result<Option<LineScorer>, ScorerError> {
        match self {
            Endpoint::Builtin => Ok(None),
            Endpoint::Command(argv) => LineScorer::spawn(&argv[0], &argv[1..], timeout, window).map(Some),
            Endpoint::Tcp(addr) => LineScorer::connect(addr, timeout, window).map(Some),
        }
    }
}

struct Conn {
    writer: Box<dyn Write + Send>,
    rx: Receiver<Result<String, String>>,
    child: Option<Child>,
}

/// A remote scorer. Keeps up to `window` requests in flight and matches
/// responses by `request_id`; each response must arrive within `timeout`.
pub struct LineScorer {
    conn: Mutex<Conn>,
    timeout: Duration,
    window: usize,
}

fn transport_err(request_id: u64, e: impl ToString) -> ScorerError {
    ScorerError::Transport {
        request_id,
        message: e.to_string(),
    }
}

fn reader_thread<R: Read + Send + 'static>(r: R) -> Receiver<Result<String, String>> {
    let (tx, rx) = mpsc::channel();
    thread::spawn(move || {
        let mut lines = BufReader::new(r).lines();
        loop {
            let msg = match lines.next() {
                Some(Ok(l)) => Ok(l),
                Some(Err(e)) => Err(e.to_string()),
                None => Err("connection closed".to_string()),
            };
            let stop = msg.is_err();
            if tx.send(msg).is_err() || stop {
                break;
            }
        }
    });
    rx
}

impl LineScorer {
    pub fn spawn(program: &str, args: &[String], timeout: Duration, window: usize) -> Result<Self, ScorerError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| transport_err(0, format!("spawning {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(LineScorer {
            conn: Mutex::new(Conn {
                writer: Box::new(stdin),
                rx: reader_thread(stdout),
                child: Some(child),
            }),
            timeout,
            window: window.max(1),
        })
    }

    pub fn connect(addr: &str, timeout: Duration, window: usize) -> Result<Self, ScorerError> {
        let stream = TcpStream::connect(addr).map_err(|e| transport_err(0, format!("{addr}: {e}")))?;
        let read_half = stream.try_clone().map_err(|e| transport_err(0, e))?;
        Ok(LineScorer {
            conn: Mutex::new(Conn {
                writer: Box::new(stream),
                rx: reader_thread(read_half),
                child: None,
            }),
            timeout,
            window: window.max(1),
        })
    }
}

impl Drop for LineScorer {
    fn drop(&mut self) {
        if let Ok(conn) = self.conn.get_mut() {
            if let Some(child) = conn.child.as_mut() {
                let _ = child.kill();
                let _ = child.wait();
            }
        }
    }
}

impl Scorer for LineScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        Ok(self.score_batch(std::slice::from_ref(request))?.remove(0))
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        let mut ids = HashSet::new();
        for r in requests {
            if !ids.insert(r.request_id) {
                return Err(ScorerError::Protocol(format!("duplicate request id {}", r.request_id)));
            }
        }
        let mut conn = self.conn.lock().map_err(|_| transport_err(0, "poisoned connection"))?;
        let mut done: HashMap<u64, ScoreResponse> = HashMap::new();
        let mut in_flight: HashSet<u64> = HashSet::new();
        let mut next = 0;
        while done.len() < requests.len() {
            while next < requests.len() && in_flight.len() < self.window {
                let req = &requests[next];
                let line = serde_json::to_string(req).map_err(|e| ScorerError::Protocol(e.to_string()))?;
                writeln!(conn.writer, "{line}")
                    .and_then(|_| conn.writer.flush())
                    .map_err(|e| transport_err(req.request_id, e))?;
                in_flight.insert(req.request_id);
                next += 1;
            }
            let oldest = *in_flight.iter().min().expect("a request is in flight");
            let line = match conn.rx.recv_timeout(self.timeout) {
                Ok(Ok(line)) => line,
                Ok(Err(e)) => return Err(transport_err(oldest, e)),
                Err(RecvTimeoutError::Timeout) => return Err(ScorerError::Timeout { request_id: oldest }),
                Err(RecvTimeoutError::Disconnected) => return Err(transport_err(oldest, "reader stopped")),
            };
            if line.trim().is_empty() {
                continue;
            }
            let resp: ScoreResponse = serde_json::from_str(&line)
                .map_err(|e| ScorerError::Protocol(format!("bad response {line:?}: {e}")))?;
            if !in_flight.remove(&resp.request_id) {
                return Err(ScorerError::Protocol(format!(
                    "unexpected response id {}",
                    resp.request_id
                )));
            }
            done.insert(resp.request_id, resp);
        }
        requests
            .iter()
            .map(|r| {
                let resp = done.remove(&r.request_id).expect("all responses collected");
                resp.validate(r)?;
                Ok(resp)
            })
            .collect()
    }
}

/// Answers protocol requests read from `input` until end of input, one
/// response line per request line. Malformed requests and scorer failures
/// become error responses. Returns the number of requests answered.
pub fn serve_lines<S, R, W>(scorer: &S, input: R, mut output: W) -> std::io::Result<usize>
where
    S: Scorer + ?Sized,
    R: BufRead,
    W: Write,
{
    let mut n = 0;
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let resp = match serde_json::from_str::<ScoreRequest>(&line) {
            Ok(req) => match scorer.score(&req) {
                Ok(r) => r,
                Err(e) => ScoreResponse {
                    request_id: req.request_id,
                    scores: vec![],
                    error: Some(e.to_string()),
                },
            },
            Err(e) => {
                let id = serde_json::from_str::<serde_json::Value>(&line)
                    .ok()
                    .and_then(|v| v.get("request_id")?.as_u64())
                    .unwrap_or(0);
                ScoreResponse {
                    request_id: id,
                    scores: vec![],
                    error: Some(format!("malformed request: {e}")),
                }
            }
        };
        let text = serde_json::to_string(&resp).map_err(std::io::Error::other)?;
        writeln!(output, "{text}")?;
        output.flush()?;
        n += 1;
    }
    Ok(n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorer::mock::{ConstantScorer, FnScorer};
    use crate::scorer::ScorerMode;
    use std::net::TcpListener;

    fn req(id: u64, cands: &[&str]) -> ScoreRequest {
        ScoreRequest {
            request_id: id,
            mode: ScorerMode::Nsp,
            context: vec!["ctx".into()],
            candidates: cands.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn tcp_server<F>(handler: F) -> String
    where
        F: FnOnce(TcpStream) + Send + 'static,
    {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap().to_string();
        thread::spawn(move || {
            let (stream, _) = listener.accept().unwrap();
            handler(stream);
        });
        addr
    }

    #[test]
    fn endpoint_parsing() {
        assert_eq!(Endpoint::parse("builtin"), Ok(Endpoint::Builtin));
        assert_eq!(
            Endpoint::parse("cmd:python3 adapter.py --mode nsp"),
            Ok(Endpoint::Command(vec![
                "python3".into(),
                "adapter.py".into(),
                "--mode".into(),
                "nsp".into()
            ]))
        );
        assert_eq!(
            Endpoint::parse("tcp:localhost:7000"),
            Ok(Endpoint::Tcp("localhost:7000".into()))
        );
        assert!(Endpoint::parse("tcp:localhost").is_err());
        assert!(Endpoint::parse("cmd:").is_err());
        assert!(Endpoint::parse("http://x").is_err());
    }

    #[test]
    fn tcp_round_trip_with_window() {
        let addr = tcp_server(|s| {
            let scorer = FnScorer(|ctx: &[String], c: &str| -(c.len() as f64) - ctx.len() as f64);
            serve_lines(&scorer, BufReader::new(s.try_clone().unwrap()), s).unwrap();
        });
        let client = LineScorer::connect(&addr, Duration::from_secs(5), 3).unwrap();
        let reqs: Vec<_> = (0..10).map(|i| req(i, &["ab", "abcd"])).collect();
        let out = client.score_batch(&reqs).unwrap();
        for (i, r) in out.iter().enumerate() {
            assert_eq!(r.request_id, i as u64);
            assert_eq!(r.scores, vec![-3.0, -5.0]);
        }
    }

    #[test]
    fn out_of_order_responses_are_matched() {
        let addr = tcp_server(|s| {
            let mut lines = BufReader::new(s.try_clone().unwrap()).lines();
            let a: ScoreRequest = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
            let b: ScoreRequest = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
            let mut w = s;
            for r in [&b, &a] {
                let resp = ScoreResponse::ok(r.request_id, vec![-(r.request_id as f64)]);
                writeln!(w, "{}", serde_json::to_string(&resp).unwrap()).unwrap();
            }
        });
        let client = LineScorer::connect(&addr, Duration::from_secs(5), 2).unwrap();
        let out = client.score_batch(&[req(7, &["x"]), req(8, &["y"])]).unwrap();
        assert_eq!(out[0].scores, vec![-7.0]);
        assert_eq!(out[1].scores, vec![-8.0]);
    }

    #[test]
    fn silent_peer_times_out() {
        let addr = tcp_server(|s| {
            thread::sleep(Duration::from_millis(500));
            drop(s);
        });
        let client = LineScorer::connect(&addr, Duration::from_millis(50), 1).unwrap();
        assert_eq!(
            client.score(&req(4, &["x"])),
            Err(ScorerError::Timeout { request_id: 4 })
        );
    }

    #[test]
    fn misaligned_and_remote_errors_surface() {
        let addr = tcp_server(|s| {
            let mut lines = BufReader::new(s.try_clone().unwrap()).lines();
            let mut w = s;
            let _ = lines.next();
            writeln!(w, r#"{{"request_id":1,"scores":[-1.0]}}"#).unwrap();
            let _ = lines.next();
            writeln!(w, r#"{{"request_id":2,"error":"model not loaded"}}"#).unwrap();
        });
        let client = LineScorer::connect(&addr, Duration::from_secs(5), 1).unwrap();
        assert!(matches!(
            client.score(&req(1, &["x", "y"])),
            Err(ScorerError::Misaligned {
                request_id: 1,
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            client.score(&req(2, &["x"])),
            Err(ScorerError::Remote { request_id: 2, .. })
        ));
    }

    #[test]
    fn process_transport() {
        // A peer that answers every line with a fixed response.
        let script = r#"while read l; do echo '{"request_id":5,"scores":[-2.5]}'; done"#;
        let client = LineScorer::spawn("sh", &["-c".into(), script.into()], Duration::from_secs(5), 1).unwrap();
        assert_eq!(client.score(&req(5, &["x"])).unwrap().scores, vec![-2.5]);
        assert!(matches!(client.score(&req(6, &["x"])), Err(ScorerError::Protocol(_))));
    }

    #[test]
    fn serve_lines_reports_errors_inline() {
        let input = "{\"request_id\":3,\"mode\":\"nsp\",\"candidates\":[\"a\"]}\nnot json\n{\"request_id\":9,\"mode\":\"bogus\",\"candidates\":[]}\n";
        let mut out = Vec::new();
        let n = serve_lines(&ConstantScorer(-1.0), input.as_bytes(), &mut out).unwrap();
        assert_eq!(n, 3);
        let lines: Vec<ScoreResponse> = String::from_utf8(out)
            .unwrap()
            .lines()
            .map(|l| serde_json::from_str(l).unwrap())
            .collect();
        assert_eq!(lines[0].scores, vec![-1.0]);
        assert!(lines[1].error.is_some());
        assert_eq!(lines[2].request_id, 9);
        assert!(lines[2].error.is_some());
    }
}
