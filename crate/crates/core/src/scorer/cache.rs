//! Score caching and replay logs.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ScoreRequest, ScoreResponse, Scorer, ScorerError, ScorerMode};

type Key = (ScorerMode, Vec<String>, String);

#[derive(Serialize, Deserialize)]
struct CacheLine {
    mode: ScorerMode,
    context: Vec<String>,
    candidate: String,
    score: f64,
}

/// Memoizes scores by `(mode, context, candidate)`. Only unseen candidates
/// are forwarded to the inner scorer.
pub struct CachedScorer<S> {
    inner: S,
    cache: Mutex<HashMap<Key, f64>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<S: Scorer> CachedScorer<S> {
    pub fn new(inner: S) -> Self {
        CachedScorer {
            inner,
            cache: Mutex::new(HashMap::new()),
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the cache as sorted JSON lines.
    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let cache = self.cache.lock().unwrap();
        let mut entries: Vec<_> = cache.iter().collect();
        entries.sort_by(|a, b| a.0.cmp(b.0));
        let mut w = BufWriter::new(File::create(path)?);
        for ((mode, context, candidate), &score) in entries {
            let line = CacheLine {
                mode: *mode,
                context: context.clone(),
                candidate: candidate.clone(),
                score,
            };
            writeln!(w, "{}", serde_json::to_string(&line)?)?;
        }
        w.flush()
    }

    /// Adds the entries of a saved cache.
    pub fn load(&self, path: &Path) -> std::io::Result<usize> {
        let mut cache = self.cache.lock().unwrap();
        let mut n = 0;
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: CacheLine = serde_json::from_str(&line).map_err(std::io::Error::other)?;
            cache.insert((e.mode, e.context, e.candidate), e.score);
            n += 1;
        }
        Ok(n)
    }

    fn missing(&self, req: &ScoreRequest) -> Vec<String> {
        let cache = self.cache.lock().unwrap();
        let mut out: Vec<String> = Vec::new();
        for c in &req.candidates {
            let key = (req.mode, req.context.clone(), c.clone());
            if !cache.contains_key(&key) && !out.contains(c) {
                out.push(c.clone());
            }
        }
        out
    }
}

impl<S: Scorer> Scorer for CachedScorer<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        Ok(self.score_batch(std::slice::from_ref(request))?.remove(0))
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        let mut forward = Vec::new();
        for r in requests {
            let missing = self.missing(r);
            self.misses.fetch_add(missing.len(), Ordering::Relaxed);
            self.hits
                .fetch_add(r.candidates.len() - missing.len(), Ordering::Relaxed);
            if !missing.is_empty() {
                forward.push(ScoreRequest {
                    candidates: missing,
                    ..r.clone()
                });
            }
        }
        if !forward.is_empty() {
            let responses = self.inner.score_batch(&forward)?;
            let mut cache = self.cache.lock().unwrap();
            for (req, resp) in forward.iter().zip(responses) {
                resp.validate(req)?;
                for (c, s) in req.candidates.iter().zip(resp.scores) {
                    cache.insert((req.mode, req.context.clone(), c.clone()), s);
                }
            }
        }
        let cache = self.cache.lock().unwrap();
        Ok(requests
            .iter()
            .map(|r| {
                let scores = r
                    .candidates
                    .iter()
                    .map(|c| cache[&(r.mode, r.context.clone(), c.clone())])
                    .collect();
                ScoreResponse::ok(r.request_id, scores)
            })
            .collect())
    }
}

#[derive(Serialize, Deserialize)]
struct ReplayLine {
    request: ScoreRequest,
    response: ScoreResponse,
}

/// Forwards to an inner scorer and appends every exchange to a log that
/// [`ReplayScorer`] can answer from later.
pub struct RecordingScorer<S> {
    inner: S,
    log: Mutex<BufWriter<File>>,
}

impl<S: Scorer> RecordingScorer<S> {
    pub fn create(inner: S, path: &Path) -> std::io::Result<Self> {
        Ok(RecordingScorer {
            inner,
            log: Mutex::new(BufWriter::new(File::create(path)?)),
        })
    }

    fn record(&self, reqs: &[ScoreRequest], resps: &[ScoreResponse]) -> Result<(), ScorerError> {
        let mut log = self.log.lock().unwrap();
        for (request, response) in reqs.iter().zip(resps) {
            let line = serde_json::to_string(&ReplayLine {
                request: request.clone(),
                response: response.clone(),
            })
            .map_err(|e| ScorerError::Protocol(e.to_string()))?;
            writeln!(log, "{line}").map_err(|e| ScorerError::Transport {
                request_id: request.request_id,
                message: e.to_string(),
            })?;
        }
        log.flush().map_err(|e| ScorerError::Transport {
            request_id: 0,
            message: e.to_string(),
        })
    }
}

impl<S: Scorer> Scorer for RecordingScorer<S> {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        Ok(self.score_batch(std::slice::from_ref(request))?.remove(0))
    }

    fn score_batch(&self, requests: &[ScoreRequest]) -> Result<Vec<ScoreResponse>, ScorerError> {
        let responses = self.inner.score_batch(requests)?;
        self.record(requests, &responses)?;
        Ok(responses)
    }
}

/// Answers requests from a recorded log, matching on mode, context and
/// candidates (not on request id).
#[derive(Debug, Default)]
pub struct ReplayScorer {
    table: HashMap<(ScorerMode, Vec<String>, Vec<String>), Vec<f64>>,
}

impl ReplayScorer {
    pub fn load(path: &Path) -> std::io::Result<Self> {
        let mut table = HashMap::new();
        for line in BufReader::new(File::open(path)?).lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let e: ReplayLine = serde_json::from_str(&line).map_err(std::io::Error::other)?;
            if e.response.error.is_none() {
                table.insert(
                    (e.request.mode, e.request.context, e.request.candidates),
                    e.response.scores,
                );
            }
        }
        Ok(ReplayScorer { table })
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl Scorer for ReplayScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScoreResponse, ScorerError> {
        let key = (request.mode, request.context.clone(), request.candidates.clone());
        match self.table.get(&key) {
            Some(scores) => Ok(ScoreResponse::ok(request.request_id, scores.clone())),
            None => Err(ScorerError::Remote {
                request_id: request.request_id,
                message: "no recorded response".into(),
            }),
        }
    }
}
