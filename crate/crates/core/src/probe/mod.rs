//! Drives an OpenAI-compatible text-generation endpoint over the prompt
//! library and persists the completions as passages.

mod mock;

pub use mock::{canned_completion, MockBehavior, MockServer, MOCK_SENTENCES};

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::labels::Dimension;
use crate::promptgen::PromptEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApiMode {
    Chat,
    Completion,
}

/// Where to send prompts. The token itself is only ever read from the
/// named environment variable at request time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmEndpoint {
    pub base_url: String,
    pub model: String,
    #[serde(default)]
    pub token_env: Option<String>,
    pub mode: ApiMode,
}

impl LlmEndpoint {
    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        match self.mode {
            ApiMode::Chat => format!("{base}/v1/chat/completions"),
            ApiMode::Completion => format!("{base}/v1/completions"),
        }
    }

    fn token(&self) -> Result<Option<String>> {
        match &self.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var)
                .map(Some)
                .map_err(|_| Error::InvalidInput(format!("auth token variable {var} is not set"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenParams {
    pub temperature: f64,
    pub max_new_tokens: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    pub system_instruction: String,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            temperature: 1.0,
            max_new_tokens: 100,
            seed: None,
            system_instruction: "Continue the following passage.".into(),
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0) || self.max_new_tokens == 0 {
            return Err(Error::InvalidInput(
                "temperature must be >= 0 and max_new_tokens > 0".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Passage {
    pub prompt_id: String,
    pub dimension: Dimension,
    pub model: String,
    pub prompt: String,
    pub completion: String,
    pub timestamp: String,
    pub params: GenParams,
    pub attempts: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub prompt_id: String,
    pub dimension: Dimension,
    pub model: String,
    pub prompt: String,
    pub error: String,
    pub attempts: u32,
    pub timestamp: String,
}

fn request_body(endpoint: &LlmEndpoint, prompt: &str, params: &GenParams) -> Value {
    let mut body = match endpoint.mode {
        ApiMode::Chat => json!({
            "model": endpoint.model,
            "messages": [
                {"role": "system", "content": params.system_instruction},
                {"role": "user", "content": prompt},
            ],
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }),
        ApiMode::Completion => json!({
            "model": endpoint.model,
            "prompt": prompt,
            "temperature": params.temperature,
            "max_tokens": params.max_new_tokens,
        }),
    };
    if let Some(seed) = params.seed {
        body["seed"] = json!(seed);
    }
    body
}

fn first_choice(mode: ApiMode, body: &str) -> Result<String> {
    let v: Value = serde_json::from_str(body).map_err(|e| Error::Protocol(format!("response is not JSON: {e}")))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| Error::Protocol("response has no choices".into()))?;
    let text = match mode {
        ApiMode::Chat => choice.get("message").and_then(|m| m.get("content")),
        ApiMode::Completion => choice.get("text"),
    };
    text.and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| Error::Protocol("first choice carries no text".into()))
}

/// Blocking HTTP client for one endpoint.
pub struct LlmClient {
    agent: ureq::Agent,
    endpoint: LlmEndpoint,
}

impl LlmClient {
    pub fn new(endpoint: LlmEndpoint, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        LlmClient { agent, endpoint }
    }

    pub fn endpoint(&self) -> &LlmEndpoint {
        &self.endpoint
    }

    /// One request, no retries.
    pub fn complete(&self, prompt: &str, params: &GenParams) -> Result<String> {
        let mut req = self.agent.post(self.endpoint.url());
        if let Some(token) = self.endpoint.token()? {
            req = req.header("Authorization", format!("Bearer {token}"));
        }
        let resp = req
            .send_json(request_body(&self.endpoint, prompt, params))
            .map_err(|e| match e {
                ureq::Error::Timeout(t) => Error::Retryable(format!("timeout ({t})")),
                other => Error::Retryable(format!("transport: {other}")),
            })?;
        let status = resp.status().as_u16();
        let body = resp
            .into_body()
            .read_to_string()
            .map_err(|e| Error::Retryable(format!("reading body: {e}")))?;
        match status {
            200..=299 => first_choice(self.endpoint.mode, &body),
            401 | 403 => Err(Error::Auth(status)),
            429 | 500..=599 => Err(Error::Retryable(format!("HTTP {status}"))),
            _ => Err(Error::Protocol(format!("unexpected HTTP {status}"))),
        }
    }
}

/// Convenience wrapper around [`LlmClient::complete`].
pub fn complete(endpoint: &LlmEndpoint, prompt: &str, params: &GenParams) -> Result<String> {
    LlmClient::new(endpoint.clone(), Duration::from_secs(60)).complete(prompt, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Backoff {
    pub base_ms: u64,
    pub factor: f64,
    pub seed: u64,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base_ms: 1000,
            factor: 2.0,
            seed: 42,
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (1-based): base * factor^(retry-1),
    /// scaled by a jitter in [0.5, 1).
    pub fn delay(&self, prompt_index: usize, retry: u32) -> Duration {
        let full = self.base_ms as f64 * self.factor.powi(retry.saturating_sub(1) as i32);
        let mut rng = ChaCha8Rng::seed_from_u64(
            self.seed ^ (prompt_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ u64::from(retry),
        );
        Duration::from_secs_f64(full * rng.random_range(0.5..1.0) / 1000.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub parallelism: usize,
    pub max_retries: u32,
    pub backoff: Backoff,
    pub timeout_secs: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            parallelism: 4,
            max_retries: 5,
            backoff: Backoff::default(),
            timeout_secs: 60,
        }
    }
}

/// Receives results in (dimension, prompt id) order from a single writer.
pub trait PassageSink {
    fn passage(&mut self, p: &Passage) -> Result<()>;
    fn failure(&mut self, f: &FailureRecord) -> Result<()>;
}

#[derive(Debug, Default)]
pub struct VecSink {
    pub passages: Vec<Passage>,
    pub failures: Vec<FailureRecord>,
}

impl PassageSink for VecSink {
    fn passage(&mut self, p: &Passage) -> Result<()> {
        self.passages.push(p.clone());
        Ok(())
    }

    fn failure(&mut self, f: &FailureRecord) -> Result<()> {
        self.failures.push(f.clone());
        Ok(())
    }
}

/// Passages to one JSONL file, failures to another.
pub struct JsonlSink {
    passages: BufWriter<File>,
    failures: BufWriter<File>,
    paths: (std::path::PathBuf, std::path::PathBuf),
}

impl JsonlSink {
    pub fn create(passages: &Path, failures: &Path) -> Result<Self> {
        let open = |p: &Path| File::create(p).map(BufWriter::new).map_err(|e| Error::io(p, e));
        Ok(JsonlSink {
            passages: open(passages)?,
            failures: open(failures)?,
            paths: (passages.to_path_buf(), failures.to_path_buf()),
        })
    }

    pub fn finish(mut self) -> Result<()> {
        self.passages.flush().map_err(|e| Error::io(&self.paths.0, e))?;
        self.failures.flush().map_err(|e| Error::io(&self.paths.1, e))
    }
}

fn write_line<T: Serialize>(w: &mut impl Write, path: &Path, v: &T) -> Result<()> {
    let line = serde_json::to_string(v).map_err(|e| Error::Other(e.to_string()))?;
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))
}

impl PassageSink for JsonlSink {
    fn passage(&mut self, p: &Passage) -> Result<()> {
        write_line(&mut self.passages, &self.paths.0, p)
    }

    fn failure(&mut self, f: &FailureRecord) -> Result<()> {
        write_line(&mut self.failures, &self.paths.1, f)
    }
}

/// Sibling path for failure records: `passages.jsonl` ->
/// `passages.failures.jsonl`.
pub fn failures_path(passages: &Path) -> std::path::PathBuf {
    let stem = passages.file_stem().and_then(|s| s.to_str()).unwrap_or("passages");
    passages.with_file_name(format!("{stem}.failures.jsonl"))
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DimensionCounts {
    pub success: usize,
    pub failure: usize,
    /// Every prompt of the dimension failed.
    pub unusable: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeSummary {
    pub prompts: usize,
    pub per_dimension: BTreeMap<Dimension, DimensionCounts>,
    /// Set when an authentication failure stopped the run early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

impl ProbeSummary {
    pub fn successes(&self) -> usize {
        self.per_dimension.values().map(|c| c.success).sum()
    }

    pub fn failures(&self) -> usize {
        self.per_dimension.values().map(|c| c.failure).sum()
    }
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

/// Sends one prompt with retries; returns the text or the final error,
/// plus the number of attempts made.
fn complete_with_retries(
    client: &LlmClient,
    prompt: &str,
    params: &GenParams,
    config: &ProbeConfig,
    index: usize,
) -> (Result<String>, u32) {
    let mut attempts = 0;
    loop {
        attempts += 1;
        match client.complete(prompt, params) {
            Ok(text) if text.trim().is_empty() => return (Err(Error::Protocol("empty completion".into())), attempts),
            Ok(text) => return (Ok(text), attempts),
            Err(Error::Retryable(_)) if attempts <= config.max_retries => {
                std::thread::sleep(config.backoff.delay(index, attempts));
            }
            Err(e) => return (Err(e), attempts),
        }
    }
}

/// Probes every prompt with at most `parallelism` requests in flight.
/// Results reach the sink in (dimension, prompt id) order. An
/// authentication failure stops new requests and is returned as an error
/// after the sink has received everything already completed.
pub fn run_probe(
    client: &LlmClient,
    library: &[PromptEntry],
    params: &GenParams,
    config: &ProbeConfig,
    sink: &mut dyn PassageSink,
) -> Result<ProbeSummary> {
    if library.is_empty() {
        return Err(Error::InvalidInput("prompt library is empty".into()));
    }
    params.validate()?;
    // Resolve the token once up front so a missing variable fails fast.
    client.endpoint().token()?;
    let mut order: Vec<&PromptEntry> = library.iter().collect();
    order.sort_by(|a, b| a.dimension.cmp(&b.dimension).then_with(|| a.id.cmp(&b.id)));

    let next = AtomicUsize::new(0);
    let abort = std::sync::atomic::AtomicBool::new(false);
    let (tx, rx) = mpsc::channel::<(usize, Result<String>, u32, String)>();
    let mut summary = ProbeSummary {
        prompts: order.len(),
        ..ProbeSummary::default()
    };
    for e in &order {
        summary.per_dimension.entry(e.dimension).or_default();
    }
    let model = client.endpoint().model.clone();
    let mut auth_error: Option<Error> = None;

    std::thread::scope(|s| -> Result<()> {
        for _ in 0..config.parallelism.max(1) {
            let tx = tx.clone();
            let (next, abort, order) = (&next, &abort, &order);
            s.spawn(move || loop {
                if abort.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(entry) = order.get(i) else { break };
                let (res, attempts) = complete_with_retries(client, &entry.text, params, config, i);
                if matches!(res, Err(Error::Auth(_))) {
                    abort.store(true, Ordering::SeqCst);
                }
                if tx.send((i, res, attempts, now())).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Single writer with a reorder buffer.
        let mut pending: BTreeMap<usize, (Result<String>, u32, String)> = BTreeMap::new();
        let mut emit = 0usize;
        for (i, res, attempts, ts) in rx {
            pending.insert(i, (res, attempts, ts));
            while let Some((res, attempts, timestamp)) = pending.remove(&emit) {
                let entry = order[emit];
                let counts = summary
                    .per_dimension
                    .get_mut(&entry.dimension)
                    .expect("dimension seeded");
                match res {
                    Ok(completion) => {
                        counts.success += 1;
                        sink.passage(&Passage {
                            prompt_id: entry.id.clone(),
                            dimension: entry.dimension,
                            model: model.clone(),
                            prompt: entry.text.clone(),
                            completion,
                            timestamp,
                            params: params.clone(),
                            attempts,
                        })?;
                    }
                    Err(e) => {
                        counts.failure += 1;
                        sink.failure(&FailureRecord {
                            prompt_id: entry.id.clone(),
                            dimension: entry.dimension,
                            model: model.clone(),
                            prompt: entry.text.clone(),
                            error: e.to_string(),
                            attempts,
                            timestamp,
                        })?;
                        if matches!(e, Error::Auth(_)) && auth_error.is_none() {
                            auth_error = Some(e);
                        }
                    }
                }
                emit += 1;
            }
        }
        Ok(())
    })?;

    for c in summary.per_dimension.values_mut() {
        c.unusable = c.success == 0;
    }
    if let Some(e) = auth_error {
        summary.aborted = Some(e.to_string());
        return Err(e);
    }
    Ok(summary)
}

pub fn read_passages(path: &Path) -> Result<Vec<Passage>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Line {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn write_passages(path: &Path, passages: &[Passage]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    for p in passages {
        write_line(&mut w, path, p)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entries(per_dim: usize) -> Vec<PromptEntry> {
        let mut v = Vec::new();
        for d in Dimension::ALL {
            for i in 0..per_dim {
                v.push(PromptEntry {
                    id: format!("{d}-{:04}", i + 1),
                    dimension: d,
                    text: format!("The {d} prompt number {i}"),
                    word_count: 5,
                    source_record_id: format!("r{i}"),
                });
            }
        }
        v
    }

    fn endpoint(server: &MockServer, mode: ApiMode) -> LlmEndpoint {
        LlmEndpoint {
            base_url: server.base_url(),
            model: "mock-gpt".into(),
            token_env: None,
            mode,
        }
    }

    fn fast() -> ProbeConfig {
        ProbeConfig {
            backoff: Backoff {
                base_ms: 1,
                ..Backoff::default()
            },
            ..ProbeConfig::default()
        }
    }

    #[test]
    fn chat_and_completion_modes_return_canned_text() {
        let server = MockServer::start(MockBehavior::default()).unwrap();
        for mode in [ApiMode::Chat, ApiMode::Completion] {
            let got = complete(&endpoint(&server, mode), "hello there", &GenParams::default()).unwrap();
            assert_eq!(got, canned_completion("hello there"));
        }
    }

    #[test]
    fn rate_limit_then_success_counts_two_attempts() {
        let server = MockServer::start(MockBehavior {
            rate_limit_first: 1,
            ..MockBehavior::default()
        })
        .unwrap();
        let client = LlmClient::new(endpoint(&server, ApiMode::Chat), Duration::from_secs(5));
        let (res, attempts) = complete_with_retries(&client, "p", &GenParams::default(), &fast(), 0);
        assert_eq!(res.unwrap(), canned_completion("p"));
        assert_eq!(attempts, 2);
    }

    #[test]
    fn unauthorized_is_fatal_without_retry() {
        let server = MockServer::start(MockBehavior {
            required_token: Some("sekret".into()),
            ..MockBehavior::default()
        })
        .unwrap();
        let client = LlmClient::new(endpoint(&server, ApiMode::Chat), Duration::from_secs(5));
        let (res, attempts) = complete_with_retries(&client, "p", &GenParams::default(), &fast(), 0);
        assert!(matches!(res, Err(Error::Auth(401))));
        assert_eq!(attempts, 1);
        assert_eq!(server.requests(), 1);
    }

    #[test]
    fn malformed_body_is_protocol_error() {
        let server = MockServer::start(MockBehavior {
            malformed: vec!["bad".into()],
            ..MockBehavior::default()
        })
        .unwrap();
        let r = complete(&endpoint(&server, ApiMode::Chat), "bad", &GenParams::default());
        assert!(matches!(r, Err(Error::Protocol(_))));
    }

    #[test]
    fn ordered_output_and_conservation() {
        let lib = entries(200);
        let failing = lib[17].text.clone();
        let server = MockServer::start(MockBehavior {
            always_fail: vec![failing.clone()],
            ..MockBehavior::default()
        })
        .unwrap();
        let client = LlmClient::new(endpoint(&server, ApiMode::Chat), Duration::from_secs(5));
        let mut sink = VecSink::default();
        let cfg = ProbeConfig {
            max_retries: 2,
            ..fast()
        };
        let summary = run_probe(&client, &lib, &GenParams::default(), &cfg, &mut sink).unwrap();
        assert_eq!(sink.passages.len(), 799);
        assert_eq!(sink.failures.len(), 1);
        assert_eq!(sink.failures[0].prompt, failing);
        assert_eq!(sink.failures[0].attempts, 3);
        assert_eq!(summary.successes() + summary.failures(), 800);
        let keys: Vec<_> = sink
            .passages
            .iter()
            .map(|p| (p.dimension, p.prompt_id.clone()))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(sink
            .passages
            .iter()
            .all(|p| p.completion == canned_completion(&p.prompt)));
        assert!(!summary.per_dimension.values().any(|c| c.unusable));
    }

    #[test]
    fn dimension_with_only_failures_is_flagged() {
        let lib = entries(1);
        let server = MockServer::start(MockBehavior {
            always_fail: vec![lib[0].text.clone()],
            ..MockBehavior::default()
        })
        .unwrap();
        let client = LlmClient::new(endpoint(&server, ApiMode::Completion), Duration::from_secs(5));
        let cfg = ProbeConfig {
            max_retries: 0,
            ..fast()
        };
        let summary = run_probe(&client, &lib, &GenParams::default(), &cfg, &mut VecSink::default()).unwrap();
        assert!(summary.per_dimension[&lib[0].dimension].unusable);
    }

    #[test]
    fn token_never_reaches_output() {
        let var = "STEREOAUDIT_TEST_TOKEN_PROBE";
        std::env::set_var(var, "tok-123456");
        let server = MockServer::start(MockBehavior {
            required_token: Some("tok-123456".into()),
            ..MockBehavior::default()
        })
        .unwrap();
        let mut ep = endpoint(&server, ApiMode::Chat);
        ep.token_env = Some(var.into());
        let client = LlmClient::new(ep.clone(), Duration::from_secs(5));
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("passages.jsonl");
        let mut sink = JsonlSink::create(&out, &failures_path(&out)).unwrap();
        run_probe(&client, &entries(2), &GenParams::default(), &fast(), &mut sink).unwrap();
        sink.finish().unwrap();
        let written = std::fs::read_to_string(&out).unwrap();
        assert_eq!(written.lines().count(), 8);
        assert!(!written.contains("tok-123456"));
        assert!(!serde_json::to_string(&ep).unwrap().contains("tok-123456"));
        assert_eq!(read_passages(&out).unwrap().len(), 8);
    }

    #[test]
    fn backoff_grows_and_is_jittered_deterministically() {
        let b = Backoff::default();
        let d1 = b.delay(3, 1).as_secs_f64();
        let d3 = b.delay(3, 3).as_secs_f64();
        assert!((0.5..1.0).contains(&d1));
        assert!((2.0..4.0).contains(&d3));
        assert_eq!(b.delay(3, 2), b.delay(3, 2));
    }
}
