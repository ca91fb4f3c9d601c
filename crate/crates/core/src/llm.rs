//! Completion providers: a live chat-completion client and a record/replay
//! provider backed by transcripts or fixture files.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus;
use crate::prompt::{PresetId, PromptText};

pub const DEFAULT_RESPONSE_POINTER: &str = "/choices/0/message/content";

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid provider config: {0}")]
    Config(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    BadResponse(String),
    #[error("no recorded response for provider `{provider}` and prompt {prompt_hash}")]
    ReplayMiss { provider: String, prompt_hash: String },
    #[error("transcript I/O: {0}")]
    Io(#[from] std::io::Error),
}

impl ProviderError {
    fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Network(_) | ProviderError::Timeout => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    format!("{:x}", Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    Live,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Label used in records and fixture lookup, e.g. `gpt-4`.
    pub name: String,
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: u64,
    /// Environment variable holding the credential.
    pub auth_env: Option<String>,
    /// Replay source, or the record target for live providers.
    pub transcript_path: Option<PathBuf>,
    /// `builtin` for the embedded corpus, otherwise a directory laid out as
    /// `<dir>/<name>/p<N>.txt` (plus `p<N>-<k>.txt` for extra responses).
    pub fixtures: Option<String>,
    pub max_in_flight: usize,
    pub system_message: String,
    pub attempts: u32,
    pub backoff_ms: u64,
    /// JSON request body with `{{model}}`, `{{temperature}}` and `{{prompt}}`
    /// placeholders. The default is an OpenAI-style chat request.
    pub payload_template: Option<String>,
    pub response_pointer: String,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            name: String::new(),
            kind: ProviderKind::Replay,
            endpoint: None,
            model: String::new(),
            temperature: 1.0,
            timeout_secs: 120,
            auth_env: None,
            transcript_path: None,
            fixtures: None,
            max_in_flight: 4,
            system_message: String::new(),
            attempts: 3,
            backoff_ms: 500,
            payload_template: None,
            response_pointer: DEFAULT_RESPONSE_POINTER.to_owned(),
        }
    }
}

impl ProviderConfig {
    /// Replay from the embedded corpus.
    pub fn builtin(name: &str) -> Self {
        ProviderConfig {
            name: name.to_owned(),
            model: name.to_owned(),
            fixtures: Some("builtin".to_owned()),
            ..ProviderConfig::default()
        }
    }

    pub fn check(&self) -> Result<(), ProviderError> {
        if self.name.is_empty() {
            return Err(ProviderError::Config("name is required".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(ProviderError::Config("temperature must be >= 0".into()));
        }
        match self.kind {
            ProviderKind::Live => {
                if self.endpoint.is_none() || self.model.is_empty() {
                    return Err(ProviderError::Config("live providers need endpoint and model".into()));
                }
                if self.max_in_flight == 0 || self.attempts == 0 {
                    return Err(ProviderError::Config("max_in_flight and attempts must be >= 1".into()));
                }
            }
            ProviderKind::Replay => {
                if self.transcript_path.is_none() && self.fixtures.is_none() {
                    return Err(ProviderError::Config("replay providers need transcript_path or fixtures".into()));
                }
            }
        }
        Ok(())
    }
}

/// A set of provider configs as read from a `--providers` file.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ProvidersFile {
    #[serde(default, rename = "provider")]
    pub providers: Vec<ProviderConfig>,
}

impl ProvidersFile {
    pub fn load(path: &Path) -> Result<Self, ProviderError> {
        let text = fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| ProviderError::Config(e.to_string()))
    }

    /// Replay configs for every provider in the embedded corpus.
    pub fn builtin() -> Self {
        ProvidersFile { providers: corpus::PROVIDERS.iter().map(|p| ProviderConfig::builtin(p)).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub prompt_hash: String,
    pub prompt: String,
    pub response: String,
    pub provider: String,
    pub model: String,
    pub timestamp: String,
}

pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptRecord>, ProviderError> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| ProviderError::BadResponse(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

pub trait Provider: Send + Sync {
    fn name(&self) -> &str;
    fn model(&self) -> &str;
    fn temperature(&self) -> f64;
    fn complete(&self, prompt: &PromptText) -> Result<String, ProviderError>;
}

/// Responses served in order and cycled, keyed by anything hashable.
struct Cycle<K> {
    entries: HashMap<K, Vec<String>>,
    cursors: Mutex<HashMap<K, usize>>,
}

impl<K: std::hash::Hash + Eq + Clone> Cycle<K> {
    fn new(entries: HashMap<K, Vec<String>>) -> Self {
        Cycle { entries, cursors: Mutex::new(HashMap::new()) }
    }

    fn next(&self, key: &K) -> Option<String> {
        let list = self.entries.get(key).filter(|l| !l.is_empty())?;
        let mut cursors = self.cursors.lock().expect("cursor lock");
        let cursor = cursors.entry(key.clone()).or_insert(0);
        let out = list[*cursor % list.len()].clone();
        *cursor += 1;
        Some(out)
    }
}

pub struct ReplayProvider {
    name: String,
    model: String,
    temperature: f64,
    transcript: Cycle<String>,
    fixtures: Cycle<PresetId>,
}

fn load_fixture_dir(dir: &Path, provider: &str) -> Result<HashMap<PresetId, Vec<String>>, ProviderError> {
    let mut out = HashMap::new();
    let root = dir.join(provider);
    if !root.is_dir() {
        return Ok(out);
    }
    for id in PresetId::ALL {
        let mut list = Vec::new();
        let first = root.join(format!("p{}.txt", id.number()));
        if first.is_file() {
            list.push(fs::read_to_string(first)?);
        }
        for k in 1.. {
            let extra = root.join(format!("p{}-{k}.txt", id.number()));
            if !extra.is_file() {
                break;
            }
            list.push(fs::read_to_string(extra)?);
        }
        if !list.is_empty() {
            out.insert(id, list);
        }
    }
    Ok(out)
}

impl ReplayProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.check()?;
        let mut by_hash: HashMap<String, Vec<String>> = HashMap::new();
        if let Some(path) = &cfg.transcript_path {
            for rec in read_transcript(path)? {
                if rec.provider == cfg.name {
                    by_hash.entry(rec.prompt_hash).or_default().push(rec.response);
                }
            }
        }
        let fixtures = match cfg.fixtures.as_deref() {
            None => HashMap::new(),
            Some("builtin") => PresetId::ALL
                .into_iter()
                .filter_map(|id| corpus::response(&cfg.name, id).map(|r| (id, vec![r.to_owned()])))
                .collect(),
            Some(dir) => load_fixture_dir(Path::new(dir), &cfg.name)?,
        };
        Ok(ReplayProvider {
            name: cfg.name.clone(),
            model: if cfg.model.is_empty() { cfg.name.clone() } else { cfg.model.clone() },
            temperature: cfg.temperature,
            transcript: Cycle::new(by_hash),
            fixtures: Cycle::new(fixtures),
        })
    }
}

impl Provider for ReplayProvider {
    fn name(&self) -> &str {
        &self.name
    }

    fn model(&self) -> &str {
        &self.model
    }

    fn temperature(&self) -> f64 {
        self.temperature
    }

    fn complete(&self, prompt: &PromptText) -> Result<String, ProviderError> {
        let hash = prompt_hash(&prompt.text);
        if let Some(r) = self.transcript.next(&hash) {
            return Ok(r);
        }
        if let Some(r) = prompt.preset().and_then(|id| self.fixtures.next(&id)) {
            return Ok(r);
        }
        Err(ProviderError::ReplayMiss { provider: self.name.clone(), prompt_hash: hash })
    }
}

/// Counting semaphore bounding concurrent requests.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Gate {
    fn acquire(&self) -> GateGuard<'_> {
        let mut free = self.free.lock().expect("gate lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate lock");
        }
        *free -= 1;
        GateGuard(self)
    }
}

struct GateGuard<'a>(&'a Gate);

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate lock") += 1;
        self.0.cv.notify_one();
    }
}

pub struct LiveProvider {
    cfg: ProviderConfig,
    client: reqwest::blocking::Client,
    gate: Gate,
}

fn json_escape(s: &str) -> String {
    let quoted = serde_json::to_string(s).expect("string serializes");
    quoted[1..quoted.len() - 1].to_owned()
}

impl LiveProvider {
    pub fn new(cfg: &ProviderConfig) -> Result<Self, ProviderError> {
        cfg.check()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(cfg.timeout_secs))
            .build()
            .map_err(|e| ProviderError::Config(e.to_string()))?;
        Ok(LiveProvider {
            cfg: cfg.clone(),
            client,
            gate: Gate { free: Mutex::new(cfg.max_in_flight), cv: Condvar::new() },
        })
    }

    pub fn payload(&self, prompt: &str) -> Result<serde_json::Value, ProviderError> {
        if let Some(template) = &self.cfg.payload_template {
            let body = template
                .replace("{{model}}", &json_escape(&self.cfg.model))
                .replace("{{temperature}}", &serde_json::to_string(&self.cfg.temperature).unwrap_or_default())
                .replace("{{prompt}}", &json_escape(prompt));
            return serde_json::from_str(&body).map_err(|e| ProviderError::Config(format!("payload template: {e}")));
        }
        let mut messages = Vec::new();
        if !self.cfg.system_message.is_empty() {
            messages.push(serde_json::json!({"role": "system", "content": self.cfg.system_message}));
        }
        messages.push(serde_json::json!({"role": "user", "content": prompt}));
        Ok(serde_json::json!({
            "model": self.cfg.model,
            "temperature": self.cfg.temperature,
            "messages": messages,
        }))
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, ProviderError> {
        let endpoint = self.cfg.endpoint.as_deref().expect("checked");
        let mut req = self.client.post(endpoint).json(body);
        if let Some(var) = &self.cfg.auth_env {
            let key = std::env::var(var).map_err(|_| ProviderError::Auth(format!("${var} is not set")))?;
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                ProviderError::Timeout
            } else {
                ProviderError::Network(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Network(e.to_string()))?;
        if status.as_u16() == 401 || status.as_u16() == 403 {
            return Err(ProviderError::Auth(format!("HTTP {}", status.as_u16())));
        }
        if !status.is_success() {
            return Err(ProviderError::Http { status: status.as_u16(), body: text });
        }
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        value
            .pointer(&self.cfg.response_pointer)
            .and_then(|v| v.as_str())
            .map(str::to_owned)
            .ok_or_else(|| ProviderError::BadResponse(format!("nothing at {}", self.cfg.response_pointer)))
    }
}

impl Provider for LiveProvider {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn model(&self) -> &str {
        &self.cfg.model
    }

    fn temperature(&self) -> f64 {
        self.cfg.temperature
    }

    fn complete(&self, prompt: &PromptText) -> Result<String, ProviderError> {
        let body = self.payload(&prompt.text)?;
        let _slot = self.gate.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.is_retryable() && attempt < self.cfg.attempts => {
                    let wait = self.cfg.backoff_ms.saturating_mul(1 << (attempt - 1).min(16));
                    warn!("{}: attempt {attempt} failed ({e}); retrying in {wait} ms", self.cfg.name);
                    thread::sleep(Duration::from_millis(wait));
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Appends every successful completion of the inner provider to a transcript.
pub struct Recorder<P> {
    inner: P,
    file: Mutex<File>,
}

impl<P: Provider> Recorder<P> {
    pub fn new(inner: P, path: &Path) -> Result<Self, ProviderError> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Recorder { inner, file: Mutex::new(file) })
    }
}

impl<P: Provider> Provider for Recorder<P> {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn model(&self) -> &str {
        self.inner.model()
    }

    fn temperature(&self) -> f64 {
        self.inner.temperature()
    }

    fn complete(&self, prompt: &PromptText) -> Result<String, ProviderError> {
        let response = self.inner.complete(prompt)?;
        let rec = TranscriptRecord {
            prompt_hash: prompt_hash(&prompt.text),
            prompt: prompt.text.clone(),
            response: response.clone(),
            provider: self.inner.name().to_owned(),
            model: self.inner.model().to_owned(),
            timestamp: chrono::Utc::now().to_rfc3339(),
        };
        let line = serde_json::to_string(&rec).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        let mut file = self.file.lock().expect("transcript lock");
        writeln!(file, "{line}")?;
        file.flush()?;
        debug!("recorded {} for {}", rec.prompt_hash, rec.provider);
        Ok(response)
    }
}

pub fn build_provider(cfg: &ProviderConfig) -> Result<Box<dyn Provider>, ProviderError> {
    match cfg.kind {
        ProviderKind::Replay => Ok(Box::new(ReplayProvider::new(cfg)?)),
        ProviderKind::Live => {
            let live = LiveProvider::new(cfg)?;
            match &cfg.transcript_path {
                Some(path) => Ok(Box::new(Recorder::new(live, path)?)),
                None => Ok(Box::new(live)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::{build, preset};

    fn prompt(id: PresetId) -> PromptText {
        build(&preset(id, "maze game")).unwrap()
    }

    #[test]
    fn hash_is_sha256_hex() {
        assert_eq!(prompt_hash(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn builtin_replay_serves_the_corpus() {
        let p = ReplayProvider::new(&ProviderConfig::builtin("gpt-4")).unwrap();
        let r = p.complete(&prompt(PresetId::P7)).unwrap();
        assert_eq!(r, corpus::response("gpt-4", PresetId::P7).unwrap());
        assert_eq!(p.complete(&prompt(PresetId::P7)).unwrap(), r);
        let g = ReplayProvider::new(&ProviderConfig::builtin("gemma-7b")).unwrap();
        assert_eq!(g.complete(&prompt(PresetId::P1)).unwrap(), corpus::response("gemma-7b", PresetId::P1).unwrap());
    }

    #[test]
    fn empty_transcript_misses() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jsonl");
        fs::write(&path, "").unwrap();
        let cfg = ProviderConfig { name: "x".into(), transcript_path: Some(path), ..ProviderConfig::default() };
        let p = ReplayProvider::new(&cfg).unwrap();
        assert!(matches!(p.complete(&prompt(PresetId::P1)), Err(ProviderError::ReplayMiss { .. })));
    }

    #[test]
    fn fixture_dir_round_robin() {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().join("m");
        fs::create_dir(&root).unwrap();
        fs::write(root.join("p2.txt"), "first").unwrap();
        fs::write(root.join("p2-1.txt"), "second").unwrap();
        let cfg = ProviderConfig {
            name: "m".into(),
            fixtures: Some(dir.path().display().to_string()),
            ..ProviderConfig::default()
        };
        let p = ReplayProvider::new(&cfg).unwrap();
        let got: Vec<_> = (0..3).map(|_| p.complete(&prompt(PresetId::P2)).unwrap()).collect();
        assert_eq!(got, ["first", "second", "first"]);
        assert!(p.complete(&prompt(PresetId::P3)).is_err());
    }

    #[test]
    fn config_invariants() {
        let live = ProviderConfig { name: "l".into(), kind: ProviderKind::Live, ..ProviderConfig::default() };
        assert!(live.check().is_err());
        let replay = ProviderConfig { name: "r".into(), ..ProviderConfig::default() };
        assert!(replay.check().is_err());
        let ok = ProviderConfig {
            endpoint: Some("http://localhost:1/v1/chat/completions".into()),
            model: "m".into(),
            ..live
        };
        assert!(ok.check().is_ok());
        assert_eq!(ok.temperature, 1.0);
    }

    #[test]
    fn default_payload_is_single_user_message() {
        let cfg = ProviderConfig {
            name: "l".into(),
            kind: ProviderKind::Live,
            endpoint: Some("http://localhost:1/".into()),
            model: "m".into(),
            ..ProviderConfig::default()
        };
        let p = LiveProvider::new(&cfg).unwrap();
        let body = p.payload("hi \"there\"").unwrap();
        assert_eq!(body["messages"].as_array().unwrap().len(), 1);
        assert_eq!(body["messages"][0]["content"], "hi \"there\"");
        let templ = LiveProvider::new(&ProviderConfig {
            payload_template: Some("{\"m\":\"{{model}}\",\"q\":\"{{prompt}}\",\"t\":{{temperature}}}".into()),
            ..cfg
        })
        .unwrap();
        assert_eq!(templ.payload("a\nb").unwrap(), serde_json::json!({"m": "m", "q": "a\nb", "t": 1.0}));
    }

    #[test]
    fn providers_file_parses() {
        let f: ProvidersFile = toml::from_str(
            "[[provider]]\nname = \"gpt-4\"\nfixtures = \"builtin\"\n\n[[provider]]\nname = \"live\"\nkind = \"live\"\nendpoint = \"http://x\"\nmodel = \"m\"\nauth_env = \"KEY\"\n",
        )
        .unwrap();
        assert_eq!(f.providers.len(), 2);
        assert_eq!(f.providers[1].kind, ProviderKind::Live);
        assert!(f.providers.iter().all(|p| p.check().is_ok()));
    }
}
