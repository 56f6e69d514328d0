use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use rand::Rng;
use serde::Deserialize;

use super::VlmRequest;
use crate::error::{GatewayError, PipelineError};

/// Anything that can answer a single-image chat request with text.
pub trait VlmGateway: Send + Sync {
    fn complete(&self, request: &VlmRequest) -> Result<String, GatewayError>;
}

impl<G: VlmGateway + ?Sized> VlmGateway for &G {
    fn complete(&self, request: &VlmRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

impl<G: VlmGateway + ?Sized> VlmGateway for Box<G> {
    fn complete(&self, request: &VlmRequest) -> Result<String, GatewayError> {
        (**self).complete(request)
    }
}

/// One scripted reply.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(from = "RawEntry")]
pub enum ScriptEntry {
    Text(String),
    /// Fails with this HTTP status.
    Status(u16),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawEntry {
    Text(String),
    Status { http_status: u16 },
}

impl From<RawEntry> for ScriptEntry {
    fn from(r: RawEntry) -> Self {
        match r {
            RawEntry::Text(s) => ScriptEntry::Text(s),
            RawEntry::Status { http_status } => ScriptEntry::Status(http_status),
        }
    }
}

impl ScriptEntry {
    pub fn text(s: &str) -> Self {
        ScriptEntry::Text(s.to_string())
    }

    fn reply(&self) -> Result<String, GatewayError> {
        match self {
            ScriptEntry::Text(s) => Ok(s.clone()),
            ScriptEntry::Status(code) => Err(GatewayError::Status(*code, "scripted failure".into())),
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptValue {
    One(ScriptEntry),
    Many(Vec<ScriptEntry>),
}

/// Replies keyed by image id. The n-th call for an id gets the n-th entry of
/// its script; calls past the end repeat the last entry. The id `*` is the
/// fallback script.
#[derive(Debug, Default)]
pub struct ScriptedGateway {
    scripts: HashMap<String, Vec<ScriptEntry>>,
    calls: Mutex<HashMap<String, usize>>,
}

impl ScriptedGateway {
    pub const FALLBACK: &'static str = "*";

    /// Every image gets the same reply.
    pub fn uniform(reply: &str) -> Self {
        Self::default().with(Self::FALLBACK, vec![ScriptEntry::text(reply)])
    }

    pub fn with(mut self, image_id: &str, script: Vec<ScriptEntry>) -> Self {
        self.scripts.insert(image_id.to_string(), script);
        self
    }

    /// Parse a JSON object mapping ids to a reply, `{"http_status": code}`, or
    /// an array of those.
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        let raw: HashMap<String, ScriptValue> = serde_json::from_str(text)?;
        let scripts = raw
            .into_iter()
            .map(|(k, v)| {
                let entries = match v {
                    ScriptValue::One(e) => vec![e],
                    ScriptValue::Many(es) => es,
                };
                (k, entries)
            })
            .collect();
        Ok(Self { scripts, calls: Mutex::default() })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Self::from_json(&text).map_err(|e| PipelineError::Config(format!("stub file {}: {e}", path.display())))
    }

    /// Number of requests seen for `image_id`.
    pub fn calls(&self, image_id: &str) -> usize {
        self.calls.lock().unwrap().get(image_id).copied().unwrap_or(0)
    }
}

impl VlmGateway for ScriptedGateway {
    fn complete(&self, request: &VlmRequest) -> Result<String, GatewayError> {
        let n = {
            let mut calls = self.calls.lock().unwrap();
            let c = calls.entry(request.image_id.clone()).or_insert(0);
            *c += 1;
            *c - 1
        };
        let script = self
            .scripts
            .get(&request.image_id)
            .or_else(|| self.scripts.get(Self::FALLBACK))
            .filter(|s| !s.is_empty())
            .ok_or_else(|| GatewayError::NoScript(request.image_id.clone()))?;
        script[n.min(script.len() - 1)].reply()
    }
}

/// Exponential backoff for transport failures: the k-th retry waits
/// `base * factor^k`, stretched by up to `jitter` (a fraction) at random.
#[derive(Debug, Clone, PartialEq)]
pub struct BackoffPolicy {
    pub max_retries: u32,
    pub base: Duration,
    pub factor: f64,
    pub jitter: f64,
}

impl Default for BackoffPolicy {
    fn default() -> Self {
        Self { max_retries: 3, base: Duration::from_secs(1), factor: 2.0, jitter: 0.25 }
    }
}

impl BackoffPolicy {
    /// Retries without waiting.
    pub fn immediate(max_retries: u32) -> Self {
        Self { max_retries, base: Duration::ZERO, factor: 1.0, jitter: 0.0 }
    }

    pub fn delay(&self, retry: u32) -> Duration {
        let scale = self.factor.powi(retry as i32) * (1.0 + self.jitter * rand::thread_rng().gen::<f64>());
        self.base.mul_f64(scale)
    }
}

/// Retries retryable transport errors with backoff.
pub struct RetryingGateway<G> {
    inner: G,
    policy: BackoffPolicy,
}

impl<G: VlmGateway> RetryingGateway<G> {
    pub fn new(inner: G, policy: BackoffPolicy) -> Self {
        Self { inner, policy }
    }
}

impl<G: VlmGateway> VlmGateway for RetryingGateway<G> {
    fn complete(&self, request: &VlmRequest) -> Result<String, GatewayError> {
        let mut retry = 0;
        loop {
            match self.inner.complete(request) {
                Err(e) if e.is_retryable() && retry < self.policy.max_retries => {
                    let wait = self.policy.delay(retry);
                    log::warn!("{}: {e}; retrying in {wait:?}", request.image_id);
                    thread::sleep(wait);
                    retry += 1;
                }
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(id: &str) -> VlmRequest {
        VlmRequest {
            image_id: id.into(),
            model_name: "m".into(),
            prompt: "p".into(),
            image: vec![],
            max_tokens: 8,
            temperature: 0.0,
        }
    }

    #[test]
    fn script_file_forms() {
        let gw = ScriptedGateway::from_json(
            r#"{"a": "GOOD: x", "b": ["junk", {"http_status": 503}, "BAD: y"], "*": "BAD: default"}"#,
        )
        .unwrap();
        assert_eq!(gw.complete(&req("a")).unwrap(), "GOOD: x");
        assert_eq!(gw.complete(&req("b")).unwrap(), "junk");
        assert_eq!(gw.complete(&req("b")), Err(GatewayError::Status(503, "scripted failure".into())));
        assert_eq!(gw.complete(&req("b")).unwrap(), "BAD: y");
        assert_eq!(gw.complete(&req("b")).unwrap(), "BAD: y");
        assert_eq!(gw.complete(&req("zzz")).unwrap(), "BAD: default");
    }

    #[test]
    fn missing_script_is_an_error() {
        let gw = ScriptedGateway::default();
        assert_eq!(gw.complete(&req("q")), Err(GatewayError::NoScript("q".into())));
    }

    #[test]
    fn retry_recovers_from_transient_failure() {
        let gw = ScriptedGateway::default().with("a", vec![ScriptEntry::Status(503), ScriptEntry::text("GOOD: ok")]);
        let r = RetryingGateway::new(&gw, BackoffPolicy::immediate(3));
        assert_eq!(r.complete(&req("a")).unwrap(), "GOOD: ok");
        assert_eq!(gw.calls("a"), 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let gw = ScriptedGateway::default().with("a", vec![ScriptEntry::Status(400)]);
        let r = RetryingGateway::new(&gw, BackoffPolicy::immediate(3));
        assert!(r.complete(&req("a")).is_err());
        assert_eq!(gw.calls("a"), 1);
    }

    #[test]
    fn backoff_grows_geometrically() {
        let p = BackoffPolicy { jitter: 0.0, ..Default::default() };
        assert_eq!(p.delay(0), Duration::from_secs(1));
        assert_eq!(p.delay(3), Duration::from_secs(8));
        let j = BackoffPolicy::default();
        let d = j.delay(1);
        assert!(d >= Duration::from_secs(2) && d <= Duration::from_millis(2500));
    }
}
