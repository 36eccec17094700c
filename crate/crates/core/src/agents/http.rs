use super::{ChatRequest, Provider, ProviderError};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

/// Settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub base_url: String,
    pub model: String,
    pub temperature: f64,
    pub timeout_secs: f64,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub max_in_flight: usize,
    /// Requests started per second, 0 for no limit.
    pub rate_per_sec: f64,
    pub attempts: u32,
    pub backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        HttpConfig {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o-mini".into(),
            temperature: 0.7,
            timeout_secs: 120.0,
            api_key: None,
            max_in_flight: 4,
            rate_per_sec: 0.0,
            attempts: 3,
            backoff_ms: 500,
        }
    }
}

impl fmt::Debug for HttpConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HttpConfig")
            .field("base_url", &self.base_url)
            .field("model", &self.model)
            .field("temperature", &self.temperature)
            .field("timeout_secs", &self.timeout_secs)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("max_in_flight", &self.max_in_flight)
            .field("rate_per_sec", &self.rate_per_sec)
            .field("attempts", &self.attempts)
            .field("backoff_ms", &self.backoff_ms)
            .finish()
    }
}

impl HttpConfig {
    /// Fills the key, and overrides base URL and model, from `DHEVO_API_KEY`,
    /// `DHEVO_API_BASE` and `DHEVO_MODEL`.
    pub fn with_env(mut self) -> Self {
        if let Ok(k) = std::env::var("DHEVO_API_KEY") {
            if !k.is_empty() {
                self.api_key = Some(k);
            }
        }
        if let Ok(b) = std::env::var("DHEVO_API_BASE") {
            if !b.is_empty() {
                self.base_url = b;
            }
        }
        if let Ok(m) = std::env::var("DHEVO_MODEL") {
            if !m.is_empty() {
                self.model = m;
            }
        }
        self
    }
}

struct Gate {
    in_flight: usize,
    next_start: Instant,
}

pub struct HttpProvider {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: Mutex<Gate>,
    freed: Condvar,
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 2],
    temperature: f64,
}

#[derive(Deserialize)]
struct Reply {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

enum Attempt {
    Done(String),
    Retry(ProviderError),
    Fail(ProviderError),
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

impl HttpProvider {
    pub fn new(config: HttpConfig) -> Result<Self, ProviderError> {
        if config.api_key.as_deref().is_none_or(str::is_empty) {
            return Err(ProviderError::MissingKey);
        }
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs.max(0.001))))
            .build()
            .new_agent();
        Ok(HttpProvider {
            config,
            agent,
            gate: Mutex::new(Gate { in_flight: 0, next_start: Instant::now() }),
            freed: Condvar::new(),
        })
    }

    pub fn config(&self) -> &HttpConfig {
        &self.config
    }

    fn redact(&self, s: String) -> String {
        match self.config.api_key.as_deref() {
            Some(k) if !k.is_empty() => s.replace(k, "<redacted>"),
            _ => s,
        }
    }

    fn acquire(&self) {
        let mut g = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        while g.in_flight >= self.config.max_in_flight.max(1) {
            g = self.freed.wait(g).unwrap_or_else(|e| e.into_inner());
        }
        g.in_flight += 1;
        if self.config.rate_per_sec > 0.0 {
            let now = Instant::now();
            let start = g.next_start.max(now);
            g.next_start = start + Duration::from_secs_f64(1.0 / self.config.rate_per_sec);
            drop(g);
            std::thread::sleep(start - now);
        }
    }

    fn release(&self) {
        let mut g = self.gate.lock().unwrap_or_else(|e| e.into_inner());
        g.in_flight -= 1;
        self.freed.notify_one();
    }

    fn attempt(&self, body: &str) -> Attempt {
        let url = format!("{}/chat/completions", self.config.base_url.trim_end_matches('/'));
        let key = self.config.api_key.as_deref().unwrap_or_default();
        let sent = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {key}"))
            .header("Content-Type", "application/json")
            .send(body);
        let mut resp = match sent {
            Ok(r) => r,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(ProviderError::Timeout),
            Err(e) => return Attempt::Retry(ProviderError::Transport(self.redact(e.to_string()))),
        };
        let status = resp.status().as_u16();
        let text = match resp.body_mut().read_to_string() {
            Ok(t) => t,
            Err(ureq::Error::Timeout(_)) => return Attempt::Retry(ProviderError::Timeout),
            Err(e) => return Attempt::Retry(ProviderError::Transport(self.redact(e.to_string()))),
        };
        let text = self.redact(text);
        match status {
            200..=299 => match serde_json::from_str::<Reply>(&text) {
                Ok(r) => match r.choices.into_iter().next().and_then(|c| c.message.content) {
                    Some(c) => Attempt::Done(c),
                    None => Attempt::Fail(ProviderError::Http { status, snippet: snippet(&text) }),
                },
                Err(_) => Attempt::Fail(ProviderError::Http { status, snippet: snippet(&text) }),
            },
            429 => Attempt::Retry(ProviderError::QuotaExceeded),
            401 | 403 => Attempt::Fail(ProviderError::Http { status, snippet: snippet(&text) }),
            500..=599 | 408 => Attempt::Retry(ProviderError::Http { status, snippet: snippet(&text) }),
            _ => Attempt::Fail(ProviderError::Http { status, snippet: snippet(&text) }),
        }
    }
}

impl Provider for HttpProvider {
    fn complete(&self, req: &ChatRequest<'_>) -> Result<String, ProviderError> {
        let body = serde_json::to_string(&Body {
            model: &self.config.model,
            messages: [
                Message { role: "system", content: req.system },
                Message { role: "user", content: req.user },
            ],
            temperature: self.config.temperature,
        })
        .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let attempts = self.config.attempts.max(1);
        let mut last = ProviderError::Transport("no attempt made".into());
        for i in 0..attempts {
            if i > 0 {
                let wait = self.config.backoff_ms.saturating_mul(1 << (i - 1).min(16));
                std::thread::sleep(Duration::from_millis(wait));
            }
            self.acquire();
            let outcome = self.attempt(&body);
            self.release();
            match outcome {
                Attempt::Done(s) => return Ok(s),
                Attempt::Fail(e) => return Err(e),
                Attempt::Retry(e) => {
                    log::warn!("{} attempt {} failed: {e}", self.describe(), i + 1);
                    last = e;
                }
            }
        }
        Err(last)
    }

    fn describe(&self) -> String {
        format!("http({}, {})", self.config.base_url, self.config.model)
    }
}
