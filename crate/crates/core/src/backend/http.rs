use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde::Deserialize;

use super::{check_count, BackendError, ChatBackend, ChatRequest, CHAT_COMPLETIONS_PATH};

pub const API_KEY_ENV: &str = "DERA_API_KEY";
pub const BASE_URL_ENV: &str = "DERA_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";

/// Exponential backoff over a fixed number of attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    /// Delay after the given 1-based failed attempt.
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let factor = 1u32.checked_shl(attempt.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base_delay.saturating_mul(factor).min(self.max_delay)
    }
}

/// Token bucket shared by every worker that talks to the same endpoint.
#[derive(Debug)]
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        assert!(capacity > 0 && refill_per_sec > 0.0, "token bucket needs positive capacity and rate");
        Self {
            capacity: f64::from(capacity),
            refill_per_sec,
            state: Mutex::new((f64::from(capacity), Instant::now())),
        }
    }

    pub fn per_minute(requests: u32) -> Self {
        Self::new(requests.max(1), f64::from(requests.max(1)) / 60.0)
    }

    /// Blocks until a token is available, then takes it.
    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut state = self.state.lock().unwrap();
                let now = Instant::now();
                let elapsed = now.duration_since(state.1).as_secs_f64();
                state.0 = (state.0 + elapsed * self.refill_per_sec).min(self.capacity);
                state.1 = now;
                if state.0 >= 1.0 {
                    state.0 -= 1.0;
                    return;
                }
                Duration::from_secs_f64((1.0 - state.0) / self.refill_per_sec)
            };
            thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
    pub rate_limit: Option<Arc<TokenBucket>>,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_BASE_URL.to_string(),
            api_key: None,
            timeout: Duration::from_secs(120),
            retry: RetryPolicy::default(),
            rate_limit: None,
        }
    }
}

impl HttpConfig {
    /// Defaults, with base URL and API key taken from the environment when set.
    pub fn from_env() -> Self {
        let mut config = Self::default();
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                config.base_url = url;
            }
        }
        config.api_key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty());
        config
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    #[serde(default)]
    index: Option<usize>,
    message: WireReply,
}

#[derive(Deserialize)]
struct WireReply {
    content: Option<String>,
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

/// Blocking client for an OpenAI-compatible `/v1/chat/completions` endpoint.
pub struct HttpBackend {
    agent: ureq::Agent,
    url: String,
    config: HttpConfig,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let agent_config = ureq::Agent::config_builder()
            .timeout_global(Some(config.timeout))
            .http_status_as_error(false)
            .build();
        Self {
            agent: ureq::Agent::new_with_config(agent_config),
            url: format!("{}{}", config.base_url.trim_end_matches('/'), CHAT_COMPLETIONS_PATH),
            config,
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    fn attempt(&self, body: &str) -> Result<Vec<String>, Attempt> {
        let mut req = self.agent.post(&self.url).content_type("application/json");
        if let Some(key) = &self.config.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("status {status}: {text}")));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(BackendError::Rejected { status, body: text }));
        }
        parse_choices(&text).map_err(Attempt::Fatal)
    }
}

fn parse_choices(text: &str) -> Result<Vec<String>, BackendError> {
    let parsed: WireResponse = serde_json::from_str(text).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
    let mut choices: Vec<(usize, String)> = parsed
        .choices
        .into_iter()
        .enumerate()
        .map(|(pos, c)| {
            c.message
                .content
                .map(|content| (c.index.unwrap_or(pos), content))
                .ok_or_else(|| BackendError::MalformedResponse(format!("choice {pos} has no content")))
        })
        .collect::<Result<_, _>>()?;
    choices.sort_by_key(|(i, _)| *i);
    Ok(choices.into_iter().map(|(_, c)| c).collect())
}

impl ChatBackend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, BackendError> {
        request.validate()?;
        let body = request.to_wire_json();
        let attempts = self.config.retry.max_attempts.max(1);
        let mut last_error = String::new();
        for attempt in 1..=attempts {
            if let Some(bucket) = &self.config.rate_limit {
                bucket.acquire();
            }
            match self.attempt(&body) {
                Ok(completions) => return check_count(request, completions),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    last_error = msg;
                    if attempt < attempts {
                        thread::sleep(self.config.retry.delay_after(attempt));
                    }
                }
            }
        }
        Err(BackendError::BackendUnavailable { attempts, last_error })
    }
}
