//! Chat-completion client over HTTP with exponential-backoff retries.

use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use super::{ChatBackend, ChatRequest, LlmError};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "OPENAI_API_KEY";

const REQUEST_TIMEOUT: Duration = Duration::from_secs(300);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 3, base_delay: Duration::from_secs(1) }
    }
}

impl RetryPolicy {
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay * 2u32.saturating_pow(retry)
    }
}

pub struct HttpChat {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    retry: RetryPolicy,
}

impl HttpChat {
    pub fn new(endpoint: &str, api_key: Option<String>, retry: RetryPolicy) -> Result<HttpChat, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| LlmError::Config(format!("http client: {e}")))?;
        Ok(HttpChat { client, endpoint: endpoint.to_string(), api_key, retry })
    }

    /// Client whose key comes from [`API_KEY_ENV`], if set.
    pub fn from_env(endpoint: &str) -> Result<HttpChat, LlmError> {
        Self::new(endpoint, std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()), RetryPolicy::default())
    }

    fn attempt(&self, body: &Value) -> Result<String, (bool, Option<u16>, String)> {
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| (true, None, e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.as_u16() == 429 || status.is_server_error();
            let text = resp.text().unwrap_or_default();
            return Err((retryable, Some(status.as_u16()), format!("{status}: {}", text.trim())));
        }
        let v: Value = resp.json().map_err(|e| (false, Some(status.as_u16()), format!("bad JSON body: {e}")))?;
        v.pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| (false, Some(status.as_u16()), "response lacks choices[0].message.content".into()))
    }
}

impl ChatBackend for HttpChat {
    fn chat(&self, req: &ChatRequest) -> Result<String, LlmError> {
        let body = json!({
            "model": req.model,
            "messages": [{"role": "user", "content": req.prompt}],
            "temperature": req.temperature,
            "max_tokens": req.max_tokens,
        });
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err((retryable, status, message)) => {
                    let retry = attempts - 1;
                    if !retryable || retry >= self.retry.max_retries {
                        return Err(LlmError::Http { attempts, status, message });
                    }
                    let delay = self.retry.delay(retry);
                    log::warn!("{} request failed ({message}); retrying in {delay:?}", req.stage);
                    thread::sleep(delay);
                }
            }
        }
    }
}
