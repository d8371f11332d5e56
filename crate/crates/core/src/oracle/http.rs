//! Blocking HTTP client for OpenAI-compatible chat-completion endpoints:
//! bearer auth, bounded retries with exponential backoff, and a token-bucket
//! rate limiter per endpoint.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::Deserialize;

use crate::error::Error;
use crate::oracle::{ChatExchange, ChatRequest, Oracle};
use crate::Result;

#[derive(Debug, Clone, Copy)]
pub struct RateLimit {
    pub capacity: f64,
    pub refill_per_sec: f64,
}

#[derive(Debug, Clone)]
pub struct OracleEndpoint {
    pub base_url: String,
    pub model_name: String,
    pub auth_token: Option<String>,
    pub timeout: Duration,
    pub max_retries: u32,
    pub backoff_ms: u64,
    pub rate_limit: Option<RateLimit>,
}

impl OracleEndpoint {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> OracleEndpoint {
        OracleEndpoint {
            base_url: base_url.into(),
            model_name: model_name.into(),
            auth_token: None,
            timeout: Duration::from_secs(60),
            max_retries: 2,
            backoff_ms: 100,
            rate_limit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.timeout.is_zero() {
            return Err(Error::invalid("endpoint timeout must be positive"));
        }
        Ok(())
    }
}

struct TokenBucket {
    tokens: f64,
    last_refill: Instant,
}

/// OpenAI-compatible response shapes (only the fields the pipeline reads).
#[derive(Deserialize)]
struct ApiResponse {
    choices: Vec<ApiChoice>,
    #[serde(default)]
    usage: Option<ApiUsage>,
}

#[derive(Deserialize)]
struct ApiChoice {
    message: ApiMessage,
}

#[derive(Deserialize)]
struct ApiMessage {
    content: String,
}

#[derive(Deserialize, Default)]
struct ApiUsage {
    #[serde(default)]
    prompt_tokens: u32,
    #[serde(default)]
    completion_tokens: u32,
}

pub struct HttpOracle {
    endpoint: OracleEndpoint,
    client: reqwest::blocking::Client,
    bucket: Option<Mutex<TokenBucket>>,
}

impl HttpOracle {
    pub fn new(endpoint: OracleEndpoint) -> Result<HttpOracle> {
        endpoint.validate()?;
        let client = reqwest::blocking::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| Error::invalid(format!("http client: {e}")))?;
        let bucket = endpoint.rate_limit.map(|limit| {
            Mutex::new(TokenBucket {
                tokens: limit.capacity,
                last_refill: Instant::now(),
            })
        });
        Ok(HttpOracle {
            endpoint,
            client,
            bucket,
        })
    }

    fn acquire_slot(&self) {
        let Some(bucket) = &self.bucket else { return };
        let limit = self.endpoint.rate_limit.expect("bucket implies limit");
        loop {
            {
                let mut b = bucket.lock().expect("bucket lock");
                let elapsed = b.last_refill.elapsed().as_secs_f64();
                b.tokens = (b.tokens + elapsed * limit.refill_per_sec).min(limit.capacity);
                b.last_refill = Instant::now();
                if b.tokens >= 1.0 {
                    b.tokens -= 1.0;
                    return;
                }
            }
            std::thread::sleep(Duration::from_millis(5));
        }
    }

    fn completions_url(&self) -> String {
        format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        )
    }
}

impl Oracle for HttpOracle {
    fn id(&self) -> &str {
        &self.endpoint.model_name
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatExchange> {
        self.acquire_slot();
        let mut request = request.clone();
        if request.model.is_empty() {
            request.model = self.endpoint.model_name.clone();
        }

        let started = Instant::now();
        let mut last_failure = String::new();
        for attempt in 0..=self.endpoint.max_retries {
            if attempt > 0 {
                std::thread::sleep(Duration::from_millis(
                    self.endpoint.backoff_ms << (attempt - 1).min(8),
                ));
            }
            let mut call = self.client.post(self.completions_url()).json(&request);
            if let Some(token) = &self.endpoint.auth_token {
                call = call.bearer_auth(token);
            }
            match call.send() {
                Ok(resp) if resp.status().is_success() => {
                    let parsed: ApiResponse = resp
                        .json()
                        .map_err(|e| Error::Protocol(format!("malformed response body: {e}")))?;
                    let content = parsed
                        .choices
                        .first()
                        .map(|c| c.message.content.clone())
                        .unwrap_or_default();
                    if content.is_empty() {
                        return Err(Error::Protocol("empty completion content".into()));
                    }
                    let usage = parsed.usage.unwrap_or_default();
                    return Ok(ChatExchange {
                        request,
                        response: content,
                        latency_ms: started.elapsed().as_millis() as u64,
                        prompt_tokens: usage.prompt_tokens,
                        completion_tokens: usage.completion_tokens,
                        attempts: attempt + 1,
                    });
                }
                Ok(resp) => {
                    last_failure = format!("http status {}", resp.status());
                }
                Err(e) => {
                    last_failure = e.to_string();
                }
            }
        }
        Err(Error::Transport {
            attempts: self.endpoint.max_retries + 1,
            reason: last_failure,
        })
    }
}
