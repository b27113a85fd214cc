use std::path::Path;
use std::time::Duration;

use async_trait::async_trait;
use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::lexical::check_pair;
use super::{BackendError, ChatBackend, ChatRequest, EntailmentBackend, RelevanceBackend};

fn transport(e: reqwest::Error) -> BackendError {
    BackendError::Transport(e.to_string())
}

fn client() -> reqwest::Client {
    reqwest::Client::builder()
        .timeout(Duration::from_secs(120))
        .build()
        .expect("http client")
}

/// Chat-completion client: one user message, optional image parts.
#[derive(Debug, Clone)]
pub struct HttpChat {
    client: reqwest::Client,
    base_url: String,
    model: String,
    token: Option<String>,
    retries: usize,
}

impl HttpChat {
    pub fn new(base_url: &str, model: &str, token: Option<String>) -> Self {
        HttpChat {
            client: client(),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            token,
            retries: 2,
        }
    }

    pub fn with_retries(mut self, retries: usize) -> Self {
        self.retries = retries;
        self
    }

    fn body(&self, request: &ChatRequest) -> Result<Value, BackendError> {
        let content = if request.image_refs.is_empty() {
            Value::String(request.prompt.clone())
        } else {
            let mut parts = vec![json!({"type": "text", "text": request.prompt})];
            for r in &request.image_refs {
                parts.push(json!({"type": "image_url", "image_url": {"url": image_url(r)?}}));
            }
            Value::Array(parts)
        };
        Ok(json!({
            "model": self.model,
            "messages": [{"role": "user", "content": content}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }))
    }

    async fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .json(body);
        if let Some(token) = &self.token {
            req = req.bearer_auth(token);
        }
        let resp = req.send().await.map_err(transport)?;
        let status = resp.status();
        if status.is_server_error() || status.as_u16() == 429 {
            return Err(BackendError::Transport(format!("server returned {status}")));
        }
        if !status.is_success() {
            let text = resp.text().await.unwrap_or_default();
            return Err(BackendError::Response(format!("{status}: {text}")));
        }
        let value: Value = resp.json().await.map_err(transport)?;
        value["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| BackendError::Response("missing choices[0].message.content".into()))
    }
}

/// Local files are inlined as base64 data URLs; anything else is passed on.
fn image_url(reference: &str) -> Result<String, BackendError> {
    if reference.starts_with("http://")
        || reference.starts_with("https://")
        || reference.starts_with("data:")
    {
        return Ok(reference.to_string());
    }
    let path = Path::new(reference);
    if !path.is_file() {
        return Ok(reference.to_string());
    }
    let bytes = std::fs::read(path)
        .map_err(|e| BackendError::InvalidInput(format!("{reference}: {e}")))?;
    let mime = match path.extension().and_then(|e| e.to_str()).map(str::to_lowercase) {
        Some(e) if e == "png" => "image/png",
        Some(e) if e == "webp" => "image/webp",
        Some(e) if e == "gif" => "image/gif",
        _ => "image/jpeg",
    };
    let data = base64::engine::general_purpose::STANDARD.encode(bytes);
    Ok(format!("data:{mime};base64,{data}"))
}

#[async_trait]
impl ChatBackend for HttpChat {
    async fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if request.prompt.trim().is_empty() {
            return Err(BackendError::InvalidInput("empty prompt".into()));
        }
        let body = self.body(request)?;
        let mut last = None;
        for attempt in 0..=self.retries {
            if attempt > 0 {
                tokio::time::sleep(Duration::from_millis(250 << attempt.min(4))).await;
            }
            match self.attempt(&body).await {
                Err(e) if e.is_retryable() => {
                    tracing::warn!(attempt, error = %e, "chat request failed");
                    last = Some(e);
                }
                other => return other,
            }
        }
        Err(last.expect("at least one attempt"))
    }
}

#[derive(Debug, Serialize)]
struct ScoreRequest<'a> {
    query: &'a str,
    candidates: &'a [String],
}

#[derive(Debug, Deserialize)]
struct ScoreResponse {
    scores: Vec<f64>,
}

/// Client for a scoring service exposing `POST /relevance` and
/// `POST /entailment`, both taking `{query, candidates}` and returning
/// `{scores}`.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    client: reqwest::Client,
    base_url: String,
}

impl HttpScorer {
    pub fn new(base_url: &str) -> Self {
        HttpScorer {
            client: client(),
            base_url: base_url.trim_end_matches('/').to_string(),
        }
    }

    async fn score(&self, route: &str, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        let resp = self
            .client
            .post(format!("{}/{route}", self.base_url))
            .json(&ScoreRequest { query, candidates })
            .send()
            .await
            .map_err(transport)?;
        if !resp.status().is_success() {
            return Err(BackendError::Transport(format!("server returned {}", resp.status())));
        }
        let parsed: ScoreResponse = resp.json().await.map_err(transport)?;
        if parsed.scores.len() != candidates.len() {
            return Err(BackendError::Response(format!(
                "expected {} scores, got {}",
                candidates.len(),
                parsed.scores.len()
            )));
        }
        Ok(parsed.scores)
    }
}

#[async_trait]
impl RelevanceBackend for HttpScorer {
    async fn relevance(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::InvalidInput("empty candidate list".into()));
        }
        self.score("relevance", query, candidates).await
    }
}

#[async_trait]
impl EntailmentBackend for HttpScorer {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        check_pair(premise, hypothesis)?;
        let scores = self
            .score("entailment", premise, &[hypothesis.to_string()])
            .await?;
        let p = scores[0];
        if !(0.0..=1.0).contains(&p) {
            return Err(BackendError::Response(format!("entailment {p} outside [0, 1]")));
        }
        Ok(p)
    }
}
