//! Model capability interfaces and their registry.
//!
//! Every model call in the engine goes through one of three traits:
//! [`ChatBackend`] (text and vision prompts), [`RelevanceBackend`] (query vs.
//! candidate scoring) and [`EntailmentBackend`] (premise vs. hypothesis).
//! Implementations are looked up by name from a [`BackendRegistry`] and bound
//! to roles for a run as [`Backends`].

mod http;
mod lexical;
mod mock;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::RunConfig;
use crate::error::{Error, Result};

pub use http::{HttpChat, HttpScorer};
pub use lexical::{lexical_relevance, tokens, ExactEntailment, LexicalRelevance};
pub use mock::{prompt_hash, ChatRule, EntailmentRule, MockBackend, MockScript, RelevanceRule};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BackendError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("no scripted response for prompt {hash} (…{tail})")]
    ScriptMiss { hash: String, tail: String },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("malformed backend response: {0}")]
    Response(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub image_refs: Vec<String>,
    #[serde(default)]
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        ChatRequest {
            prompt: prompt.into(),
            image_refs: Vec::new(),
            temperature: 0.0,
            max_tokens: 1024,
        }
    }

    pub fn with_images(mut self, refs: Vec<String>) -> Self {
        self.image_refs = refs;
        self
    }

    pub fn with_max_tokens(mut self, max_tokens: u32) -> Self {
        self.max_tokens = max_tokens;
        self
    }
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

#[async_trait]
pub trait RelevanceBackend: Send + Sync {
    /// One score per candidate, order-aligned; higher is more relevant.
    async fn relevance(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError>;
}

#[async_trait]
pub trait EntailmentBackend: Send + Sync {
    /// Probability that `premise` entails `hypothesis`.
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError>;
}

/// Named backend definition from a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BackendSpec {
    /// Scripted responses; serves chat, relevance and entailment.
    Mock {
        #[serde(default)]
        script: Option<PathBuf>,
    },
    /// Chat-completion endpoint.
    Http {
        base_url: String,
        model: String,
        #[serde(default = "default_token_env")]
        token_env: String,
        #[serde(default = "default_retries")]
        retries: usize,
    },
    /// Relevance and entailment scoring endpoint.
    ScoringHttp { base_url: String },
}

fn default_token_env() -> String {
    "BONSAI_API_TOKEN".into()
}

fn default_retries() -> usize {
    2
}

impl BackendSpec {
    pub(crate) fn resolve_paths(&mut self, base: &Path) {
        if let BackendSpec::Mock {
            script: Some(path),
        } = self
        {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
    }
}

/// Role-bound backends for one run.
#[derive(Clone)]
pub struct Backends {
    pub chat: Arc<dyn ChatBackend>,
    pub vision: Arc<dyn ChatBackend>,
    pub relevance: Arc<dyn RelevanceBackend>,
    pub entailment: Arc<dyn EntailmentBackend>,
}

impl Backends {
    /// Binds every role to the same mock.
    pub fn mock(script: MockScript) -> Self {
        let mock = Arc::new(MockBackend::new(script));
        Backends {
            chat: mock.clone(),
            vision: mock.clone(),
            relevance: mock.clone(),
            entailment: mock,
        }
    }
}

#[derive(Clone, Default)]
pub struct BackendRegistry {
    chat: BTreeMap<String, Arc<dyn ChatBackend>>,
    relevance: BTreeMap<String, Arc<dyn RelevanceBackend>>,
    entailment: BTreeMap<String, Arc<dyn EntailmentBackend>>,
}

impl BackendRegistry {
    /// Registry holding only the built-in `lexical` relevance scorer and the
    /// `exact` entailment rule.
    pub fn new() -> Self {
        let mut reg = BackendRegistry::default();
        reg.relevance
            .insert("lexical".into(), Arc::new(LexicalRelevance));
        reg.entailment
            .insert("exact".into(), Arc::new(ExactEntailment));
        reg
    }

    /// Built-ins plus a mock registered as `mock` for every role.
    pub fn with_mock(script: MockScript) -> Self {
        let mut reg = Self::new();
        reg.register_mock("mock", Arc::new(MockBackend::new(script)));
        reg
    }

    pub fn from_specs(specs: &BTreeMap<String, BackendSpec>) -> Result<Self> {
        let mut reg = Self::new();
        for (name, spec) in specs {
            match spec {
                BackendSpec::Mock { script } => {
                    let script = match script {
                        Some(path) => MockScript::load(path)?,
                        None => MockScript::default(),
                    };
                    reg.register_mock(name, Arc::new(MockBackend::new(script)));
                }
                BackendSpec::Http {
                    base_url,
                    model,
                    token_env,
                    retries,
                } => {
                    let token = std::env::var(token_env).ok();
                    let chat = HttpChat::new(base_url, model, token).with_retries(*retries);
                    reg.register_chat(name, Arc::new(chat));
                }
                BackendSpec::ScoringHttp { base_url } => {
                    let scorer = Arc::new(HttpScorer::new(base_url));
                    reg.register_relevance(name, scorer.clone());
                    reg.register_entailment(name, scorer);
                }
            }
        }
        Ok(reg)
    }

    pub fn register_chat(&mut self, name: impl Into<String>, b: Arc<dyn ChatBackend>) {
        self.chat.insert(name.into(), b);
    }

    pub fn register_relevance(&mut self, name: impl Into<String>, b: Arc<dyn RelevanceBackend>) {
        self.relevance.insert(name.into(), b);
    }

    pub fn register_entailment(&mut self, name: impl Into<String>, b: Arc<dyn EntailmentBackend>) {
        self.entailment.insert(name.into(), b);
    }

    pub fn register_mock(&mut self, name: &str, mock: Arc<MockBackend>) {
        self.register_chat(name, mock.clone());
        self.register_relevance(name, mock.clone());
        self.register_entailment(name, mock);
    }

    pub fn resolve(&self, config: &RunConfig) -> Result<Backends> {
        fn get<T: ?Sized>(
            map: &BTreeMap<String, Arc<T>>,
            role: &str,
            name: &str,
        ) -> Result<Arc<T>> {
            map.get(name).cloned().ok_or_else(|| {
                Error::Config(format!("no {role} backend named `{name}` is registered"))
            })
        }
        Ok(Backends {
            chat: get(&self.chat, "chat", &config.decomposition_backend)?,
            vision: get(&self.chat, "vision", &config.vision_backend)?,
            relevance: get(&self.relevance, "relevance", &config.relevance_backend)?,
            entailment: get(&self.entailment, "entailment", &config.entailment_backend)?,
        })
    }
}

/// Counts calls and fails every one of them. Stands in for "no backend
/// traffic allowed".
#[derive(Debug, Default)]
pub struct FailingBackend {
    calls: AtomicUsize,
}

impl FailingBackend {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn hit(&self) -> BackendError {
        self.calls.fetch_add(1, Ordering::SeqCst);
        BackendError::Transport("failing backend called".into())
    }

    pub fn backends(self: &Arc<Self>) -> Backends {
        Backends {
            chat: self.clone(),
            vision: self.clone(),
            relevance: self.clone(),
            entailment: self.clone(),
        }
    }
}

#[async_trait]
impl ChatBackend for FailingBackend {
    async fn complete(&self, _: &ChatRequest) -> Result<String, BackendError> {
        Err(self.hit())
    }
}

#[async_trait]
impl RelevanceBackend for FailingBackend {
    async fn relevance(&self, _: &str, _: &[String]) -> Result<Vec<f64>, BackendError> {
        Err(self.hit())
    }
}

#[async_trait]
impl EntailmentBackend for FailingBackend {
    async fn entailment(&self, _: &str, _: &str) -> Result<f64, BackendError> {
        Err(self.hit())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mock_registry_resolves_all_roles() {
        let reg = BackendRegistry::with_mock(MockScript::default());
        let cfg = RunConfig {
            relevance_backend: "mock".into(),
            entailment_backend: "mock".into(),
            ..RunConfig::default()
        };
        assert!(reg.resolve(&cfg).is_ok());
        assert!(reg.resolve(&RunConfig::default()).is_ok());
    }

    #[test]
    fn unknown_name_fails() {
        let reg = BackendRegistry::new();
        let err = reg.resolve(&RunConfig::default()).err().unwrap();
        assert!(err.to_string().contains("chat backend named `mock`"));
    }

    #[test]
    fn spec_parses_from_toml() {
        let specs: BTreeMap<String, BackendSpec> = toml::from_str(
            r#"
            [gpt]
            kind = "http"
            base_url = "http://localhost:9/v1"
            model = "gpt-4o"
            [xenc]
            kind = "scoring-http"
            base_url = "http://localhost:9"
            "#,
        )
        .unwrap();
        let reg = BackendRegistry::from_specs(&specs).unwrap();
        let cfg = RunConfig {
            vision_backend: "gpt".into(),
            decomposition_backend: "gpt".into(),
            relevance_backend: "xenc".into(),
            entailment_backend: "xenc".into(),
            ..RunConfig::default()
        };
        assert!(reg.resolve(&cfg).is_ok());
    }
}
