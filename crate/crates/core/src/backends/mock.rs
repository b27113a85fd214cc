//! Scripted backend for tests and offline fixtures.
//!
//! A script maps prompts to responses. Entries keyed by the SHA-256 of the
//! full prompt (or the literal prompt) are checked first; `contains` rules
//! match when every listed fragment occurs in the prompt and are tried in
//! file order. Relevance and entailment tables are exact-string keyed, with
//! lexical overlap and reflexive entailment as fallbacks.

use std::collections::HashMap;
use std::path::Path;

use async_trait::async_trait;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::lexical::{check_pair, lexical_relevance};
use super::{BackendError, ChatBackend, ChatRequest, EntailmentBackend, RelevanceBackend};
use crate::error::{Error, Result};

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ChatRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    pub response: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceRule {
    pub query: String,
    pub candidate: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntailmentRule {
    pub premise: String,
    pub hypothesis: String,
    pub score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub chat: Vec<ChatRule>,
    #[serde(default)]
    pub relevance: Vec<RelevanceRule>,
    #[serde(default)]
    pub entailment: Vec<EntailmentRule>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("mock script {}: {e}", path.display())))
    }

    /// Scripts an exact prompt.
    pub fn on_prompt(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.chat.push(ChatRule {
            prompt: Some(prompt.into()),
            response: response.into(),
            ..ChatRule::default()
        });
        self
    }

    /// Scripts every prompt containing all of `fragments`.
    pub fn on_contains<I, S>(mut self, fragments: I, response: impl Into<String>) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.chat.push(ChatRule {
            contains: fragments.into_iter().map(Into::into).collect(),
            response: response.into(),
            ..ChatRule::default()
        });
        self
    }

    pub fn relevance(mut self, query: &str, candidate: &str, score: f64) -> Self {
        self.relevance.push(RelevanceRule {
            query: query.into(),
            candidate: candidate.into(),
            score,
        });
        self
    }

    pub fn entails(mut self, premise: &str, hypothesis: &str, score: f64) -> Self {
        self.entailment.push(EntailmentRule {
            premise: premise.into(),
            hypothesis: hypothesis.into(),
            score,
        });
        self
    }
}

/// Pure, lock-free scripted backend.
#[derive(Debug, Clone, Default)]
pub struct MockBackend {
    exact: HashMap<String, String>,
    contains: Vec<(Vec<String>, String)>,
    relevance: HashMap<(String, String), f64>,
    entailment: HashMap<(String, String), f64>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let mut backend = MockBackend::default();
        for rule in script.chat {
            if let Some(h) = rule.prompt_sha256 {
                backend.exact.insert(h.to_lowercase(), rule.response);
            } else if let Some(p) = rule.prompt {
                backend.exact.insert(prompt_hash(&p), rule.response);
            } else {
                backend.contains.push((rule.contains, rule.response));
            }
        }
        for r in script.relevance {
            backend.relevance.insert((r.query, r.candidate), r.score);
        }
        for r in script.entailment {
            backend.entailment.insert((r.premise, r.hypothesis), r.score);
        }
        backend
    }

    fn lookup(&self, prompt: &str) -> Option<&str> {
        let hash = prompt_hash(prompt);
        if let Some(r) = self.exact.get(&hash) {
            return Some(r);
        }
        self.contains
            .iter()
            .find(|(frags, _)| frags.iter().all(|f| prompt.contains(f.as_str())))
            .map(|(_, r)| r.as_str())
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    async fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if request.prompt.trim().is_empty() {
            return Err(BackendError::InvalidInput("empty prompt".into()));
        }
        self.lookup(&request.prompt)
            .map(str::to_string)
            .ok_or_else(|| {
                let chars: Vec<char> = request.prompt.trim_end().chars().collect();
                let tail: String = chars[chars.len().saturating_sub(160)..].iter().collect();
                BackendError::ScriptMiss {
                    hash: prompt_hash(&request.prompt),
                    tail: tail.replace('\n', "⏎"),
                }
            })
    }
}

#[async_trait]
impl RelevanceBackend for MockBackend {
    async fn relevance(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::InvalidInput("empty candidate list".into()));
        }
        Ok(candidates
            .iter()
            .map(|c| {
                self.relevance
                    .get(&(query.to_string(), c.clone()))
                    .copied()
                    .unwrap_or_else(|| lexical_relevance(query, c))
            })
            .collect())
    }
}

#[async_trait]
impl EntailmentBackend for MockBackend {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        check_pair(premise, hypothesis)?;
        if let Some(s) = self
            .entailment
            .get(&(premise.to_string(), hypothesis.to_string()))
        {
            return Ok(*s);
        }
        Ok(if premise.trim() == hypothesis.trim() {
            1.0
        } else {
            0.0
        })
    }
}
