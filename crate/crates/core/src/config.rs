//! Run configuration. Field aliases follow the short experiment-table column
//! names (`vb`, `db`, `fs`, `dm`, `em`, `te`, `el`, `ag`) so each experiment
//! setup is one small TOML file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::BackendSpec;
use crate::error::{Error, Result};
use crate::evidence::FrameSamplingParams;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceLevel {
    /// Extraction is contextualized by the question.
    #[default]
    Base,
    /// Extraction is contextualized by the leaf sub-claims.
    Leaf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Aggregation {
    Product,
    #[default]
    Mean,
    Judge,
    /// Geometric mean over the live leaves.
    Geometric,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoringMode {
    /// One call elicits the anchor and every adjustment.
    #[default]
    Single,
    /// One call per evidence item, feeding the trace so far back in.
    Iterative,
}

/// Which sibling is conditioned on which during propagation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditioningOrder {
    /// Child `i` is conditioned on children `i+1..n`.
    #[default]
    OnLaterSiblings,
    /// Child `i` is conditioned on children `0..i`.
    OnEarlierSiblings,
}

/// Where the ORIGINAL DESCRIPTION slot of the scoring prompt comes from.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSource {
    /// "someone is asking the question, ..."
    #[default]
    Question,
    /// Model-written summary of the evidence bank.
    Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    #[serde(alias = "vb")]
    pub vision_backend: String,
    #[serde(alias = "db")]
    pub decomposition_backend: String,
    pub relevance_backend: String,
    pub entailment_backend: String,
    #[serde(alias = "fs")]
    pub frame_sampling: FrameSamplingParams<f64>,
    #[serde(alias = "dm")]
    pub decomposition_max: usize,
    #[serde(alias = "em")]
    pub evidence_max: usize,
    #[serde(alias = "te")]
    pub temporal_enhancement: bool,
    #[serde(alias = "el")]
    pub evidence_level: EvidenceLevel,
    #[serde(alias = "ag")]
    pub aggregation: Aggregation,
    pub anchor: AnchorSource,
    pub scoring_mode: ScoringMode,
    pub conditioning: ConditioningOrder,
    /// Entailment threshold for pruning shared leaves.
    pub tau: f64,
    /// Rescaling triggers when every option scores below this.
    pub theta: f64,
    /// Extra evidence rounds allowed; zero disables rescaling.
    pub rescale_rounds: usize,
    pub window: usize,
    pub stride: usize,
    pub max_tokens: u32,
    /// Shell command template with `{uri}`, `{t}` and `{out}` slots. Without
    /// one, frames are referenced as `uri#t=<seconds>`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frame_grabber: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            vision_backend: "mock".into(),
            decomposition_backend: "mock".into(),
            relevance_backend: "lexical".into(),
            entailment_backend: "exact".into(),
            frame_sampling: FrameSamplingParams::default(),
            decomposition_max: 3,
            evidence_max: 3,
            temporal_enhancement: false,
            evidence_level: EvidenceLevel::Base,
            aggregation: Aggregation::Mean,
            anchor: AnchorSource::Question,
            scoring_mode: ScoringMode::Single,
            conditioning: ConditioningOrder::OnLaterSiblings,
            tau: 0.9,
            theta: 0.5,
            rescale_rounds: 1,
            window: 8,
            stride: 4,
            max_tokens: 1024,
            frame_grabber: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        self.frame_sampling.validate()?;
        if self.decomposition_max < 1 {
            return fail("decomposition_max must be at least 1".into());
        }
        if self.evidence_max < 1 {
            return fail("evidence_max must be at least 1".into());
        }
        if self.window < 1 || self.stride < 1 || self.stride > self.window {
            return fail(format!(
                "window/stride must satisfy 1 <= stride <= window, got {}/{}",
                self.window, self.stride
            ));
        }
        for (name, v) in [("tau", self.tau), ("theta", self.theta)] {
            if !(0.0..=1.0).contains(&v) {
                return fail(format!("{name} = {v} outside [0, 1]"));
            }
        }
        Ok(())
    }
}

/// On-disk configuration: run settings plus named backend definitions.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(flatten)]
    pub run: RunConfig,
    #[serde(default)]
    pub backends: BTreeMap<String, BackendSpec>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let file: ConfigFile = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.run.validate()?;
        Ok(file)
    }

    /// Loads a config, resolving relative script paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for spec in file.backends.values_mut() {
            spec.resolve_paths(base);
        }
        Ok(file)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn short_column_names_parse() {
        let cfg = ConfigFile::parse(
            r#"
            vb = "molmo"
            db = "gpt"
            dm = 3
            em = 3
            te = true
            el = "leaf"
            ag = "judge"
            fs = { k1 = 1, k2 = 6, k3 = 10, m1 = 3.0, m2 = 20.0, m3 = 40.0 }
            "#,
        )
        .unwrap();
        assert_eq!(cfg.run.vision_backend, "molmo");
        assert_eq!(cfg.run.decomposition_backend, "gpt");
        assert!(cfg.run.temporal_enhancement);
        assert_eq!(cfg.run.evidence_level, EvidenceLevel::Leaf);
        assert_eq!(cfg.run.aggregation, Aggregation::Judge);
        assert_eq!(cfg.run.tau, 0.9);
    }

    #[test]
    fn bad_frame_params_rejected() {
        let err = ConfigFile::parse("fs = { k1 = 6, k2 = 1, k3 = 10, m1 = 3.0, m2 = 20.0, m3 = 40.0 }");
        assert!(err.is_err());
        assert!(ConfigFile::parse("em = 0").is_err());
        assert!(ConfigFile::parse("window = 4\nstride = 6").is_err());
        assert!(ConfigFile::parse("tau = 1.5").is_err());
    }
}
