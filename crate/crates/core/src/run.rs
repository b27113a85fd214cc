//! Persisted run documents and the edits serve mode applies to them.

use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::config::{AnchorSource, RunConfig};
use crate::counterfactual::{reaggregate, rescore_mcq, McqRun};
use crate::decomposer::build_tree;
use crate::error::{Error, Result};
use crate::inference::{infer, repropagate, InferenceContext};
use crate::model::{is_probability, Claim, EvidenceBank, TreeNode};
use crate::scorer::{make_anchor_summary, question_context};
use crate::Prob;

/// A single hypothesis scored against one bank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeRun {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub question: Option<String>,
    pub tree: TreeNode,
    pub root_prob: Prob,
    pub summary: String,
    pub config: RunConfig,
    pub bank: EvidenceBank,
    #[serde(default)]
    pub revision: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RunDocument {
    Tree(TreeRun),
    Mcq(McqRun),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EditError {
    #[error("no node `{0}` in this run")]
    UnknownNode(String),
    #[error("node `{0}` is not a leaf")]
    NotALeaf(String),
    #[error("score {0} outside [0, 1]")]
    ScoreOutOfRange(String),
}

async fn summary_for(
    question: Option<&str>,
    bank: &EvidenceBank,
    config: &RunConfig,
    backends: &Backends,
) -> Result<String> {
    match (config.anchor, question) {
        (AnchorSource::Question, Some(q)) => Ok(question_context(q)),
        _ => {
            let texts: Vec<String> = bank.factors.iter().map(|f| f.text.clone()).collect();
            make_anchor_summary(&texts, config.max_tokens, backends).await
        }
    }
}

/// Decomposes and scores one hypothesis. Without a question the anchor
/// summary is written from the bank.
pub async fn score_hypothesis(
    hypothesis: &str,
    question: Option<&str>,
    bank: EvidenceBank,
    config: &RunConfig,
    backends: &Backends,
) -> Result<TreeRun> {
    config.validate()?;
    let claim = Claim::new(hypothesis)?;
    let mut tree = build_tree(claim, config, backends)
        .await
        .map_err(|e| e.in_stage("decomposition"))?;
    let summary = summary_for(question, &bank, config, backends)
        .await
        .map_err(|e| e.in_stage("writing the anchor summary"))?;
    let ctx = InferenceContext {
        bank: &bank,
        summary: &summary,
        counterfactual: None,
        config,
        backends,
    };
    let root_prob = infer(&mut tree, &[], ctx).await.map_err(|e| e.in_stage("scoring"))?;
    Ok(TreeRun {
        question: question.map(str::to_string),
        tree,
        root_prob,
        summary,
        config: config.clone(),
        bank,
        revision: 0,
    })
}

impl RunDocument {
    pub fn from_json(text: &str) -> Result<Self> {
        let doc: RunDocument =
            serde_json::from_str(text).map_err(|e| Error::Document(format!("run document: {e}")))?;
        if let RunDocument::Mcq(run) = &doc {
            run.check()?;
        }
        Ok(doc)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run document serializes")
    }

    pub fn revision(&self) -> u64 {
        match self {
            RunDocument::Tree(r) => r.revision,
            RunDocument::Mcq(r) => r.revision,
        }
    }

    pub fn bump_revision(&mut self) {
        match self {
            RunDocument::Tree(r) => r.revision += 1,
            RunDocument::Mcq(r) => r.revision += 1,
        }
    }

    pub fn trees(&self) -> Vec<&TreeNode> {
        match self {
            RunDocument::Tree(r) => vec![&r.tree],
            RunDocument::Mcq(r) => r.trees.iter().collect(),
        }
    }

    fn find_mut(&mut self, node_id: &str) -> Option<&mut TreeNode> {
        match self {
            RunDocument::Tree(r) => r.tree.find_mut(node_id),
            RunDocument::Mcq(r) => r.trees.iter_mut().find_map(|t| t.find_mut(node_id)),
        }
    }

    /// Stores a human score on a leaf. The model trace is kept.
    pub fn set_leaf_score(&mut self, leaf_id: &str, score: f64) -> Result<(), EditError> {
        if !is_probability(score) {
            return Err(EditError::ScoreOutOfRange(score.to_string()));
        }
        let node = self
            .find_mut(leaf_id)
            .ok_or_else(|| EditError::UnknownNode(leaf_id.to_string()))?;
        if !node.is_leaf() {
            return Err(EditError::NotALeaf(leaf_id.to_string()));
        }
        node.human_score = Some(score);
        Ok(())
    }

    pub fn set_pruned(&mut self, node_id: &str, pruned: bool) -> Result<(), EditError> {
        self.find_mut(node_id)
            .ok_or_else(|| EditError::UnknownNode(node_id.to_string()))?
            .pruned = pruned;
        Ok(())
    }

    /// Recomputes propagated probabilities and aggregates from stored leaf
    /// scores without any backend call.
    pub fn repropagate(&mut self) -> Result<()> {
        match self {
            RunDocument::Tree(r) => {
                r.root_prob = repropagate(&mut r.tree)?;
                Ok(())
            }
            RunDocument::Mcq(r) => reaggregate(r),
        }
    }

    /// Re-runs scoring through the backends on the stored trees and bank.
    pub async fn rescore(&mut self, backends: &Backends) -> Result<()> {
        match self {
            RunDocument::Tree(r) => {
                let summary = summary_for(r.question.as_deref(), &r.bank, &r.config, backends).await?;
                let ctx = InferenceContext {
                    bank: &r.bank,
                    summary: &summary,
                    counterfactual: None,
                    config: &r.config,
                    backends,
                };
                r.root_prob = infer(&mut r.tree, &[], ctx).await?;
                r.summary = summary;
                Ok(())
            }
            RunDocument::Mcq(r) => rescore_mcq(r, backends).await,
        }
    }

    pub fn config(&self) -> &RunConfig {
        match self {
            RunDocument::Tree(r) => &r.config,
            RunDocument::Mcq(r) => &r.config,
        }
    }
}
