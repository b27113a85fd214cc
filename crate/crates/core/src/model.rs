//! Shared domain types: claims, decomposition trees, evidence banks and score
//! traces, plus their canonical JSON / JSON-lines forms.

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::Prob;

/// A natural-language statement. `atomic` is set when the decomposer declared
/// it no longer decomposable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Claim {
    pub text: String,
    #[serde(default)]
    pub atomic: bool,
}

impl Claim {
    pub fn new(text: impl AsRef<str>) -> Result<Self> {
        let text = text.as_ref().trim();
        if text.is_empty() {
            return Err(Error::Precondition("claim text is empty".into()));
        }
        Ok(Claim {
            text: text.to_string(),
            atomic: false,
        })
    }

    pub fn atomic(text: impl AsRef<str>) -> Result<Self> {
        Ok(Claim {
            atomic: true,
            ..Claim::new(text)?
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Modality {
    Text,
    Image,
    VideoFrame,
    Transcript,
}

impl Modality {
    /// Spans of temporal modalities are measured in seconds.
    pub fn is_temporal(self) -> bool {
        matches!(self, Modality::VideoFrame | Modality::Transcript)
    }
}

/// Location of an observation inside its grounding source. `start`/`end` are
/// line indices for text and seconds for temporal modalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpan {
    pub source_id: String,
    pub modality: Modality,
    pub start: f64,
    pub end: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp_label: Option<String>,
}

/// One natural-language observation drawn from a grounding source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceFactor {
    pub id: String,
    pub text: String,
    #[serde(flatten)]
    pub span: SourceSpan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relevance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceDescriptor {
    pub id: String,
    pub modality: Modality,
    #[serde(default)]
    pub uri: String,
    /// Line count for text, duration in seconds for temporal sources.
    #[serde(default)]
    pub length: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBank {
    pub factors: Vec<EvidenceFactor>,
    #[serde(default)]
    pub sources: Vec<SourceDescriptor>,
}

impl EvidenceBank {
    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    /// Checks factor ids are unique, texts non-empty and every span lies
    /// inside a declared source.
    pub fn check(&self) -> Vec<String> {
        let mut problems = Vec::new();
        let mut seen = HashSet::new();
        for f in &self.factors {
            if !seen.insert(f.id.as_str()) {
                problems.push(format!("duplicate factor id `{}`", f.id));
            }
            if f.text.trim().is_empty() {
                problems.push(format!("factor `{}` has empty text", f.id));
            }
            if !(0.0 <= f.span.start && f.span.start <= f.span.end) {
                problems.push(format!("factor `{}` has an inverted span", f.id));
            }
            match self.sources.iter().find(|s| s.id == f.span.source_id) {
                None => problems.push(format!(
                    "factor `{}` references unknown source `{}`",
                    f.id, f.span.source_id
                )),
                Some(s) if f.span.end > s.length => problems.push(format!(
                    "factor `{}` span ends at {} past source length {}",
                    f.id, f.span.end, s.length
                )),
                Some(_) => {}
            }
        }
        problems
    }

    /// One factor record per line.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for f in &self.factors {
            out.push_str(&serde_json::to_string(f).expect("factor serializes"));
            out.push('\n');
        }
        out
    }

    /// Parses a JSON-lines bank. Source descriptors are reconstructed from the
    /// factors, with each length set to the furthest span end seen.
    pub fn from_jsonl(text: &str) -> Result<Self> {
        let mut factors = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let factor: EvidenceFactor = serde_json::from_str(line)
                .map_err(|e| Error::Document(format!("bank line {}: {e}", i + 1)))?;
            factors.push(factor);
        }
        let mut sources: Vec<SourceDescriptor> = Vec::new();
        for f in &factors {
            match sources.iter_mut().find(|s| s.id == f.span.source_id) {
                Some(s) => s.length = s.length.max(f.span.end),
                None => sources.push(SourceDescriptor {
                    id: f.span.source_id.clone(),
                    modality: f.span.modality,
                    uri: String::new(),
                    length: f.span.end,
                }),
            }
        }
        Ok(EvidenceBank { factors, sources })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentStep {
    pub factor_id: String,
    pub explanation: String,
    pub score: Prob,
}

/// Anchor score followed by one adjustment per presented evidence item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTrace {
    pub anchor_explanation: String,
    pub anchor_score: Prob,
    pub steps: Vec<AdjustmentStep>,
    #[serde(rename = "final")]
    pub final_score: Prob,
}

impl ScoreTrace {
    pub fn new(anchor_explanation: String, anchor_score: Prob, steps: Vec<AdjustmentStep>) -> Self {
        let final_score = steps.last().map_or(anchor_score, |s| s.score);
        ScoreTrace {
            anchor_explanation,
            anchor_score,
            steps,
            final_score,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub id: String,
    pub claim: Claim,
    #[serde(default)]
    pub children: Vec<TreeNode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_trace: Option<ScoreTrace>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub propagated_prob: Option<Prob>,
    #[serde(default)]
    pub pruned: bool,
    /// Human correction; takes precedence over the model trace.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub human_score: Option<Prob>,
    /// Evidence presented to the scorer for this leaf.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<EvidenceFactor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

impl TreeNode {
    pub fn new(id: impl Into<String>, claim: Claim) -> Self {
        TreeNode {
            id: id.into(),
            claim,
            children: Vec::new(),
            score_trace: None,
            propagated_prob: None,
            pruned: false,
            human_score: None,
            evidence: Vec::new(),
            warning: None,
        }
    }

    pub fn with_children(mut self, children: Vec<TreeNode>) -> Self {
        self.children = children;
        self
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }

    /// The score a leaf contributes: the human override if present,
    /// otherwise the model's final score.
    pub fn effective_score(&self) -> Option<Prob> {
        self.human_score
            .or_else(|| self.score_trace.as_ref().map(|t| t.final_score))
    }

    /// Pre-order traversal.
    pub fn nodes(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(n) = stack.pop() {
            out.push(n);
            stack.extend(n.children.iter().rev());
        }
        out
    }

    pub fn find(&self, id: &str) -> Option<&TreeNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(id))
    }

    pub fn find_mut(&mut self, id: &str) -> Option<&mut TreeNode> {
        if self.id == id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(id))
    }

    /// Longest root-to-leaf edge count.
    pub fn depth(&self) -> usize {
        self.children.iter().map(|c| c.depth() + 1).max().unwrap_or(0)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Document(format!("tree document: {e}")))
    }
}

/// Child id under the deterministic path scheme (`"0"` → `"0.0"`, `"0.1"`, ...).
pub fn child_id(parent: &str, index: usize) -> String {
    format!("{parent}.{index}")
}

/// Non-pruned leaves in left-to-right order. Leaves below a pruned node are
/// excluded along with it.
pub fn leaves(tree: &TreeNode) -> Vec<&TreeNode> {
    fn walk<'a>(n: &'a TreeNode, out: &mut Vec<&'a TreeNode>) {
        if n.pruned {
            return;
        }
        if n.is_leaf() {
            out.push(n);
        }
        for c in &n.children {
            walk(c, out);
        }
    }
    let mut out = Vec::new();
    walk(tree, &mut out);
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum ViolationKind {
    EmptyClaim,
    UntrimmedClaim,
    AtomicWithChildren,
    DuplicateId,
    DepthExceeded { depth: usize, max: usize },
    ProbabilityOutOfRange { field: &'static str, value: f64 },
    TraceInconsistent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub node_id: String,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node `{}`: ", self.node_id)?;
        match &self.kind {
            ViolationKind::EmptyClaim => write!(f, "empty claim text"),
            ViolationKind::UntrimmedClaim => write!(f, "claim text has surrounding whitespace"),
            ViolationKind::AtomicWithChildren => write!(f, "atomic claim has children"),
            ViolationKind::DuplicateId => write!(f, "duplicate node id"),
            ViolationKind::DepthExceeded { depth, max } => {
                write!(f, "depth {depth} exceeds decomposition max {max}")
            }
            ViolationKind::ProbabilityOutOfRange { field, value } => {
                write!(f, "{field} = {value} outside [0, 1]")
            }
            ViolationKind::TraceInconsistent => {
                write!(f, "trace final score disagrees with its last step")
            }
        }
    }
}

pub fn is_probability(p: f64) -> bool {
    (0.0..=1.0).contains(&p)
}

/// Lists every invariant violation in `tree`; empty means valid.
pub fn validate_tree(tree: &TreeNode, config: &RunConfig) -> Vec<Violation> {
    validate_tree_with_max_depth(tree, config.decomposition_max)
}

pub fn validate_tree_with_max_depth(tree: &TreeNode, max_depth: usize) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut ids = HashSet::new();
    let mut stack = vec![(tree, 0usize)];
    while let Some((node, depth)) = stack.pop() {
        let mut flag = |kind| {
            out.push(Violation {
                node_id: node.id.clone(),
                kind,
            })
        };
        if !ids.insert(node.id.as_str()) {
            flag(ViolationKind::DuplicateId);
        }
        if node.claim.text.trim().is_empty() {
            flag(ViolationKind::EmptyClaim);
        } else if node.claim.text.trim() != node.claim.text {
            flag(ViolationKind::UntrimmedClaim);
        }
        if node.claim.atomic && !node.children.is_empty() {
            flag(ViolationKind::AtomicWithChildren);
        }
        if depth > max_depth {
            flag(ViolationKind::DepthExceeded {
                depth,
                max: max_depth,
            });
        }
        let mut probs: Vec<(&'static str, f64)> = Vec::new();
        if let Some(p) = node.propagated_prob {
            probs.push(("propagated_prob", p));
        }
        if let Some(p) = node.human_score {
            probs.push(("human_score", p));
        }
        if let Some(t) = &node.score_trace {
            probs.push(("anchor_score", t.anchor_score));
            probs.push(("final", t.final_score));
            probs.extend(t.steps.iter().map(|s| ("step score", s.score)));
            let expected = t.steps.last().map_or(t.anchor_score, |s| s.score);
            if expected != t.final_score {
                flag(ViolationKind::TraceInconsistent);
            }
        }
        for (field, value) in probs {
            if !is_probability(value) {
                flag(ViolationKind::ProbabilityOutOfRange { field, value });
            }
        }
        stack.extend(node.children.iter().rev().map(|c| (c, depth + 1)));
    }
    out
}

/// Renders seconds as zero-padded `HH:MM:SS`, truncating fractions.
pub fn format_timestamp(seconds: f64) -> String {
    let total = seconds.max(0.0).floor() as u64;
    format!("{:02}:{:02}:{:02}", total / 3600, (total / 60) % 60, total % 60)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn node(id: &str, text: &str) -> TreeNode {
        TreeNode::new(id, Claim::new(text).unwrap())
    }

    fn chain(depth: usize) -> TreeNode {
        let id = |d: usize| vec!["0"; d + 1].join(".");
        let mut n = node(&id(depth), "leaf");
        for d in (0..depth).rev() {
            n = node(&id(d), "inner").with_children(vec![n]);
        }
        n
    }

    #[test]
    fn single_node_is_valid() {
        assert!(validate_tree_with_max_depth(&node("0", "Ice melts."), 3).is_empty());
    }

    #[test]
    fn depth_four_exceeds_three() {
        let t = chain(4);
        assert_eq!(t.depth(), 4);
        let v = validate_tree_with_max_depth(&t, 3);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::DepthExceeded { depth: 4, max: 3 });
    }

    #[test]
    fn duplicate_id_is_reported_once() {
        let t = node("0", "root").with_children(vec![node("0.0", "a"), node("0.0", "b")]);
        let v = validate_tree_with_max_depth(&t, 3);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].kind, ViolationKind::DuplicateId);
        assert_eq!(v[0].node_id, "0.0");
    }

    #[test]
    fn out_of_range_score_is_reported() {
        let mut t = node("0", "root");
        t.propagated_prob = Some(1.2);
        let v = validate_tree_with_max_depth(&t, 3);
        assert!(matches!(
            v[0].kind,
            ViolationKind::ProbabilityOutOfRange { field: "propagated_prob", .. }
        ));
    }

    #[test]
    fn atomic_with_children_is_reported() {
        let mut t = node("0", "root").with_children(vec![node("0.0", "a"), node("0.1", "b")]);
        t.claim.atomic = true;
        let v = validate_tree_with_max_depth(&t, 3);
        assert_eq!(v[0].kind, ViolationKind::AtomicWithChildren);
    }

    #[test]
    fn leaves_skip_pruned() {
        let single = node("0", "x");
        assert_eq!(leaves(&single).len(), 1);

        let mut left = node("0.0", "a");
        left.pruned = true;
        let t = node("0", "root").with_children(vec![left, node("0.1", "b")]);
        let ids: Vec<_> = leaves(&t).iter().map(|n| n.id.clone()).collect();
        assert_eq!(ids, ["0.1"]);
    }

    #[test]
    fn leaves_in_document_order() {
        let t = node("0", "r").with_children(vec![
            node("0.0", "a").with_children(vec![
                node("0.0.0", "c"),
                node("0.0.1", "d").with_children(vec![node("0.0.1.0", "e"), node("0.0.1.1", "f")]),
            ]),
            node("0.1", "b"),
        ]);
        let ids: Vec<_> = leaves(&t).iter().map(|n| n.id.as_str()).collect();
        assert_eq!(ids, ["0.0.0", "0.0.1.0", "0.0.1.1", "0.1"]);
    }

    #[test]
    fn unicode_roundtrip() {
        let mut t = node("0", "Der Hurrikan traf Kuba · 飓风影响了古巴 🌀").with_children(vec![
            node("0.0", "El huracán afectó a Haití."),
            node("0.1", "Ураган затронул Барбуду."),
        ]);
        t.children[0].score_trace = Some(ScoreTrace::new(
            "anchor".into(),
            0.3,
            vec![AdjustmentStep {
                factor_id: "f1".into(),
                explanation: "étape".into(),
                score: 0.7,
            }],
        ));
        assert_eq!(TreeNode::from_json(&t.to_json()).unwrap(), t);
    }

    #[test]
    fn truncated_document_fails() {
        let json = node("0", "x").to_json();
        assert!(TreeNode::from_json(&json[..json.len() / 2]).is_err());
    }

    #[test]
    fn missing_field_is_named() {
        let err = TreeNode::from_json(r#"{"id": "0"}"#).unwrap_err();
        assert!(err.to_string().contains("claim"), "{err}");
    }

    #[test]
    fn trace_final_follows_steps() {
        let t = ScoreTrace::new("a".into(), 0.4, vec![]);
        assert_eq!(t.final_score, 0.4);
    }

    #[test]
    fn timestamps() {
        assert_eq!(format_timestamp(14.0), "00:00:14");
        assert_eq!(format_timestamp(3725.9), "01:02:05");
    }

    #[test]
    fn bank_jsonl_fields_are_flat() {
        let bank = EvidenceBank {
            factors: vec![EvidenceFactor {
                id: "v:0".into(),
                text: "A man in a black suit is holding a book.".into(),
                span: SourceSpan {
                    source_id: "v".into(),
                    modality: Modality::VideoFrame,
                    start: 14.0,
                    end: 14.0,
                    timestamp_label: Some("00:00:14".into()),
                },
                relevance: None,
            }],
            sources: vec![],
        };
        let line = bank.to_jsonl();
        let value: serde_json::Value = serde_json::from_str(line.trim()).unwrap();
        let mut keys: Vec<_> = value.as_object().unwrap().keys().cloned().collect();
        keys.sort();
        assert_eq!(
            keys,
            ["end", "id", "modality", "source_id", "start", "text", "timestamp_label"]
        );
        assert_eq!(value["modality"], "video-frame");
        let back = EvidenceBank::from_jsonl(&line).unwrap();
        assert_eq!(back.factors, bank.factors);
        assert!(back.check().is_empty());
    }
}
