//! Anchor-and-adjust likelihood elicitation.
//!
//! The scorer asks the chat backend for an anchor score from a generic
//! description of the scenario, then one incremental update per evidence
//! item, each with an explanation. Rubric scores (0-10) are stored as
//! probabilities by dividing by ten.

use std::sync::LazyLock;

use regex::Regex;

use crate::backends::{Backends, ChatRequest};
use crate::config::ScoringMode;
use crate::error::{Error, ParseError, Result};
use crate::model::{AdjustmentStep, EvidenceFactor, ScoreTrace};
use crate::prompts::{self, split_enumerated, split_enumerated_by};

/// Line added to the scoring prompt when evidence carries timestamps.
pub const TEMPORAL_NOTE: &str = "Some pieces of new information begin with an approximate HH:MM:SS timestamp showing when they occur in the video, and they are listed in temporal order.";

/// One item of NEW INFORMATION as presented to the scorer.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceItem {
    pub id: String,
    pub text: String,
}

impl EvidenceItem {
    pub fn from_factor(f: &EvidenceFactor) -> Self {
        EvidenceItem {
            id: f.id.clone(),
            text: f.text.clone(),
        }
    }

    /// A sibling claim used as a conditioning fact.
    pub fn condition(node_id: &str, claim_text: &str) -> Self {
        EvidenceItem {
            id: format!("cond:{node_id}"),
            text: format!("It is true that: {claim_text}"),
        }
    }
}

/// The ORIGINAL DESCRIPTION used when the task supplies a question.
pub fn question_context(question: &str) -> String {
    format!("someone is asking the question, {question}")
}

/// Asks the chat backend for a one-to-three sentence summary of the
/// observations.
pub async fn make_anchor_summary(
    observations: &[String],
    max_tokens: u32,
    backends: &Backends,
) -> Result<String> {
    if observations.is_empty() {
        return Err(Error::Precondition(
            "cannot summarize an empty observation list".into(),
        ));
    }
    let prompt = prompts::render(
        prompts::SUMMARY,
        &[("observations", &prompts::enumerate(observations))],
    );
    let summary = backends
        .chat
        .complete(&ChatRequest::new(prompt).with_max_tokens(max_tokens))
        .await
        .map_err(|e| Error::backend("summarizing observations", e))?;
    Ok(summary.trim().to_string())
}

/// Everything that goes into one scoring prompt.
#[derive(Debug, Clone, Copy)]
pub struct ScoringTask<'a> {
    /// Used in error messages.
    pub node_id: &'a str,
    pub hypothesis: &'a str,
    pub summary: &'a str,
    pub items: &'a [EvidenceItem],
    pub counterfactual: Option<&'a str>,
    pub temporal_note: bool,
}

impl<'a> ScoringTask<'a> {
    pub fn new(hypothesis: &'a str, summary: &'a str, items: &'a [EvidenceItem]) -> Self {
        ScoringTask {
            node_id: "",
            hypothesis,
            summary,
            items,
            counterfactual: None,
            temporal_note: false,
        }
    }

    /// Prompt presenting the first `shown` items, with `prior` entries
    /// already filled in under PROBABILITY SCORES.
    fn prompt(&self, shown: usize, prior: &str) -> Result<String> {
        if shown == 0 {
            return Err(Error::Precondition(
                "scoring needs at least one piece of new information".into(),
            ));
        }
        let texts: Vec<&str> = self.items[..shown].iter().map(|i| i.text.as_str()).collect();
        let mut block = String::new();
        if let Some(cf) = self.counterfactual {
            block.push_str(cf.trim());
            block.push_str("\n\n");
        }
        if self.temporal_note {
            block.push_str(TEMPORAL_NOTE);
            block.push_str("\n\n");
        }
        let rendered = prompts::render(
            prompts::SCORING,
            &[
                ("exemplars", prompts::SCORING_EXEMPLARS.trim_end()),
                ("summary", self.summary.trim()),
                ("counterfactual_block", &block),
                ("hypothesis", self.hypothesis.trim()),
                ("information", &prompts::enumerate(&texts)),
                ("prior_scores", prior),
            ],
        );
        Ok(format!("{}\n", rendered.trim_end()))
    }
}

/// The full single-call scoring prompt.
pub fn build_scoring_prompt(task: &ScoringTask<'_>) -> Result<String> {
    task.prompt(task.items.len(), "")
}

static SCORE_MARKER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?:^|\s)\((\d+)\)\s*EXPLANATION:").unwrap());
static SCORE_LINE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?is)^(.*?)\bSCORE:\s*\**\s*(-?[0-9]+(?:\.[0-9]+)?)\s*(%?)").unwrap());

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    explanation: String,
    score: f64,
}

fn split_entries(text: &str, first: usize) -> (Vec<(usize, String)>, Option<usize>) {
    let labelled = split_enumerated_by(text, first, &SCORE_MARKER);
    if labelled.0.is_empty() {
        split_enumerated(text, first)
    } else {
        labelled
    }
}

fn parse_entry(index: usize, body: &str) -> Result<Entry, ParseError> {
    let caps = SCORE_LINE
        .captures(body)
        .ok_or_else(|| ParseError::Malformed(format!("entry ({index}) has no SCORE")))?;
    let explanation = caps[1]
        .trim()
        .trim_start_matches("EXPLANATION:")
        .trim()
        .to_string();
    let raw = &caps[2];
    let value: f64 = raw
        .parse()
        .map_err(|_| ParseError::Malformed(format!("entry ({index}) score `{raw}`")))?;
    let (scale, label) = if caps[3].is_empty() {
        (10.0, raw.to_string())
    } else {
        (100.0, format!("{raw}%"))
    };
    if !(0.0..=scale).contains(&value) {
        return Err(ParseError::ScoreOutOfRange { index, value: label });
    }
    if explanation.is_empty() {
        return Err(ParseError::Malformed(format!("entry ({index}) has no explanation")));
    }
    Ok(Entry {
        explanation,
        score: value / scale,
    })
}

/// Reads a scoring response with entries `(0)` through `(n_factors)`.
/// Adjustment steps get placeholder factor ids `"1"`, `"2"`, ...
pub fn parse_score_trace(response: &str, n_factors: usize) -> Result<ScoreTrace, ParseError> {
    let (entries, stray) = split_entries(response, 0);
    if entries.len() < n_factors + 1 {
        return Err(ParseError::MissingIndex(entries.len()));
    }
    if entries.len() > n_factors + 1 {
        return Err(ParseError::ExtraIndex(n_factors + 1));
    }
    if let Some(extra) = stray {
        return Err(ParseError::ExtraIndex(extra));
    }
    let mut parsed = entries
        .iter()
        .map(|(i, body)| parse_entry(*i, body))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter();
    let anchor = parsed.next().expect("entry (0) present");
    let steps = parsed
        .enumerate()
        .map(|(i, e)| AdjustmentStep {
            factor_id: (i + 1).to_string(),
            explanation: e.explanation,
            score: e.score,
        })
        .collect();
    Ok(ScoreTrace::new(anchor.explanation, anchor.score, steps))
}

fn format_rubric(score: f64) -> String {
    let rubric = score * 10.0;
    if (rubric - rubric.round()).abs() < 1e-9 {
        format!("{}", rubric.round() as i64)
    } else {
        format!("{rubric}")
    }
}

fn render_prior(anchor: &Entry, steps: &[Entry]) -> String {
    std::iter::once(anchor)
        .chain(steps)
        .enumerate()
        .map(|(i, e)| format!("({i}) EXPLANATION: {}\nSCORE: {}", e.explanation, format_rubric(e.score)))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Elicits a trace whose steps align one-to-one with `task.items`.
pub async fn score_claim(
    task: &ScoringTask<'_>,
    mode: ScoringMode,
    max_tokens: u32,
    backends: &Backends,
) -> Result<ScoreTrace> {
    let context = format!("scoring node {}", task.node_id);
    let ask = |prompt: String| {
        let context = context.clone();
        async move {
            backends
                .chat
                .complete(&ChatRequest::new(prompt).with_max_tokens(max_tokens))
                .await
                .map_err(|e| Error::backend(context, e))
        }
    };
    let n = task.items.len();
    let mut trace = match mode {
        ScoringMode::Single => {
            let response = ask(build_scoring_prompt(task)?).await?;
            parse_score_trace(&response, n).map_err(|e| Error::parse(&context, e))?
        }
        ScoringMode::Iterative => {
            if n == 0 {
                return Err(Error::Precondition(
                    "scoring needs at least one piece of new information".into(),
                ));
            }
            let first = ask(task.prompt(1, "")?).await?;
            let opening = parse_score_trace(&first, 1).map_err(|e| Error::parse(&context, e))?;
            let anchor = Entry {
                explanation: opening.anchor_explanation,
                score: opening.anchor_score,
            };
            let mut steps = vec![Entry {
                explanation: opening.steps[0].explanation.clone(),
                score: opening.steps[0].score,
            }];
            for shown in 2..=n {
                let response = ask(task.prompt(shown, &render_prior(&anchor, &steps))?).await?;
                let (entries, _) = split_entries(&response, shown);
                let body = entries
                    .first()
                    .map(|(_, b)| b.as_str())
                    .ok_or_else(|| Error::parse(&context, ParseError::MissingIndex(shown)))?;
                steps.push(parse_entry(shown, body).map_err(|e| Error::parse(&context, e))?);
            }
            ScoreTrace::new(
                anchor.explanation,
                anchor.score,
                steps
                    .into_iter()
                    .enumerate()
                    .map(|(i, e)| AdjustmentStep {
                        factor_id: (i + 1).to_string(),
                        explanation: e.explanation,
                        score: e.score,
                    })
                    .collect(),
            )
        }
    };
    for (step, item) in trace.steps.iter_mut().zip(task.items) {
        step.factor_id = item.id.clone();
    }
    Ok(trace)
}
