//! Multiple-choice answering: one hypothesis tree per option, pruning of
//! leaves every other option already entails, scoring under the condition
//! that exactly one option is true, and optional extra evidence rounds when
//! every option scores low.

use futures::future::{join_all, try_join_all};
use serde::{Deserialize, Serialize};

use crate::backends::{Backends, ChatRequest};
use crate::config::{Aggregation, AnchorSource, EvidenceLevel, RunConfig};
use crate::decomposer::build_tree_with_id;
use crate::error::{Error, Result};
use crate::evidence::{build_bank, ExtractionFocus};
use crate::inference::{
    aggregate_geometric, aggregate_mean, infer, judge, repropagate, InferenceContext, JudgeOption,
};
use crate::model::{leaves, Claim, EvidenceBank, SourceDescriptor, TreeNode};
use crate::prompts;
use crate::scorer::{make_anchor_summary, question_context};
use crate::Prob;

/// Where an episode's evidence comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum EvidenceInput {
    /// A prebuilt bank. Extra evidence rounds are unavailable.
    Bank(EvidenceBank),
    Sources(Vec<SourceDescriptor>),
}

/// One evidence bank and the option scores it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRound {
    pub level: EvidenceLevel,
    pub bank: EvidenceBank,
    pub option_scores: Vec<Prob>,
    pub chosen: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McqRun {
    pub question: String,
    /// Answer texts as given.
    pub answers: Vec<String>,
    /// Hypothesis per answer.
    pub options: Vec<Claim>,
    pub trees: Vec<TreeNode>,
    pub option_scores: Vec<Prob>,
    /// Zero-based index into `options`.
    pub chosen: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge_rationale: Option<String>,
    pub summary: String,
    pub counterfactual_context: String,
    pub config: RunConfig,
    /// The last round's bank is the one the current traces were scored on.
    pub evidence_rounds: Vec<EvidenceRound>,
    #[serde(default)]
    pub revision: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl McqRun {
    pub fn bank(&self) -> Option<&EvidenceBank> {
        self.evidence_rounds.last().map(|r| &r.bank)
    }

    pub fn check(&self) -> Result<()> {
        if self.options.len() < 2 {
            return Err(Error::Document("a run needs at least two options".into()));
        }
        if self.trees.len() != self.options.len() || self.option_scores.len() != self.options.len() {
            return Err(Error::Document(
                "trees and option scores must align with options".into(),
            ));
        }
        if self.chosen >= self.options.len() {
            return Err(Error::Document(format!(
                "chosen option {} out of range",
                self.chosen
            )));
        }
        Ok(())
    }
}

/// Rewrites a question and answer as one declarative statement.
pub async fn qa_to_hypothesis(question: &str, answer: &str, config: &RunConfig, backends: &Backends) -> Result<Claim> {
    if question.trim().is_empty() || answer.trim().is_empty() {
        return Err(Error::Precondition("question and answer must be non-empty".into()));
    }
    let prompt = prompts::render(
        prompts::HYPOTHESIS,
        &[("question", question.trim()), ("answer", answer.trim())],
    );
    let response = backends
        .chat
        .complete(&ChatRequest::new(prompt).with_max_tokens(config.max_tokens))
        .await
        .map_err(|e| Error::backend("writing hypothesis", e))?;
    let line = response.trim().lines().next().unwrap_or_default();
    Claim::new(prompts::strip_quotes(line))
}

/// `Exactly one of the following statements is true: (1) A. (2) B. Score
/// the hypothesis relative to these alternatives.`
pub fn counterfactual_context(hypotheses: &[Claim]) -> String {
    let listed = hypotheses
        .iter()
        .enumerate()
        .map(|(i, h)| format!("({}) {}", i + 1, h.text))
        .collect::<Vec<_>>()
        .join(" ");
    let end = if listed.ends_with(['.', '!', '?']) { "" } else { "." };
    format!(
        "Exactly one of the following statements is true: {listed}{end} Score the hypothesis relative to these alternatives."
    )
}

/// Marks leaves of each option that every other option's hypothesis
/// entails at or above `tau`. If that would prune all of an option's
/// leaves, the one with the lowest entailment stays. Returns the ids pruned
/// per option.
pub async fn prune_shared_leaves(
    trees: &mut [TreeNode],
    tau: f64,
    backends: &Backends,
) -> Result<Vec<Vec<String>>> {
    if trees.len() < 2 {
        return Err(Error::Precondition("pruning needs at least two options".into()));
    }
    let hypotheses: Vec<String> = trees.iter().map(|t| t.claim.text.clone()).collect();

    // min over other hypotheses of entailment(h, leaf), per leaf per option
    let mut plans: Vec<Vec<(String, f64)>> = Vec::with_capacity(trees.len());
    for (o, tree) in trees.iter().enumerate() {
        let leaf_list: Vec<(String, String)> = leaves(tree)
            .into_iter()
            .map(|l| (l.id.clone(), l.claim.text.clone()))
            .collect();
        let calls = leaf_list.iter().map(|(_, text)| {
            let others = hypotheses
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != o)
                .map(|(_, h)| backends.entailment.entailment(h, text));
            join_all(others)
        });
        let mut per_leaf = Vec::with_capacity(leaf_list.len());
        for ((id, _), scores) in leaf_list.iter().zip(join_all(calls).await) {
            let mut min = f64::INFINITY;
            for s in scores {
                let s = s.map_err(|e| Error::backend(format!("entailment for leaf {id}"), e))?;
                min = min.min(s);
            }
            per_leaf.push((id.clone(), min));
        }
        plans.push(per_leaf);
    }

    let mut pruned = Vec::with_capacity(trees.len());
    for (tree, plan) in trees.iter_mut().zip(plans) {
        let mut ids: Vec<&str> = plan
            .iter()
            .filter(|(_, min)| *min >= tau)
            .map(|(id, _)| id.as_str())
            .collect();
        if !plan.is_empty() && ids.len() == plan.len() {
            let keep = plan
                .iter()
                .enumerate()
                .min_by(|(i, a), (j, b)| a.1.total_cmp(&b.1).then(i.cmp(j)))
                .map(|(_, (id, _))| id.as_str())
                .expect("non-empty");
            ids.retain(|id| *id != keep);
        }
        for id in &ids {
            tree.find_mut(id).expect("leaf id from this tree").pruned = true;
        }
        pruned.push(ids.into_iter().map(str::to_string).collect());
    }
    Ok(pruned)
}

/// Index of the highest score; the lowest index wins ties.
pub fn argmax(scores: &[Prob]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// Option score under a non-judge aggregation. Judge runs report the leaf
/// mean here.
pub fn option_score(tree: &TreeNode, aggregation: Aggregation) -> Result<Prob> {
    match aggregation {
        Aggregation::Product => tree
            .propagated_prob
            .ok_or_else(|| Error::Precondition(format!("tree {} has not been propagated", tree.id))),
        Aggregation::Mean | Aggregation::Judge => aggregate_mean(tree),
        Aggregation::Geometric => aggregate_geometric(tree),
    }
}

/// Recomputes propagated probabilities and option scores from stored leaf
/// scores. A judge's pick is kept, since re-judging needs the backend.
pub fn reaggregate(run: &mut McqRun) -> Result<()> {
    for tree in &mut run.trees {
        repropagate(tree)?;
    }
    run.option_scores = run
        .trees
        .iter()
        .map(|t| option_score(t, run.config.aggregation))
        .collect::<Result<_>>()?;
    if run.config.aggregation != Aggregation::Judge {
        run.chosen = argmax(&run.option_scores);
    }
    if let Some(round) = run.evidence_rounds.last_mut() {
        round.option_scores = run.option_scores.clone();
        round.chosen = run.chosen;
    }
    Ok(())
}

async fn make_summary(question: &str, bank: &EvidenceBank, config: &RunConfig, backends: &Backends) -> Result<String> {
    match config.anchor {
        AnchorSource::Question => Ok(question_context(question)),
        AnchorSource::Summary => {
            let texts: Vec<String> = bank.factors.iter().map(|f| f.text.clone()).collect();
            make_anchor_summary(&texts, config.max_tokens, backends).await
        }
    }
}

fn leaf_focus(trees: &[TreeNode]) -> ExtractionFocus {
    ExtractionFocus::Claims(
        trees
            .iter()
            .flat_map(|t| leaves(t).into_iter().map(|l| l.claim.text.clone()))
            .collect(),
    )
}

/// Scores every option tree against `bank` and aggregates.
async fn score_round(run: &mut McqRun, bank: &EvidenceBank, backends: &Backends) -> Result<()> {
    let config = run.config.clone();
    let summary = make_summary(&run.question, bank, &config, backends)
        .await
        .map_err(|e| e.in_stage("writing the anchor summary"))?;
    let ctx = InferenceContext {
        bank,
        summary: &summary,
        counterfactual: Some(&run.counterfactual_context),
        config: &config,
        backends,
    };
    try_join_all(run.trees.iter_mut().enumerate().map(|(i, tree)| async move {
        infer(tree, &[], ctx)
            .await
            .map_err(|e| e.in_stage(format!("option {}: scoring", i + 1)))
    }))
    .await?;
    run.summary = summary;
    run.option_scores = run
        .trees
        .iter()
        .map(|t| option_score(t, config.aggregation))
        .collect::<Result<_>>()?;
    if config.aggregation == Aggregation::Judge {
        let options = run
            .trees
            .iter()
            .map(JudgeOption::from_tree)
            .collect::<Result<Vec<_>>>()?;
        let outcome = judge(&run.question, &options, config.max_tokens, backends)
            .await
            .map_err(|e| e.in_stage("judging"))?;
        run.chosen = outcome.chosen;
        run.judge_rationale = Some(outcome.rationale);
    } else {
        run.chosen = argmax(&run.option_scores);
        run.judge_rationale = None;
    }
    Ok(())
}

/// Runs a full episode: hypotheses, trees, pruning, evidence, scoring and
/// aggregation. Extra evidence rounds are left to [`rescale_evidence`].
pub async fn answer_mcq(
    question: &str,
    answers: &[String],
    evidence: &EvidenceInput,
    config: &RunConfig,
    backends: &Backends,
) -> Result<McqRun> {
    if answers.len() < 2 {
        return Err(Error::Precondition(format!(
            "a multiple-choice question needs at least two options, got {}",
            answers.len()
        )));
    }
    config.validate()?;
    let options = try_join_all(answers.iter().enumerate().map(|(i, a)| async move {
        qa_to_hypothesis(question, a, config, backends)
            .await
            .map_err(|e| e.in_stage(format!("option {}: hypothesis", i + 1)))
    }))
    .await?;
    let mut trees = try_join_all(options.iter().enumerate().map(|(i, h)| async move {
        build_tree_with_id(&i.to_string(), h.clone(), config, backends)
            .await
            .map_err(|e| e.in_stage(format!("option {}: decomposition", i + 1)))
    }))
    .await?;
    prune_shared_leaves(&mut trees, config.tau, backends)
        .await
        .map_err(|e| e.in_stage("pruning shared leaves"))?;

    let mut warnings = Vec::new();
    let (bank, level) = match evidence {
        EvidenceInput::Bank(bank) => (bank.clone(), EvidenceLevel::Base),
        EvidenceInput::Sources(sources) => {
            let focus = match config.evidence_level {
                EvidenceLevel::Base => ExtractionFocus::Question(question.to_string()),
                EvidenceLevel::Leaf => leaf_focus(&trees),
            };
            let report = build_bank(sources, &focus, config, backends)
                .await
                .map_err(|e| e.in_stage("building the evidence bank"))?;
            warnings.extend(report.warnings);
            (report.bank, config.evidence_level)
        }
    };

    let mut run = McqRun {
        question: question.to_string(),
        answers: answers.to_vec(),
        counterfactual_context: counterfactual_context(&options),
        options,
        trees,
        option_scores: Vec::new(),
        chosen: 0,
        judge_rationale: None,
        summary: String::new(),
        config: config.clone(),
        evidence_rounds: Vec::new(),
        revision: 0,
        warnings,
    };
    score_round(&mut run, &bank, backends).await?;
    run.evidence_rounds.push(EvidenceRound {
        level,
        bank,
        option_scores: run.option_scores.clone(),
        chosen: run.chosen,
    });
    Ok(run)
}

/// While every option scores below `config.theta`, and at most
/// `config.rescale_rounds` times, extracts a fresh bank with the surviving
/// leaf claims as context and rescores all options on it.
pub async fn rescale_evidence(
    mut run: McqRun,
    sources: &[SourceDescriptor],
    backends: &Backends,
) -> Result<McqRun> {
    let config = run.config.clone();
    for _ in 0..config.rescale_rounds {
        let best = run.option_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if best >= config.theta {
            break;
        }
        let report = build_bank(sources, &leaf_focus(&run.trees), &config, backends)
            .await
            .map_err(|e| e.in_stage(format!("evidence round {}", run.evidence_rounds.len() + 1)))?;
        run.warnings.extend(report.warnings);
        score_round(&mut run, &report.bank, backends).await?;
        run.evidence_rounds.push(EvidenceRound {
            level: EvidenceLevel::Leaf,
            bank: report.bank,
            option_scores: run.option_scores.clone(),
            chosen: run.chosen,
        });
    }
    Ok(run)
}

/// Re-scores the stored trees on the latest bank. Tree shape, pruning and
/// human overrides are kept.
pub async fn rescore_mcq(run: &mut McqRun, backends: &Backends) -> Result<()> {
    let bank = run.bank().cloned().unwrap_or_default();
    score_round(run, &bank, backends).await?;
    if let Some(round) = run.evidence_rounds.last_mut() {
        round.option_scores = run.option_scores.clone();
        round.chosen = run.chosen;
    }
    Ok(())
}
