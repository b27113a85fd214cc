//! Conditional probability propagation over a decomposition tree, plus the
//! leaf-mean and judge aggregation alternatives.
//!
//! An internal node with children `c1..cn` scores as
//! `P(c1 | c2..cn) · P(c2 | c3..cn) · ... · P(cn)`. Conditioning passes the
//! sibling claim text to the scorer as extra evidence, so every leaf score
//! is a conditional probability and the root is their product.

use std::sync::LazyLock;

use futures::future::{try_join_all, BoxFuture};
use futures::FutureExt;
use regex::Regex;

use crate::backends::{Backends, ChatRequest};
use crate::config::{ConditioningOrder, RunConfig};
use crate::error::{Error, ParseError, Result};
use crate::model::{leaves, EvidenceBank, TreeNode};
use crate::prompts;
use crate::retriever::{order_temporal, retrieve_top_k};
use crate::scalar;
use crate::scorer::{score_claim, EvidenceItem, ScoringTask};
use crate::Prob;

/// Shared inputs for one inference pass.
#[derive(Clone, Copy)]
pub struct InferenceContext<'a> {
    pub bank: &'a EvidenceBank,
    /// ORIGINAL DESCRIPTION for every scoring prompt.
    pub summary: &'a str,
    pub counterfactual: Option<&'a str>,
    pub config: &'a RunConfig,
    pub backends: &'a Backends,
}

/// Scores every non-pruned leaf and records traces, presented evidence and
/// propagated probabilities on the tree. Returns the root probability.
/// `conditions` are claims the whole tree is conditioned on.
pub async fn infer(
    tree: &mut TreeNode,
    conditions: &[EvidenceItem],
    ctx: InferenceContext<'_>,
) -> Result<Prob> {
    infer_node(tree, conditions.to_vec(), ctx).await
}

/// Conditions for each child: the inherited list followed by the claims of
/// the non-pruned siblings it is conditioned on, in sibling order.
fn child_conditions(
    node: &TreeNode,
    inherited: &[EvidenceItem],
    order: ConditioningOrder,
) -> Vec<Vec<EvidenceItem>> {
    let n = node.children.len();
    (0..n)
        .map(|i| {
            let range = match order {
                ConditioningOrder::OnLaterSiblings => i + 1..n,
                ConditioningOrder::OnEarlierSiblings => 0..i,
            };
            let mut conds = inherited.to_vec();
            conds.extend(
                node.children[range]
                    .iter()
                    .filter(|s| !s.pruned)
                    .map(|s| EvidenceItem::condition(&s.id, &s.claim.text)),
            );
            conds
        })
        .collect()
}

fn infer_node<'a>(
    node: &'a mut TreeNode,
    conditions: Vec<EvidenceItem>,
    ctx: InferenceContext<'a>,
) -> BoxFuture<'a, Result<Prob>> {
    async move {
        if node.pruned {
            return Ok(1.0);
        }
        if node.is_leaf() {
            return score_leaf(node, &conditions, ctx).await;
        }
        let per_child = child_conditions(node, &conditions, ctx.config.conditioning);
        let probs = try_join_all(
            node.children
                .iter_mut()
                .zip(per_child)
                .map(|(child, conds)| infer_node(child, conds, ctx)),
        )
        .await?;
        let p = scalar::product(probs);
        node.propagated_prob = Some(p);
        Ok(p)
    }
    .boxed()
}

async fn score_leaf(
    node: &mut TreeNode,
    conditions: &[EvidenceItem],
    ctx: InferenceContext<'_>,
) -> Result<Prob> {
    let cfg = ctx.config;
    let mut evidence = if ctx.bank.is_empty() {
        Vec::new()
    } else {
        retrieve_top_k(&node.claim, ctx.bank, cfg.evidence_max, ctx.backends)
            .await
            .map_err(|e| e.in_stage(format!("retrieving evidence for node {}", node.id)))?
    };
    if cfg.temporal_enhancement {
        evidence = order_temporal(evidence);
    }
    let items: Vec<EvidenceItem> = evidence
        .iter()
        .map(EvidenceItem::from_factor)
        .chain(conditions.iter().cloned())
        .collect();
    if items.is_empty() {
        return Err(Error::Precondition(format!(
            "node {} has neither evidence nor conditioning claims to score against",
            node.id
        )));
    }
    let task = ScoringTask {
        node_id: &node.id,
        hypothesis: &node.claim.text,
        summary: ctx.summary,
        items: &items,
        counterfactual: ctx.counterfactual,
        temporal_note: cfg.temporal_enhancement
            && evidence.iter().any(|f| f.span.timestamp_label.is_some()),
    };
    let trace = score_claim(&task, cfg.scoring_mode, cfg.max_tokens, ctx.backends).await?;
    node.score_trace = Some(trace);
    node.evidence = evidence;
    let p = node.effective_score().expect("trace just recorded");
    node.propagated_prob = Some(p);
    Ok(p)
}

/// Recomputes propagated probabilities from stored leaf scores (human
/// overrides first). No backend is involved.
pub fn repropagate(tree: &mut TreeNode) -> Result<Prob> {
    if tree.pruned {
        return Ok(1.0);
    }
    let p = if tree.is_leaf() {
        tree.effective_score()
            .ok_or_else(|| Error::Precondition(format!("leaf {} has no score", tree.id)))?
    } else {
        let probs = tree
            .children
            .iter_mut()
            .map(repropagate)
            .collect::<Result<Vec<_>>>()?;
        scalar::product(probs)
    };
    tree.propagated_prob = Some(p);
    Ok(p)
}

fn leaf_scores(tree: &TreeNode) -> Result<Vec<Prob>> {
    let scores = leaves(tree)
        .into_iter()
        .map(|l| {
            l.effective_score()
                .ok_or_else(|| Error::Precondition(format!("leaf {} has no score", l.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    if scores.is_empty() {
        return Err(Error::Precondition(format!("tree {} has no unpruned leaves", tree.id)));
    }
    Ok(scores)
}

/// Arithmetic mean of the non-pruned leaf scores.
pub fn aggregate_mean(tree: &TreeNode) -> Result<Prob> {
    Ok(scalar::mean(leaf_scores(tree)?).expect("non-empty"))
}

/// Geometric mean of the non-pruned leaf scores.
pub fn aggregate_geometric(tree: &TreeNode) -> Result<Prob> {
    Ok(scalar::geometric_mean(leaf_scores(tree)?).expect("non-empty"))
}

/// One option as shown to the judge.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOption {
    pub hypothesis: String,
    /// Leaf claims with their scores.
    pub leaves: Vec<(String, Prob)>,
}

impl JudgeOption {
    pub fn from_tree(tree: &TreeNode) -> Result<Self> {
        let leaves = leaves(tree)
            .into_iter()
            .map(|l| {
                l.effective_score()
                    .map(|s| (l.claim.text.clone(), s))
                    .ok_or_else(|| Error::Precondition(format!("leaf {} has no score", l.id)))
            })
            .collect::<Result<_>>()?;
        Ok(JudgeOption {
            hypothesis: tree.claim.text.clone(),
            leaves,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JudgeOutcome {
    /// Zero-based option index.
    pub chosen: usize,
    pub rationale: String,
}

pub fn judge_prompt(question: &str, options: &[JudgeOption]) -> String {
    let blocks: Vec<String> = options
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let subs: Vec<String> = o
                .leaves
                .iter()
                .map(|(c, s)| format!("{c} [score {s:.2}]"))
                .collect();
            format!(
                "OPTION {}: {}\nSUB-CLAIMS:\n{}",
                i + 1,
                o.hypothesis,
                prompts::enumerate(&subs)
            )
        })
        .collect();
    prompts::render(
        prompts::JUDGE,
        &[("question", question), ("options", &blocks.join("\n\n"))],
    )
}

static FIRST_NUMBER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());

/// Reads the 1-based option number and returns it 0-based.
pub fn parse_judge(response: &str, n_options: usize) -> Result<usize, ParseError> {
    let m = FIRST_NUMBER
        .find(response)
        .ok_or_else(|| ParseError::Malformed(format!("no option number in `{}`", response.trim())))?;
    let k: usize = m
        .as_str()
        .parse()
        .map_err(|_| ParseError::Malformed(format!("option number `{}`", m.as_str())))?;
    if !(1..=n_options).contains(&k) {
        return Err(ParseError::Malformed(format!(
            "option {k} outside 1..={n_options}"
        )));
    }
    Ok(k - 1)
}

pub async fn judge(
    question: &str,
    options: &[JudgeOption],
    max_tokens: u32,
    backends: &Backends,
) -> Result<JudgeOutcome> {
    if options.len() < 2 {
        return Err(Error::Precondition(format!(
            "judging needs at least two options, got {}",
            options.len()
        )));
    }
    let response = backends
        .chat
        .complete(&ChatRequest::new(judge_prompt(question, options)).with_max_tokens(max_tokens))
        .await
        .map_err(|e| Error::backend("judging options", e))?;
    let chosen = parse_judge(&response, options.len()).map_err(|e| Error::parse("judging options", e))?;
    Ok(JudgeOutcome {
        chosen,
        rationale: response.trim().to_string(),
    })
}

#[cfg(test)]
mod tests {
    use futures::executor::block_on;

    use super::*;
    use crate::backends::MockScript;
    use crate::model::{AdjustmentStep, Claim, ScoreTrace};

    fn node(id: &str, text: &str) -> TreeNode {
        TreeNode::new(id, Claim::new(text).unwrap())
    }

    fn rubric(score: u32) -> String {
        format!("(0) EXPLANATION: anchor.\nSCORE: 5\n(1) EXPLANATION: adjusted.\nSCORE: {score}")
    }

    /// Scoring responses keyed on hypothesis plus exact NEW INFORMATION.
    fn scored(script: MockScript, hyp: &str, info: &[&str], score: u32) -> MockScript {
        let items = prompts::enumerate(info);
        let n = info.len();
        let mut resp = String::from("(0) EXPLANATION: anchor.\nSCORE: 5");
        for i in 1..=n {
            let s = if i == n { score } else { 5 };
            resp.push_str(&format!("\n({i}) EXPLANATION: step.\nSCORE: {s}"));
        }
        script.on_contains(
            [format!("HYPOTHESIS: {hyp}\n\nNEW INFORMATION:\n{items}\n\nPROBABILITY SCORES:")],
            resp,
        )
    }

    fn run(tree: &mut TreeNode, script: MockScript) -> Prob {
        let cfg = RunConfig::default();
        let backends = Backends::mock(script);
        let bank = EvidenceBank::default();
        let ctx = InferenceContext {
            bank: &bank,
            summary: "S.",
            counterfactual: None,
            config: &cfg,
            backends: &backends,
        };
        block_on(infer(tree, &[EvidenceItem::condition("ctx", "Context.")], ctx)).unwrap()
    }

    #[test]
    fn single_leaf_passthrough() {
        let mut t = node("0", "A.");
        let p = run(&mut t, MockScript::default().on_contains(["HYPOTHESIS: A."], rubric(7)));
        assert_eq!(p, 0.7);
        assert_eq!(t.propagated_prob, Some(0.7));
        assert!(t.score_trace.is_some());
    }

    #[test]
    fn two_leaves_multiply() {
        let mut t = node("0", "R.").with_children(vec![node("0.0", "A."), node("0.1", "B.")]);
        let script = scored(MockScript::default(), "A.", &["It is true that: Context.", "It is true that: B."], 9);
        let script = scored(script, "B.", &["It is true that: Context."], 8);
        let p = run(&mut t, script);
        assert!((p - 0.72).abs() < 1e-12);
    }

    #[test]
    fn depth_two_chain_rule() {
        // root = A ∧ B, A = C ∧ D
        let mut t = node("0", "R.").with_children(vec![
            node("0.0", "A.").with_children(vec![node("0.0.0", "C."), node("0.0.1", "D.")]),
            node("0.1", "B."),
        ]);
        let c = "It is true that: Context.";
        let script = scored(MockScript::default(), "C.", &[c, "It is true that: B.", "It is true that: D."], 5);
        let script = scored(script, "D.", &[c, "It is true that: B."], 5);
        let script = scored(script, "B.", &[c], 8);
        let p = run(&mut t, script);
        assert!((p - 0.2).abs() < 1e-12);
        assert_eq!(t.find("0.0").unwrap().propagated_prob, Some(0.25));
    }

    #[test]
    fn pruned_subtree_counts_as_one() {
        let mut pruned = node("0.1", "B.");
        pruned.pruned = true;
        let mut t = node("0", "R.").with_children(vec![node("0.0", "A."), pruned]);
        let script = scored(MockScript::default(), "A.", &["It is true that: Context."], 6);
        let p = run(&mut t, script);
        assert_eq!(p, 0.6);
        assert!(t.find("0.1").unwrap().score_trace.is_none());
    }

    #[test]
    fn earlier_sibling_order() {
        let mut t = node("0", "R.").with_children(vec![node("0.0", "A."), node("0.1", "B.")]);
        let conds = child_conditions(&t, &[], ConditioningOrder::OnEarlierSiblings);
        assert!(conds[0].is_empty());
        assert_eq!(conds[1][0].text, "It is true that: A.");
        t.children[1].pruned = true;
        let conds = child_conditions(&t, &[], ConditioningOrder::OnLaterSiblings);
        assert!(conds[0].is_empty());
    }

    fn scored_leaf(id: &str, s: Prob) -> TreeNode {
        let mut n = node(id, &format!("Leaf {id}."));
        n.score_trace = Some(ScoreTrace::new(
            "a".into(),
            0.5,
            vec![AdjustmentStep {
                factor_id: "f".into(),
                explanation: "e".into(),
                score: s,
            }],
        ));
        n
    }

    #[test]
    fn means() {
        let t = node("0", "R.").with_children(vec![
            scored_leaf("0.0", 0.2),
            scored_leaf("0.1", 0.9),
            scored_leaf("0.2", 0.9),
        ]);
        assert!((aggregate_mean(&t).unwrap() - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(aggregate_mean(&scored_leaf("0", 0.4)).unwrap(), 0.4);
        let t = node("0", "R.").with_children(vec![scored_leaf("0.0", 0.0), scored_leaf("0.1", 1.0)]);
        assert_eq!(aggregate_mean(&t).unwrap(), 0.5);
        assert!(aggregate_mean(&node("0", "R.")).is_err());
    }

    #[test]
    fn repropagate_uses_overrides() {
        let mut t = node("0", "R.").with_children(vec![scored_leaf("0.0", 0.8), scored_leaf("0.1", 0.8)]);
        assert!((repropagate(&mut t).unwrap() - 0.64).abs() < 1e-12);
        t.find_mut("0.0").unwrap().human_score = Some(0.5);
        assert!((repropagate(&mut t).unwrap() - 0.4).abs() < 1e-12);
        t.find_mut("0.0").unwrap().pruned = true;
        assert_eq!(repropagate(&mut t).unwrap(), 0.8);
    }

    fn options(n: usize) -> Vec<JudgeOption> {
        (0..n)
            .map(|i| JudgeOption {
                hypothesis: format!("H{i}."),
                leaves: vec![(format!("L{i}."), 0.5)],
            })
            .collect()
    }

    #[test]
    fn judge_picks_scripted_option() {
        let backends = Backends::mock(MockScript::default().on_contains(["OPTION 2: H1."], "2"));
        let out = block_on(judge("Q?", &options(3), 64, &backends)).unwrap();
        assert_eq!(out.chosen, 1);
    }

    #[test]
    fn judge_rejects_bad_input() {
        let backends = Backends::mock(MockScript::default().on_contains(["QUESTION"], "7"));
        assert!(block_on(judge("Q?", &options(1), 64, &backends)).is_err());
        assert!(matches!(
            block_on(judge("Q?", &options(5), 64, &backends)),
            Err(Error::Parse { .. })
        ));
        assert_eq!(parse_judge("Option 3.", 3), Ok(2));
        assert!(parse_judge("none", 3).is_err());
    }

    #[test]
    fn judge_prompt_lists_scores() {
        let p = judge_prompt("Q?", &options(2));
        assert!(p.contains("OPTION 1: H0.\nSUB-CLAIMS:\n(1) L0. [score 0.50]"));
    }
}
