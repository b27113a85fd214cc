//! Scripted backends and brute-force oracles shared by the randomized
//! suites. Nothing here calls into the code paths it checks, apart from the
//! entry point under test.
#![allow(dead_code)]

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

use async_trait::async_trait;
use bonsai_core::backends::{
    BackendError, Backends, ChatBackend, ChatRequest, EntailmentBackend, LexicalRelevance,
    RelevanceBackend,
};
use bonsai_core::counterfactual::prune_shared_leaves;
use bonsai_core::inference::{infer, InferenceContext};
use bonsai_core::model::{leaves, Claim, EvidenceBank, EvidenceFactor, Modality, SourceSpan, TreeNode};
use bonsai_core::retriever::retrieve_top_k;
use bonsai_core::scorer::EvidenceItem;
use bonsai_core::RunConfig;
use futures::executor::block_on;
use rand::Rng;

/// Rubric score 0..=10 for a hypothesis under a list of conditioning claims.
pub fn scripted(hypothesis: &str, conditions: &[String]) -> u64 {
    let mut h = DefaultHasher::new();
    hypothesis.hash(&mut h);
    conditions.hash(&mut h);
    h.finish() % 11
}

const COND: &str = "It is true that: ";

/// Answers scoring prompts with `scripted(hypothesis, conditions)`.
pub struct TableScorer;

#[async_trait]
impl ChatBackend for TableScorer {
    async fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let p = &request.prompt;
        let at = p.rfind("\nHYPOTHESIS: ").ok_or_else(|| BackendError::Response("no hypothesis".into()))?;
        let rest = &p[at + "\nHYPOTHESIS: ".len()..];
        let hyp = rest.lines().next().unwrap();
        let info_at = rest.find("NEW INFORMATION:\n").unwrap() + "NEW INFORMATION:\n".len();
        let info_end = rest.find("\n\nPROBABILITY SCORES:").unwrap();
        let items: Vec<&str> = rest[info_at..info_end].lines().collect();
        let conds: Vec<String> = items
            .iter()
            .filter_map(|l| l.split_once(") ").map(|(_, t)| t))
            .filter_map(|t| t.strip_prefix(COND))
            .map(str::to_string)
            .collect();
        let mut out = String::from("(0) EXPLANATION: base rate.\nSCORE: 5");
        for i in 1..=items.len() {
            let s = if i == items.len() { scripted(hyp, &conds) } else { 5 };
            out.push_str(&format!("\n({i}) EXPLANATION: update.\nSCORE: {s}"));
        }
        Ok(out)
    }
}

/// Entailment looked up in a (premise, hypothesis) table; unlisted pairs
/// score 0.
pub struct TableEntailment(pub Vec<((String, String), f64)>);

#[async_trait]
impl EntailmentBackend for TableEntailment {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        Ok(self
            .0
            .iter()
            .find(|((p, h), _)| p == premise && h == hypothesis)
            .map_or(0.0, |(_, s)| *s))
    }
}

/// Returns `score` for candidate `i`, encoded as the number after `#`.
pub struct IndexedRelevance(pub Vec<f64>);

#[async_trait]
impl RelevanceBackend for IndexedRelevance {
    async fn relevance(&self, _: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        Ok(candidates
            .iter()
            .map(|c| self.0[c.rsplit('#').next().unwrap().parse::<usize>().unwrap()])
            .collect())
    }
}

pub fn table_backends() -> Backends {
    Backends {
        chat: Arc::new(TableScorer),
        vision: Arc::new(TableScorer),
        relevance: Arc::new(LexicalRelevance),
        entailment: Arc::new(TableEntailment(Vec::new())),
    }
}

#[derive(Debug, Clone)]
pub enum Shape {
    Leaf(bool),
    Node(bool, Vec<Shape>),
}

/// Depth at most `depth`, fanout 2..=3, roughly one node in eight pruned.
pub fn random_shape(rng: &mut impl Rng, depth: u32) -> Shape {
    let pruned = rng.gen_ratio(1, 8);
    if depth == 0 || rng.gen_ratio(1, 3) {
        return Shape::Leaf(pruned);
    }
    let n = rng.gen_range(2..=3);
    Shape::Node(pruned, (0..n).map(|_| random_shape(rng, depth - 1)).collect())
}

pub fn build(shape: &Shape, id: String) -> TreeNode {
    let claim = Claim::new(format!("claim {id}")).unwrap();
    match shape {
        Shape::Leaf(p) => TreeNode {
            pruned: *p,
            ..TreeNode::new(id, claim)
        },
        Shape::Node(p, children) => TreeNode {
            pruned: *p,
            children: children
                .iter()
                .enumerate()
                .map(|(i, c)| build(c, format!("{id}.{i}")))
                .collect(),
            ..TreeNode::new(id, claim)
        },
    }
}

/// Product over unpruned leaves of the scripted conditional, where a leaf's
/// conditions are collected along its root path: at each level, the claims
/// of the unpruned later siblings of the path node.
pub fn oracle(tree: &TreeNode) -> f64 {
    fn paths<'a>(n: &'a TreeNode, path: &mut Vec<(&'a TreeNode, usize)>, out: &mut Vec<Vec<(&'a TreeNode, usize)>>) {
        if n.pruned {
            return;
        }
        if n.children.is_empty() {
            out.push(path.clone());
            return;
        }
        for (i, c) in n.children.iter().enumerate() {
            path.push((n, i));
            paths(c, path, out);
            path.pop();
        }
    }
    let mut all = Vec::new();
    paths(tree, &mut Vec::new(), &mut all);
    let mut product = 1.0;
    for path in &all {
        let mut conds = vec!["root context".to_string()];
        for (parent, i) in path {
            conds.extend(
                parent.children[i + 1..]
                    .iter()
                    .filter(|s| !s.pruned)
                    .map(|s| s.claim.text.clone()),
            );
        }
        let leaf = match path.last() {
            Some((parent, i)) => &parent.children[*i],
            None => tree,
        };
        product *= scripted(&leaf.claim.text, &conds) as f64 / 10.0;
    }
    product
}

fn one_factor_bank() -> EvidenceBank {
    EvidenceBank::from_jsonl(
        r#"{"id":"s:0.0","text":"An observation.","source_id":"s","modality":"text","start":0.0,"end":1.0}"#,
    )
    .unwrap()
}

/// Runs inference on the tree for `shape` (root forced unpruned) under a
/// root context condition. Returns the tree, its inferred root and the
/// oracle's value.
pub fn infer_against_oracle(shape: &Shape) -> (TreeNode, f64, f64) {
    let mut tree = build(shape, "0".into());
    tree.pruned = false;
    let cfg = RunConfig {
        evidence_max: 1,
        ..RunConfig::default()
    };
    let backends = table_backends();
    let bank = one_factor_bank();
    let ctx = InferenceContext {
        bank: &bank,
        summary: "S.",
        counterfactual: None,
        config: &cfg,
        backends: &backends,
    };
    let root_cond = [EvidenceItem::condition("ctx", "root context")];
    let p = block_on(infer(&mut tree, &root_cond, ctx)).unwrap();
    let expected = oracle(&tree);
    (tree, p, expected)
}

pub fn option_trees(leaf_counts: &[usize]) -> Vec<TreeNode> {
    leaf_counts
        .iter()
        .enumerate()
        .map(|(o, &n)| {
            let root = TreeNode::new(o.to_string(), Claim::new(format!("H{o}.")).unwrap());
            if n == 1 {
                return root;
            }
            root.with_children(
                (0..n)
                    .map(|i| TreeNode::new(format!("{o}.{i}"), Claim::new(format!("leaf {o}.{i}")).unwrap()))
                    .collect(),
            )
        })
        .collect()
}

/// Prunes option trees with `leaf_counts` leaves each under an entailment
/// table drawn cyclically from `raw` (in twentieths), then checks every
/// decision against the every-other-hypothesis rule.
pub fn check_pruning(leaf_counts: &[usize], raw: &[u8], tau: f64) -> Result<(), String> {
    let mut trees = option_trees(leaf_counts);
    let original: Vec<Vec<(String, String)>> = trees
        .iter()
        .map(|t| leaves(t).iter().map(|l| (l.id.clone(), l.claim.text.clone())).collect())
        .collect();
    let hyps: Vec<String> = trees.iter().map(|t| t.claim.text.clone()).collect();
    let mut table = Vec::new();
    let mut k = 0;
    for leafs in &original {
        for (_, text) in leafs {
            for h in &hyps {
                table.push(((h.clone(), text.clone()), raw[k % raw.len()] as f64 / 20.0));
                k += 1;
            }
        }
    }
    let lookup = |h: &str, l: &str| table.iter().find(|((p, q), _)| p == h && q == l).unwrap().1;
    let backends = Backends {
        entailment: Arc::new(TableEntailment(table.clone())),
        ..table_backends()
    };
    block_on(prune_shared_leaves(&mut trees, tau, &backends)).map_err(|e| e.to_string())?;

    for (o, tree) in trees.iter().enumerate() {
        let survivors = leaves(tree);
        if survivors.is_empty() {
            return Err(format!("option {o} lost every leaf"));
        }
        let qualifies: Vec<bool> = original[o]
            .iter()
            .map(|(_, text)| {
                hyps.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != o)
                    .all(|(_, h)| lookup(h, text) >= tau)
            })
            .collect();
        if qualifies.iter().all(|q| *q) {
            if survivors.len() != 1 {
                return Err(format!("option {o}: every leaf shared, {} survive", survivors.len()));
            }
            continue;
        }
        for ((id, _), q) in original[o].iter().zip(&qualifies) {
            if tree.find(id).unwrap().pruned != *q {
                return Err(format!("option {o} leaf {id}: pruned should be {q}"));
            }
        }
    }
    Ok(())
}

/// A factor per row of `(source, start, relevance in quarters)`, retrieved
/// with top-`k` and compared with repeated selection of the best remaining
/// factor.
pub fn check_retrieval(rows: &[(u8, u8, u8)], k: usize) -> Result<(), String> {
    let factors: Vec<EvidenceFactor> = rows
        .iter()
        .enumerate()
        .map(|(i, (s, t, _))| EvidenceFactor {
            id: format!("f{i:04}"),
            text: format!("obs #{i}"),
            span: SourceSpan {
                source_id: format!("s{s}"),
                modality: Modality::Text,
                start: *t as f64,
                end: *t as f64 + 1.0,
                timestamp_label: None,
            },
            relevance: None,
        })
        .collect();
    let scores: Vec<f64> = rows.iter().map(|(_, _, r)| *r as f64 / 4.0).collect();
    let bank = EvidenceBank {
        factors: factors.clone(),
        sources: vec![],
    };
    let backends = Backends {
        relevance: Arc::new(IndexedRelevance(scores.clone())),
        ..table_backends()
    };
    let got = block_on(retrieve_top_k(&Claim::new("q").unwrap(), &bank, k, &backends)).map_err(|e| e.to_string())?;

    let key = |x: usize| (-scores[x], factors[x].span.source_id.clone(), factors[x].span.start, factors[x].id.clone());
    let mut pool: Vec<usize> = (0..factors.len()).collect();
    let mut expected = Vec::new();
    while expected.len() < k && !pool.is_empty() {
        let mut best = 0;
        for j in 1..pool.len() {
            if key(pool[j]).partial_cmp(&key(pool[best])) == Some(std::cmp::Ordering::Less) {
                best = j;
            }
        }
        expected.push(factors[pool.remove(best)].id.clone());
    }
    let got: Vec<String> = got.iter().map(|f| f.id.clone()).collect();
    if got != expected {
        return Err(format!("got {got:?}, expected {expected:?}"));
    }
    Ok(())
}
