//! Recursive claim decomposition into an entailment tree.

use futures::future::{try_join_all, BoxFuture};
use futures::FutureExt;

use crate::backends::{Backends, ChatRequest};
use crate::config::RunConfig;
use crate::error::{Error, ParseError, Result};
use crate::model::{child_id, Claim, TreeNode};
use crate::prompts::{self, is_not_applicable, split_enumerated, strip_quotes};

#[derive(Debug, Clone, PartialEq)]
pub enum Decomposition {
    Atomic,
    Split(Vec<Claim>),
}

pub fn decomposition_prompt(statement: &str) -> String {
    prompts::render(prompts::DECOMPOSITION, &[("statement", statement)])
}

/// Reads a decomposition response: `N/A` or two or more enumerated,
/// optionally quoted sentences.
pub fn parse_decomposition(response: &str) -> Result<Decomposition, ParseError> {
    if is_not_applicable(response) {
        return Ok(Decomposition::Atomic);
    }
    let (items, _) = split_enumerated(response, 1);
    let claims: Vec<Claim> = items
        .iter()
        .filter_map(|(_, body)| {
            // Only the first line of an entry is the sentence.
            let line = body.lines().next().unwrap_or_default();
            Claim::new(strip_quotes(line)).ok()
        })
        .collect();
    if claims.len() < 2 {
        return Err(ParseError::Malformed(format!(
            "expected N/A or at least two enumerated sentences, found {}",
            claims.len()
        )));
    }
    Ok(Decomposition::Split(claims))
}

/// Decomposes `root` until every branch is declared atomic or reaches
/// `config.decomposition_max`. The root gets id `"0"`.
pub async fn build_tree(root: Claim, config: &RunConfig, backends: &Backends) -> Result<TreeNode> {
    build_tree_with_id("0", root, config, backends).await
}

pub async fn build_tree_with_id(
    root_id: &str,
    root: Claim,
    config: &RunConfig,
    backends: &Backends,
) -> Result<TreeNode> {
    expand(root_id.to_string(), root, 0, config, backends).await
}

fn expand<'a>(
    id: String,
    claim: Claim,
    depth: usize,
    config: &'a RunConfig,
    backends: &'a Backends,
) -> BoxFuture<'a, Result<TreeNode>> {
    async move {
        let mut node = TreeNode::new(id, claim);
        if node.claim.atomic || depth >= config.decomposition_max {
            return Ok(node);
        }
        let request = ChatRequest::new(decomposition_prompt(&node.claim.text))
            .with_max_tokens(config.max_tokens);
        let response = backends
            .chat
            .complete(&request)
            .await
            .map_err(|e| Error::backend(format!("decomposing node {}", node.id), e))?;
        match parse_decomposition(&response) {
            Ok(Decomposition::Atomic) => node.claim.atomic = true,
            Ok(Decomposition::Split(parts)) => {
                let children = parts.into_iter().enumerate().map(|(i, c)| {
                    expand(child_id(&node.id, i), c, depth + 1, config, backends)
                });
                node.children = try_join_all(children).await?;
            }
            Err(e) => {
                tracing::warn!(node = %node.id, error = %e, "decomposition kept as leaf");
                node.warning = Some(format!("decomposition response unusable: {e}"));
            }
        }
        Ok(node)
    }
    .boxed()
}
