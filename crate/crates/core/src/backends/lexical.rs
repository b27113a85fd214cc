use std::collections::BTreeSet;

use async_trait::async_trait;

use super::{BackendError, EntailmentBackend, RelevanceBackend};
use crate::scalar::{jaccard, Scalar};

/// Lowercased alphanumeric tokens.
pub fn tokens(text: &str) -> BTreeSet<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Token-set Jaccard overlap between `query` and `candidate`.
pub fn lexical_relevance<S: Scalar>(query: &str, candidate: &str) -> S {
    let q = tokens(query);
    let c = tokens(candidate);
    let inter = q.intersection(&c).count();
    let union = q.union(&c).count();
    jaccard(inter, union)
}

/// Deterministic relevance used when no cross-encoder service is configured.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalRelevance;

#[async_trait]
impl RelevanceBackend for LexicalRelevance {
    async fn relevance(&self, query: &str, candidates: &[String]) -> Result<Vec<f64>, BackendError> {
        if candidates.is_empty() {
            return Err(BackendError::InvalidInput("empty candidate list".into()));
        }
        Ok(candidates
            .iter()
            .map(|c| lexical_relevance(query, c))
            .collect())
    }
}

/// Reflexive entailment only: 1 for identical (trimmed) strings, else 0.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExactEntailment;

pub(super) fn check_pair(premise: &str, hypothesis: &str) -> Result<(), BackendError> {
    if premise.trim().is_empty() || hypothesis.trim().is_empty() {
        return Err(BackendError::InvalidInput(
            "entailment needs a non-empty premise and hypothesis".into(),
        ));
    }
    Ok(())
}

#[async_trait]
impl EntailmentBackend for ExactEntailment {
    async fn entailment(&self, premise: &str, hypothesis: &str) -> Result<f64, BackendError> {
        check_pair(premise, hypothesis)?;
        Ok(if premise.trim() == hypothesis.trim() {
            1.0
        } else {
            0.0
        })
    }
}

#[cfg(test)]
mod tests {
    use num_rational::Ratio;

    use super::*;

    #[test]
    fn identical_and_disjoint() {
        assert_eq!(lexical_relevance::<f64>("ice melts", "ice melts"), 1.0);
        assert_eq!(lexical_relevance::<f64>("ice melts", "dogs bark"), 0.0);
    }

    #[test]
    fn half_overlap_exact() {
        // {a,b} / {a,b,c,d}
        assert_eq!(lexical_relevance::<Ratio<i64>>("a b c", "a b d"), Ratio::new(1, 2));
        assert_eq!(lexical_relevance::<f64>("a b c", "a b d"), 0.5);
    }

    #[test]
    fn case_and_punctuation_ignored() {
        assert_eq!(lexical_relevance::<f64>("Ice, melts!", "ice melts"), 1.0);
    }
}
