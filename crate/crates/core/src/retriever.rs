//! Top-k evidence selection for a claim.

use std::cmp::Ordering;

use crate::backends::Backends;
use crate::error::{Error, Result};
use crate::model::{Claim, EvidenceBank, EvidenceFactor};

/// Descending relevance, then ascending `(source_id, span.start, id)`.
pub fn retrieval_order(a: &EvidenceFactor, b: &EvidenceFactor) -> Ordering {
    let ra = a.relevance.unwrap_or(f64::NEG_INFINITY);
    let rb = b.relevance.unwrap_or(f64::NEG_INFINITY);
    rb.total_cmp(&ra)
        .then_with(|| a.span.source_id.cmp(&b.span.source_id))
        .then_with(|| a.span.start.total_cmp(&b.span.start))
        .then_with(|| a.id.cmp(&b.id))
}

/// Attaches `scores` to `factors` and keeps the best `k`.
pub fn rank_top_k(factors: &[EvidenceFactor], scores: &[f64], k: usize) -> Vec<EvidenceFactor> {
    let mut scored: Vec<EvidenceFactor> = factors
        .iter()
        .zip(scores)
        .map(|(f, &s)| EvidenceFactor {
            relevance: Some(s),
            ..f.clone()
        })
        .collect();
    scored.sort_by(retrieval_order);
    scored.truncate(k);
    scored
}

/// The `min(k, |bank|)` factors most relevant to `claim`, best first. Each
/// returned factor carries its relevance score.
pub async fn retrieve_top_k(
    claim: &Claim,
    bank: &EvidenceBank,
    k: usize,
    backends: &Backends,
) -> Result<Vec<EvidenceFactor>> {
    if k == 0 {
        return Err(Error::Precondition("retrieval k must be at least 1".into()));
    }
    if bank.is_empty() {
        return Err(Error::Precondition("empty evidence bank".into()));
    }
    let texts: Vec<String> = bank.factors.iter().map(|f| f.text.clone()).collect();
    let scores = backends
        .relevance
        .relevance(&claim.text, &texts)
        .await
        .map_err(|e| Error::backend("scoring evidence relevance", e))?;
    if scores.len() != texts.len() {
        return Err(Error::Precondition(format!(
            "relevance backend returned {} scores for {} candidates",
            scores.len(),
            texts.len()
        )));
    }
    Ok(rank_top_k(&bank.factors, &scores, k))
}

/// Stable sort by span start; relevance scores are left alone.
pub fn order_temporal(mut factors: Vec<EvidenceFactor>) -> Vec<EvidenceFactor> {
    factors.sort_by(|a, b| a.span.start.total_cmp(&b.span.start));
    factors
}

#[cfg(test)]
mod tests {
    use futures::executor::block_on;

    use super::*;
    use crate::backends::MockScript;
    use crate::model::{Modality, SourceSpan};

    fn factor(id: &str, text: &str, start: f64) -> EvidenceFactor {
        EvidenceFactor {
            id: id.into(),
            text: text.into(),
            span: SourceSpan {
                source_id: "s".into(),
                modality: Modality::Transcript,
                start,
                end: start,
                timestamp_label: None,
            },
            relevance: None,
        }
    }

    fn bank(factors: Vec<EvidenceFactor>) -> EvidenceBank {
        EvidenceBank {
            factors,
            sources: vec![],
        }
    }

    #[test]
    fn exact_match_wins_under_lexical() {
        let b = bank(vec![factor("a", "dogs bark", 0.0), factor("b", "ice melts", 1.0)]);
        let top = block_on(retrieve_top_k(
            &Claim::new("ice melts").unwrap(),
            &b,
            1,
            &Backends::mock(MockScript::default()),
        ))
        .unwrap();
        assert_eq!(top[0].id, "b");
        assert_eq!(top[0].relevance, Some(1.0));
    }

    #[test]
    fn k_larger_than_bank() {
        let b = bank(vec![factor("a", "x", 0.0), factor("b", "y", 1.0), factor("c", "z", 2.0)]);
        let top = block_on(retrieve_top_k(
            &Claim::new("q").unwrap(),
            &b,
            10,
            &Backends::mock(MockScript::default()),
        ))
        .unwrap();
        assert_eq!(top.len(), 3);
    }

    #[test]
    fn ties_break_by_span_position() {
        let scores = [0.1, 0.9, 0.9, 0.3, 0.2];
        let factors: Vec<_> = (0..5)
            .map(|i| factor(&format!("f{i}"), "t", 10.0 - i as f64))
            .collect();
        let top = rank_top_k(&factors, &scores, 2);
        let ids: Vec<_> = top.iter().map(|f| f.id.as_str()).collect();
        // f2 starts at 8.0, f1 at 9.0
        assert_eq!(ids, ["f2", "f1"]);
    }

    #[test]
    fn empty_bank_rejected() {
        let err = block_on(retrieve_top_k(
            &Claim::new("q").unwrap(),
            &bank(vec![]),
            3,
            &Backends::mock(MockScript::default()),
        ));
        assert!(err.is_err());
    }

    #[test]
    fn temporal_order_is_stable() {
        let ordered = order_temporal(vec![
            factor("a", "", 30.0),
            factor("b", "", 10.0),
            factor("c", "", 20.0),
            factor("d", "", 10.0),
        ]);
        let ids: Vec<_> = ordered.iter().map(|f| f.id.as_str()).collect();
        assert_eq!(ids, ["b", "d", "c", "a"]);
        assert!(order_temporal(vec![]).is_empty());
    }
}
