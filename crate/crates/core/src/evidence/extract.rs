use crate::backends::{Backends, ChatRequest};
use crate::config::RunConfig;
use crate::error::{Error, ParseError, Result};
use crate::model::{format_timestamp, EvidenceFactor, SourceSpan};
use crate::prompts::{self, is_not_applicable, split_enumerated, strip_quotes};

/// At most this many observations are kept per span.
pub const MAX_OBSERVATIONS_PER_SPAN: usize = 3;

/// What an extraction prompt is asked to help with.
#[derive(Debug, Clone, PartialEq)]
pub enum ExtractionFocus {
    /// Offline extraction guided by the task question.
    Question(String),
    /// Test-time extraction guided by (leaf) claims.
    Claims(Vec<String>),
}

impl ExtractionFocus {
    pub fn text(&self) -> String {
        match self {
            ExtractionFocus::Question(q) => q.clone(),
            ExtractionFocus::Claims(c) => c.join(" "),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SpanContent {
    Lines(Vec<String>),
    Images(Vec<String>),
}

pub fn extraction_prompt(content: &SpanContent, focus: &ExtractionFocus) -> String {
    let question = focus.text();
    match (content, focus) {
        (SpanContent::Lines(lines), _) => prompts::render(
            prompts::EXTRACT_TRANSCRIPT,
            &[("question", &question), ("dialogue", &lines.join("\n"))],
        ),
        (SpanContent::Images(_), ExtractionFocus::Question(_)) => {
            prompts::render(prompts::EXTRACT_VIDEO, &[("question", &question)])
        }
        (SpanContent::Images(_), ExtractionFocus::Claims(_)) => {
            prompts::render(prompts::EXTRACT_VIDEO_TEST_TIME, &[("question", &question)])
        }
    }
}

/// `N/A` yields nothing; otherwise the first three enumerated inferences.
pub fn parse_observations(response: &str) -> Result<Vec<String>, ParseError> {
    if is_not_applicable(response) {
        return Ok(Vec::new());
    }
    let (items, _) = split_enumerated(response, 1);
    if items.is_empty() {
        return Err(ParseError::Malformed(
            "no enumerated inferences and no N/A".into(),
        ));
    }
    Ok(items
        .into_iter()
        .map(|(_, body)| strip_quotes(&body.split_whitespace().collect::<Vec<_>>().join(" ")).to_string())
        .filter(|s| !s.is_empty() && !is_not_applicable(s))
        .take(MAX_OBSERVATIONS_PER_SPAN)
        .collect())
}

/// Runs one extraction call for a span and turns the answer into factors
/// with ids `<id_prefix>.<k>`. Temporal spans get an `HH:MM:SS` label and
/// text prefix when temporal enhancement is on.
pub async fn extract_observations(
    span: &SourceSpan,
    content: &SpanContent,
    focus: &ExtractionFocus,
    id_prefix: &str,
    config: &RunConfig,
    backends: &Backends,
) -> Result<Vec<EvidenceFactor>> {
    let prompt = extraction_prompt(content, focus);
    let (backend, request) = match content {
        SpanContent::Lines(_) => (&backends.chat, ChatRequest::new(prompt)),
        SpanContent::Images(refs) => (
            &backends.vision,
            ChatRequest::new(prompt).with_images(refs.clone()),
        ),
    };
    let request = request.with_max_tokens(config.max_tokens);
    let context = format!("extracting {id_prefix}");
    let response = backend
        .complete(&request)
        .await
        .map_err(|e| Error::backend(&context, e))?;
    let observations = parse_observations(&response).map_err(|e| Error::parse(&context, e))?;

    let mut span = span.clone();
    let label = (config.temporal_enhancement && span.modality.is_temporal())
        .then(|| format_timestamp(span.start));
    span.timestamp_label = label.clone();
    Ok(observations
        .into_iter()
        .enumerate()
        .map(|(k, text)| EvidenceFactor {
            id: format!("{id_prefix}.{k}"),
            text: match &label {
                Some(l) => format!("{l} {text}"),
                None => text,
            },
            span: span.clone(),
            relevance: None,
        })
        .collect())
}
