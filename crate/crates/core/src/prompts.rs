//! Prompt templates and helpers for enumerated model output.
//!
//! Templates live in `prompts/*.txt` and use `{slot}` placeholders.

use std::sync::LazyLock;

use regex::Regex;

pub const DECOMPOSITION: &str = include_str!("../prompts/decomposition.txt");
pub const SCORING: &str = include_str!("../prompts/scoring_main.txt");
pub const SCORING_EXEMPLARS: &str = include_str!("../prompts/scoring_exemplars.txt");
pub const EXTRACT_TRANSCRIPT: &str = include_str!("../prompts/extract_transcript.txt");
pub const EXTRACT_VIDEO: &str = include_str!("../prompts/extract_video.txt");
pub const EXTRACT_VIDEO_TEST_TIME: &str = include_str!("../prompts/extract_video_test_time.txt");
pub const JUDGE: &str = include_str!("../prompts/judge.txt");
pub const HYPOTHESIS: &str = include_str!("../prompts/hypothesis.txt");
pub const SUMMARY: &str = include_str!("../prompts/summary.txt");

/// Replaces each `{key}` with its value. Unknown placeholders are left as is.
pub fn render(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (key, value) in slots {
        out = out.replace(&format!("{{{key}}}"), value);
    }
    out
}

/// `(1) a\n(2) b\n...`
pub fn enumerate<S: AsRef<str>>(items: &[S]) -> String {
    items
        .iter()
        .enumerate()
        .map(|(i, s)| format!("({}) {}", i + 1, s.as_ref()))
        .collect::<Vec<_>>()
        .join("\n")
}

static MARKER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?:^|\s)\((\d+)\)").unwrap());

/// A located `(n)` marker: its number, the byte offset where the marker
/// starts and where its body begins.
#[derive(Debug, Clone, Copy)]
struct Marker {
    number: usize,
    start: usize,
    body: usize,
}

fn markers(text: &str, pattern: &Regex) -> Vec<Marker> {
    pattern
        .captures_iter(text)
        .filter_map(|c| {
            let whole = c.get(0)?;
            let num = c.get(1)?;
            let open = num.start() - 1;
            Some(Marker {
                number: num.as_str().parse().ok()?,
                start: open.max(whole.start()),
                body: whole.end(),
            })
        })
        .collect()
}

/// Enumerated entries numbered consecutively from `first`.
///
/// Scanning stops at the first number that does not appear after the
/// previous entry, so `(1)`s inside entry text or stray numbers are not
/// mistaken for new entries. Returns `(number, body)` pairs with trimmed
/// bodies, plus the number of any later marker that could not be reached
/// in sequence.
pub fn split_enumerated(text: &str, first: usize) -> (Vec<(usize, String)>, Option<usize>) {
    split_enumerated_by(text, first, &MARKER)
}

/// Like [`split_enumerated`] with a caller-supplied marker pattern. The
/// pattern's first group must capture the entry number; the body starts
/// where the whole match ends.
pub fn split_enumerated_by(
    text: &str,
    first: usize,
    pattern: &Regex,
) -> (Vec<(usize, String)>, Option<usize>) {
    let all = markers(text, pattern);
    let mut picked: Vec<Marker> = Vec::new();
    let mut expected = first;
    let mut pos = 0;
    while let Some(m) = all
        .iter()
        .find(|m| m.number == expected && m.start >= pos)
    {
        picked.push(*m);
        pos = m.body;
        expected += 1;
    }
    let stray = all
        .iter()
        .find(|m| m.start >= pos && m.number > expected)
        .map(|m| m.number);
    let entries = picked
        .iter()
        .enumerate()
        .map(|(i, m)| {
            let end = picked.get(i + 1).map_or(text.len(), |n| n.start);
            (m.number, text[m.body..end].trim().to_string())
        })
        .collect();
    (entries, stray)
}

/// True for the "N/A" sentinel, tolerating quotes and a trailing period.
pub fn is_not_applicable(text: &str) -> bool {
    let t = text.trim().trim_end_matches('.');
    let t = strip_quotes(t).trim_end_matches('.').trim();
    t.eq_ignore_ascii_case("n/a")
}

pub fn strip_quotes(text: &str) -> &str {
    let t = text.trim();
    let t = t
        .strip_prefix(['"', '“', '\''])
        .unwrap_or(t);
    let t = t.strip_suffix(['"', '”', '\'']).unwrap_or(t);
    t.trim()
}
