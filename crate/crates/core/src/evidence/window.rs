use std::ops::Range;

use crate::error::{Error, Result};
use crate::model::{Modality, SourceSpan};

/// Overlapping line windows starting at `0, stride, 2*stride, ...`; the last
/// window ends at the final line.
pub fn window_ranges(line_count: usize, window: usize, stride: usize) -> Result<Vec<Range<usize>>> {
    if line_count == 0 {
        return Err(Error::Precondition("empty document".into()));
    }
    if stride == 0 || stride > window {
        return Err(Error::Precondition(format!(
            "window stride must satisfy 1 <= stride <= window, got stride {stride}, window {window}"
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    loop {
        let end = (start + window).min(line_count);
        out.push(start..end);
        if end == line_count {
            break;
        }
        start += stride;
    }
    Ok(out)
}

/// Line-index spans over `lines` for source `source_id`.
pub fn window_text<S: AsRef<str>>(
    source_id: &str,
    lines: &[S],
    window: usize,
    stride: usize,
) -> Result<Vec<SourceSpan>> {
    Ok(window_ranges(lines.len(), window, stride)?
        .into_iter()
        .map(|r| SourceSpan {
            source_id: source_id.to_string(),
            modality: Modality::Text,
            start: r.start as f64,
            end: r.end as f64,
            timestamp_label: None,
        })
        .collect())
}

/// Parses `start-seconds<TAB>text` transcript lines. Blank lines are skipped.
pub fn parse_transcript(text: &str) -> Result<Vec<(f64, String)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (ts, body) = line.split_once('\t').ok_or_else(|| {
            Error::Document(format!("transcript line {} has no tab separator", i + 1))
        })?;
        let t: f64 = ts.trim().parse().map_err(|_| {
            Error::Document(format!("transcript line {}: bad timestamp `{ts}`", i + 1))
        })?;
        if t.is_nan() || t < 0.0 {
            return Err(Error::Document(format!(
                "transcript line {}: negative timestamp",
                i + 1
            )));
        }
        out.push((t, body.trim().to_string()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn twenty_lines_eight_by_four() {
        assert_eq!(
            window_ranges(20, 8, 4).unwrap(),
            vec![0..8, 4..12, 8..16, 12..20]
        );
    }

    #[test]
    fn short_document() {
        assert_eq!(window_ranges(5, 8, 4).unwrap(), vec![0..5]);
    }

    #[test]
    fn bad_inputs() {
        assert!(window_ranges(10, 4, 6).is_err());
        assert!(window_ranges(0, 8, 4).is_err());
        assert!(window_ranges(10, 4, 0).is_err());
    }

    #[test]
    fn spans_carry_line_indices() {
        let lines: Vec<String> = (0..20).map(|i| format!("line {i}")).collect();
        let spans = window_text("doc", &lines, 8, 4).unwrap();
        assert_eq!(spans.len(), 4);
        assert_eq!((spans[3].start, spans[3].end), (12.0, 20.0));
    }

    #[test]
    fn transcript_lines() {
        let t = parse_transcript("0\tHello.\n14.5\tThe scan came back.\n").unwrap();
        assert_eq!(t, vec![(0.0, "Hello.".into()), (14.5, "The scan came back.".into())]);
        assert!(parse_transcript("no tab here").is_err());
    }

    proptest! {
        #[test]
        fn windows_cover_with_fixed_overlap(n in 1usize..200, window in 1usize..15, stride_seed in 0usize..15) {
            let stride = 1 + stride_seed % window;
            let spans = window_ranges(n, window, stride).unwrap();
            prop_assert_eq!(spans[0].start, 0);
            prop_assert_eq!(spans.last().unwrap().end, n);
            let mut covered = vec![false; n];
            for r in &spans {
                prop_assert!(r.len() <= window && !r.is_empty());
                for i in r.clone() { covered[i] = true; }
            }
            prop_assert!(covered.iter().all(|&c| c));
            for pair in spans.windows(2) {
                prop_assert_eq!(pair[1].start - pair[0].start, stride);
                prop_assert_eq!(pair[0].end - pair[1].start, window - stride);
            }
        }
    }
}
