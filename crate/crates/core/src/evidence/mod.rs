//! Evidence bank construction: windowing and frame sampling of grounding
//! sources, then per-span observation extraction.

mod extract;
mod frames;
mod window;

use std::path::{Path, PathBuf};
use std::process::Command;

use futures::future::join_all;
use serde::{Deserialize, Serialize};

use crate::backends::Backends;
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{EvidenceBank, Modality, SourceDescriptor, SourceSpan};

pub use extract::{
    extract_observations, extraction_prompt, parse_observations, ExtractionFocus, SpanContent,
    MAX_OBSERVATIONS_PER_SPAN,
};
pub use frames::{frame_count, frame_timestamps, FrameSamplingParams};
pub use window::{parse_transcript, window_ranges, window_text};

/// Reads a JSON source manifest, resolving relative URIs against its
/// directory.
pub fn load_manifest(path: &Path) -> Result<Vec<SourceDescriptor>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut sources: Vec<SourceDescriptor> = serde_json::from_str(&text)
        .map_err(|e| Error::Document(format!("manifest {}: {e}", path.display())))?;
    resolve_uris(&mut sources, path.parent().unwrap_or(Path::new(".")));
    Ok(sources)
}

pub fn resolve_uris(sources: &mut [SourceDescriptor], base: &Path) {
    for s in sources {
        if !s.uri.contains("://") && Path::new(&s.uri).is_relative() && !s.uri.is_empty() {
            s.uri = base.join(&s.uri).to_string_lossy().into_owned();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCoverage {
    pub source_id: String,
    pub spans: usize,
    pub spans_with_factors: usize,
    pub factors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BankReport {
    pub bank: EvidenceBank,
    pub coverage: Vec<SourceCoverage>,
    /// Spans whose extraction failed and were skipped.
    pub warnings: Vec<String>,
}

struct SpanJob {
    span: SourceSpan,
    content: SpanContent,
    id_prefix: String,
}

fn read(source: &SourceDescriptor) -> Result<String> {
    std::fs::read_to_string(&source.uri).map_err(|e| Error::Source {
        id: source.id.clone(),
        reason: format!("{}: {e}", source.uri),
    })
}

fn check_exists(source: &SourceDescriptor) -> Result<()> {
    let remote = source.uri.contains("://");
    if !remote && !Path::new(&source.uri).exists() {
        return Err(Error::Source {
            id: source.id.clone(),
            reason: format!("{} does not exist", source.uri),
        });
    }
    Ok(())
}

fn grab_frame(template: &str, source: &SourceDescriptor, t: f64, index: usize) -> Result<String> {
    let dir = std::env::temp_dir().join("bonsai-frames");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let out: PathBuf = dir.join(format!("{}-{index:02}.jpg", source.id.replace('/', "_")));
    let cmd = template
        .replace("{uri}", &source.uri)
        .replace("{t}", &format!("{t:.3}"))
        .replace("{out}", &out.to_string_lossy());
    let status = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .status()
        .map_err(|e| Error::Source {
            id: source.id.clone(),
            reason: format!("frame grabber failed to start: {e}"),
        })?;
    if !status.success() {
        return Err(Error::Source {
            id: source.id.clone(),
            reason: format!("frame grabber exited with {status} at t={t:.3}"),
        });
    }
    Ok(out.to_string_lossy().into_owned())
}

/// Splits a source into extraction jobs and returns its descriptor with the
/// measured length.
fn plan(source: &SourceDescriptor, config: &RunConfig) -> Result<(SourceDescriptor, Vec<SpanJob>)> {
    let mut desc = source.clone();
    let span = |modality, start: f64, end: f64| SourceSpan {
        source_id: source.id.clone(),
        modality,
        start,
        end,
        timestamp_label: None,
    };
    let prefix = |i: usize| format!("{}:{i}", source.id);
    let jobs = match source.modality {
        Modality::Text => {
            let text = read(source)?;
            let lines: Vec<String> = text.lines().map(str::to_string).collect();
            desc.length = lines.len() as f64;
            window_ranges(lines.len(), config.window, config.stride)
                .map_err(|e| Error::Source {
                    id: source.id.clone(),
                    reason: e.to_string(),
                })?
                .into_iter()
                .enumerate()
                .map(|(i, r)| SpanJob {
                    span: span(Modality::Text, r.start as f64, r.end as f64),
                    content: SpanContent::Lines(lines[r].to_vec()),
                    id_prefix: prefix(i),
                })
                .collect()
        }
        Modality::Transcript => {
            let entries = parse_transcript(&read(source)?).map_err(|e| Error::Source {
                id: source.id.clone(),
                reason: e.to_string(),
            })?;
            let last = entries.iter().map(|(t, _)| *t).fold(0.0, f64::max);
            desc.length = source.length.max(last);
            window_ranges(entries.len(), config.window, config.stride)
                .map_err(|e| Error::Source {
                    id: source.id.clone(),
                    reason: e.to_string(),
                })?
                .into_iter()
                .enumerate()
                .map(|(i, r)| {
                    let window = &entries[r];
                    let start = window.iter().map(|(t, _)| *t).fold(f64::INFINITY, f64::min);
                    let end = window.iter().map(|(t, _)| *t).fold(0.0, f64::max);
                    SpanJob {
                        span: span(Modality::Transcript, start, end),
                        content: SpanContent::Lines(window.iter().map(|(_, l)| l.clone()).collect()),
                        id_prefix: prefix(i),
                    }
                })
                .collect()
        }
        Modality::VideoFrame => {
            if source.length.is_nan() || source.length < 0.0 {
                return Err(Error::Source {
                    id: source.id.clone(),
                    reason: "video duration missing or negative".into(),
                });
            }
            let times = frame_timestamps(source.length, &config.frame_sampling)?;
            let mut jobs = Vec::with_capacity(times.len());
            for (i, t) in times.into_iter().enumerate() {
                let frame = match &config.frame_grabber {
                    Some(template) => grab_frame(template, source, t, i)?,
                    None => format!("{}#t={t:.3}", source.uri),
                };
                jobs.push(SpanJob {
                    span: span(Modality::VideoFrame, t, t),
                    content: SpanContent::Images(vec![frame]),
                    id_prefix: prefix(i),
                });
            }
            jobs
        }
        Modality::Image => {
            check_exists(source)?;
            desc.length = 0.0;
            vec![SpanJob {
                span: span(Modality::Image, 0.0, 0.0),
                content: SpanContent::Images(vec![source.uri.clone()]),
                id_prefix: prefix(0),
            }]
        }
    };
    Ok((desc, jobs))
}

/// Builds an evidence bank from `sources`. Unreadable sources abort the
/// build; failed extraction calls skip their span with a warning. Factors
/// are ordered by `(source_id, span.start)`.
pub async fn build_bank(
    sources: &[SourceDescriptor],
    focus: &ExtractionFocus,
    config: &RunConfig,
    backends: &Backends,
) -> Result<BankReport> {
    if sources.is_empty() {
        return Err(Error::Precondition("no sources".into()));
    }
    let mut descriptors = Vec::new();
    let mut jobs = Vec::new();
    for source in sources {
        let (desc, source_jobs) = plan(source, config)?;
        descriptors.push(desc);
        jobs.extend(source_jobs);
    }

    let results = join_all(jobs.iter().map(|job| {
        extract_observations(&job.span, &job.content, focus, &job.id_prefix, config, backends)
    }))
    .await;

    let mut coverage: Vec<SourceCoverage> = descriptors
        .iter()
        .map(|d| SourceCoverage {
            source_id: d.id.clone(),
            spans: 0,
            spans_with_factors: 0,
            factors: 0,
        })
        .collect();
    let mut factors = Vec::new();
    let mut warnings = Vec::new();
    for (job, result) in jobs.iter().zip(results) {
        let cov = coverage
            .iter_mut()
            .find(|c| c.source_id == job.span.source_id)
            .expect("planned source");
        cov.spans += 1;
        match result {
            Ok(found) => {
                if !found.is_empty() {
                    cov.spans_with_factors += 1;
                }
                cov.factors += found.len();
                factors.extend(found);
            }
            Err(e) => {
                tracing::warn!(span = %job.id_prefix, error = %e, "span skipped");
                warnings.push(e.to_string());
            }
        }
    }
    factors.sort_by(|a, b| {
        a.span
            .source_id
            .cmp(&b.span.source_id)
            .then(a.span.start.total_cmp(&b.span.start))
    });
    Ok(BankReport {
        bank: EvidenceBank {
            factors,
            sources: descriptors,
        },
        coverage,
        warnings,
    })
}
