//! The `bank`, `score` and `mcq` commands. Each returns the text it prints
//! on stdout so tests can check it without spawning a process.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bonsai_core::counterfactual::{answer_mcq, rescale_evidence, EvidenceInput};
use bonsai_core::evidence::{build_bank, resolve_uris, ExtractionFocus};
use bonsai_core::model::{EvidenceBank, SourceDescriptor};
use bonsai_core::run::{score_hypothesis, RunDocument};
use bonsai_core::{Error, Result};
use serde::Deserialize;

use crate::setup::Setup;

/// Writes via a sibling temp file and rename, so readers never see a
/// partial document.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn load_bank(path: &Path) -> Result<EvidenceBank> {
    EvidenceBank::from_jsonl(&read(path)?)
}

/// A manifest is either a bare source list or `{question, sources}`.
#[derive(Deserialize)]
#[serde(untagged)]
enum Manifest {
    Sources(Vec<SourceDescriptor>),
    WithQuestion {
        question: String,
        sources: Vec<SourceDescriptor>,
    },
}

fn load_bank_manifest(path: &Path) -> Result<(Option<String>, Vec<SourceDescriptor>)> {
    let text = read(path)?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| Error::Document(format!("manifest {}: {e}", path.display())))?;
    let (question, mut sources) = match manifest {
        Manifest::Sources(s) => (None, s),
        Manifest::WithQuestion { question, sources } => (Some(question), sources),
    };
    resolve_uris(&mut sources, path.parent().unwrap_or(Path::new(".")));
    Ok((question, sources))
}

pub fn cmd_bank(setup: &Setup, manifest: &Path, question: Option<&str>, out: &Path) -> Result<String> {
    let (file_question, sources) = load_bank_manifest(manifest)?;
    let question = question
        .map(str::to_string)
        .or(file_question)
        .ok_or_else(|| Error::Precondition("no question: pass --question or add one to the manifest".into()))?;
    let backends = setup.backends()?;
    let report = block(build_bank(
        &sources,
        &ExtractionFocus::Question(question),
        &setup.config,
        &backends,
    ))?;
    for w in &report.warnings {
        tracing::warn!("{w}");
    }
    write_atomic(out, &report.bank.to_jsonl())?;
    let mut text = format!("factors: {}\n", report.bank.len());
    for c in &report.coverage {
        let _ = writeln!(
            text,
            "{}: {} spans, {} with observations, {} factors",
            c.source_id, c.spans, c.spans_with_factors, c.factors
        );
    }
    Ok(text)
}

pub fn cmd_score(
    setup: &Setup,
    hypothesis: &str,
    bank: &Path,
    question: Option<&str>,
    out: Option<&Path>,
) -> Result<String> {
    let bank = load_bank(bank)?;
    let backends = setup.backends()?;
    let run = block(score_hypothesis(hypothesis, question, bank, &setup.config, &backends))?;
    let root = run.root_prob;
    if let Some(out) = out {
        write_atomic(out, &RunDocument::Tree(run).to_json())?;
    }
    Ok(format!("{root:.4}\n"))
}

/// `{question, options, sources?, bank?}`. Relative paths resolve against
/// the file's directory.
#[derive(Debug, Deserialize)]
pub struct McqFile {
    pub question: String,
    pub options: Vec<String>,
    #[serde(default)]
    pub sources: Vec<SourceDescriptor>,
    #[serde(default)]
    pub bank: Option<PathBuf>,
}

impl McqFile {
    pub fn load(path: &Path) -> Result<Self> {
        let mut file: McqFile = serde_json::from_str(&read(path)?)
            .map_err(|e| Error::Document(format!("mcq file {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        resolve_uris(&mut file.sources, base);
        if let Some(bank) = &mut file.bank {
            if bank.is_relative() {
                *bank = base.join(&*bank);
            }
        }
        Ok(file)
    }
}

pub fn cmd_mcq(setup: &Setup, mcq: &Path, out: Option<&Path>) -> Result<String> {
    let file = McqFile::load(mcq)?;
    let evidence = match (&file.bank, file.sources.is_empty()) {
        (Some(bank), _) => EvidenceInput::Bank(load_bank(bank)?),
        (None, false) => EvidenceInput::Sources(file.sources.clone()),
        (None, true) => return Err(Error::Precondition("the mcq file names neither sources nor a bank".into())),
    };
    let backends = setup.backends()?;
    let mut run = block(answer_mcq(&file.question, &file.options, &evidence, &setup.config, &backends))?;
    if !file.sources.is_empty() {
        run = block(rescale_evidence(run, &file.sources, &backends))?;
    } else if run.option_scores.iter().all(|s| *s < setup.config.theta) && setup.config.rescale_rounds > 0 {
        run.warnings
            .push("scores are below theta but no sources are available for another evidence round".into());
    }
    let mut text = String::new();
    for (i, (score, option)) in run.option_scores.iter().zip(&run.options).enumerate() {
        let _ = writeln!(text, "option {}: {score:.4}  {}", i + 1, option.text);
    }
    let _ = writeln!(text, "evidence rounds: {}", run.evidence_rounds.len());
    let _ = writeln!(text, "chosen: {}", run.chosen + 1);
    if let Some(out) = out {
        write_atomic(out, &RunDocument::Mcq(run).to_json())?;
    }
    Ok(text)
}

fn block<F: std::future::Future>(f: F) -> F::Output {
    match tokio::runtime::Handle::try_current() {
        Ok(handle) => tokio::task::block_in_place(|| handle.block_on(f)),
        Err(_) => tokio::runtime::Builder::new_current_thread()
            .enable_all()
            .build()
            .expect("tokio runtime")
            .block_on(f),
    }
}
