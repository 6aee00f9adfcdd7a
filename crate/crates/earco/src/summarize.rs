//! LLM summarization of cleaned incident fields.
//!
//! The second cleaning stage: after local markup stripping, the
//! summarizer condenses summaries and root causes. The prompt instructs
//! the model to emit the sentinel `NOISY_ROOT_CAUSE` when a field has no
//! causal content, which is how non-informative root causes get filtered
//! deterministically.

use crate::clean::clean_text;
use crate::gateway::{ChatRequest, Gateway, GatewayError, Role};
use crate::incident::{CleaningReport, Corpus, SummarizationStatus};
use crate::runtime::parallel_map;
use crate::templates;

/// Sentinel the summarization prompt reserves for non-informative fields.
pub const NOISY_SENTINEL: &str = "NOISY_ROOT_CAUSE";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Summary,
    RootCause,
}

impl FieldKind {
    fn label(&self) -> &'static str {
        match self {
            FieldKind::Summary => "summary",
            FieldKind::RootCause => "root cause",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SummarizeOutcome {
    Summarized(String),
    RejectedNoisy,
    SkippedEmpty,
}

/// Summarize one field. Empty input short-circuits without a gateway
/// call; the sentinel reply maps to [`SummarizeOutcome::RejectedNoisy`].
pub fn summarize_field(
    gateway: &Gateway,
    field_text: &str,
    kind: FieldKind,
) -> Result<SummarizeOutcome, GatewayError> {
    if field_text.trim().is_empty() {
        return Ok(SummarizeOutcome::SkippedEmpty);
    }
    let prompt =
        templates::render(templates::SUMMARIZE, &[("kind", kind.label()), ("text", field_text)]);
    let response = gateway.complete(&ChatRequest::new(Role::Summarizer, None, prompt))?;
    let content = response.content.trim();
    if content.is_empty() || content == NOISY_SENTINEL {
        return Ok(SummarizeOutcome::RejectedNoisy);
    }
    Ok(SummarizeOutcome::Summarized(content.to_string()))
}

/// Stage one: strip markup from every incident's summary and root cause.
/// `cleaned_summary` is populated; `root_cause` is cleaned in place.
pub fn clean_corpus(corpus: &mut Corpus) -> Vec<CleaningReport> {
    corpus
        .incidents
        .iter_mut()
        .map(|incident| {
            let (summary, mut counts) = clean_text(&incident.raw_summary);
            let (cause, cause_counts) = clean_text(&incident.root_cause);
            counts.merge(cause_counts);
            incident.cleaned_summary = summary;
            incident.root_cause = cause;
            CleaningReport {
                incident_id: incident.id.clone(),
                removed_html_tag_count: counts.html_tags,
                removed_stacktrace_block_count: counts.stacktrace_blocks,
                removed_image_ref_count: counts.image_refs,
                summarization_status: None,
            }
        })
        .collect()
}

/// Stage two: summarize cleaned fields with bounded gateway concurrency.
///
/// A rejected summary leaves `cleaned_summary` empty (the incident stays
/// in the corpus for the complete/filtered evaluation split); a rejected
/// root cause clears the field. Transport failures skip the incident and
/// are recorded in the returned error list rather than aborting the run.
pub fn summarize_corpus(
    gateway: &Gateway,
    corpus: &mut Corpus,
    reports: &mut [CleaningReport],
    concurrency: usize,
) -> Vec<(String, GatewayError)> {
    let inputs: Vec<(usize, String, String)> = corpus
        .incidents
        .iter()
        .enumerate()
        .map(|(i, inc)| (i, inc.cleaned_summary.clone(), inc.root_cause.clone()))
        .collect();

    let results = parallel_map(inputs, concurrency, |(i, summary, cause)| {
        let summary_outcome = summarize_field(gateway, &summary, FieldKind::Summary);
        let cause_outcome = summarize_field(gateway, &cause, FieldKind::RootCause);
        (i, summary_outcome, cause_outcome)
    });

    let mut failures = Vec::new();
    for (i, summary_outcome, cause_outcome) in results {
        let incident = &mut corpus.incidents[i];
        match summary_outcome {
            Ok(SummarizeOutcome::Summarized(text)) => {
                incident.cleaned_summary = text;
                set_status(reports, &incident.id, SummarizationStatus::Summarized);
            }
            Ok(SummarizeOutcome::RejectedNoisy) => {
                incident.cleaned_summary.clear();
                set_status(reports, &incident.id, SummarizationStatus::RejectedNoisy);
            }
            Ok(SummarizeOutcome::SkippedEmpty) => {
                set_status(reports, &incident.id, SummarizationStatus::SkippedEmpty);
            }
            Err(err) => failures.push((incident.id.clone(), err)),
        }
        match cause_outcome {
            Ok(SummarizeOutcome::Summarized(text)) => incident.root_cause = text,
            Ok(SummarizeOutcome::RejectedNoisy) => incident.root_cause.clear(),
            Ok(SummarizeOutcome::SkippedEmpty) => {}
            Err(err) => failures.push((incident.id.clone(), err)),
        }
    }
    failures
}

fn set_status(reports: &mut [CleaningReport], id: &str, status: SummarizationStatus) {
    if let Some(report) = reports.iter_mut().find(|r| r.incident_id == id) {
        report.summarization_status = Some(status);
    }
}
