//! Incident records, corpora, and temporal splitting.
//!
//! A corpus file is UTF-8, line-delimited JSON: one incident per line with
//! fields `{id, title, summary, owning_service, root_cause, created_at,
//! severity}`. `summary` holds the raw free text as written at incident
//! time; `cleaned_summary` is added by the ingestion pipeline and carried
//! on re-serialization so downstream stages never re-clean.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("malformed record on line {line}: {source}")]
    Parse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("duplicate incident id {id:?} on line {line}")]
    DuplicateId { id: String, line: usize },
    #[error("empty incident id on line {line}")]
    EmptyId { line: usize },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("invalid split fractions train={train_frac} val={val_frac}: each must be > 0 and their sum < 1")]
    InvalidFractions { train_frac: f64, val_frac: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// One historical or live incident record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Incident {
    pub id: String,
    pub title: String,
    /// Free text written at incident-creation time; may be empty.
    #[serde(rename = "summary", default)]
    pub raw_summary: String,
    /// Output of the cleaning (and optional summarization) stage.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub cleaned_summary: String,
    pub owning_service: String,
    /// Ground-truth root cause; empty for live incidents.
    #[serde(default)]
    pub root_cause: String,
    /// Missing timestamps fall back to ingestion order when splitting.
    #[serde(default)]
    pub created_at: Option<DateTime<Utc>>,
    #[serde(default)]
    pub severity: u8,
}

impl Incident {
    /// Summary text preferred for prompts and retrieval: the cleaned
    /// summary once ingestion ran, raw otherwise.
    pub fn effective_summary(&self) -> &str {
        if self.cleaned_summary.is_empty() {
            &self.raw_summary
        } else {
            &self.cleaned_summary
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

/// An ordered collection of incidents, optionally tagged with the split
/// it came from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub incidents: Vec<Incident>,
    pub split: Option<Split>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.incidents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.incidents.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Incident> {
        self.incidents.iter().find(|i| i.id == id)
    }
}

/// Per-incident observability record emitted by the cleaning stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CleaningReport {
    pub incident_id: String,
    pub removed_html_tag_count: usize,
    pub removed_stacktrace_block_count: usize,
    pub removed_image_ref_count: usize,
    /// `None` until the summarization stage runs for this incident.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summarization_status: Option<SummarizationStatus>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SummarizationStatus {
    Summarized,
    RejectedNoisy,
    SkippedEmpty,
}

/// Parse a line-delimited corpus. Blank lines are skipped; duplicate ids
/// and malformed lines are rejected with their line number.
pub fn parse_corpus<R: BufRead>(reader: R) -> Result<Corpus, CorpusError> {
    let mut incidents = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let incident: Incident = serde_json::from_str(&line)
            .map_err(|source| CorpusError::Parse { line: line_no, source })?;
        if incident.id.is_empty() {
            return Err(CorpusError::EmptyId { line: line_no });
        }
        if !seen.insert(incident.id.clone()) {
            return Err(CorpusError::DuplicateId { id: incident.id, line: line_no });
        }
        incidents.push(incident);
    }
    Ok(Corpus { incidents, split: None })
}

/// Serialize a corpus back to line-delimited JSON. `parse_corpus` of the
/// output reproduces an equal corpus.
pub fn serialize_corpus<W: Write>(corpus: &Corpus, mut writer: W) -> Result<(), CorpusError> {
    for incident in &corpus.incidents {
        let line = serde_json::to_string(incident).expect("incident serializes");
        writer.write_all(line.as_bytes())?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn load_corpus(path: &std::path::Path) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path)?;
    parse_corpus(std::io::BufReader::new(file))
}

pub fn save_corpus(corpus: &Corpus, path: &std::path::Path) -> Result<(), CorpusError> {
    let file = std::fs::File::create(path)?;
    serialize_corpus(corpus, std::io::BufWriter::new(file))
}

/// Number of incidents each split receives, rounded to nearest.
pub fn split_counts(total: usize, train_frac: f64, val_frac: f64) -> (usize, usize, usize) {
    let n_train = ((total as f64) * train_frac).round() as usize;
    let n_train = n_train.min(total);
    let n_val = (((total as f64) * val_frac).round() as usize).min(total - n_train);
    (n_train, n_val, total - n_train - n_val)
}

/// Split a corpus into temporally disjoint train/validation/test corpora:
/// oldest incidents train, newest test. Incidents without a timestamp
/// sort first, in ingestion order.
pub fn temporal_split(
    corpus: &Corpus,
    train_frac: f64,
    val_frac: f64,
) -> Result<(Corpus, Corpus, Corpus), CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    if !(train_frac > 0.0 && val_frac > 0.0 && train_frac + val_frac < 1.0) {
        return Err(CorpusError::InvalidFractions { train_frac, val_frac });
    }

    let mut sorted = corpus.incidents.clone();
    sorted.sort_by_key(|i| i.created_at); // stable: None first, ties keep ingestion order

    let (n_train, n_val, _) = split_counts(sorted.len(), train_frac, val_frac);
    let rest = sorted.split_off(n_train);
    let mut validation = rest;
    let test = validation.split_off(n_val);

    Ok((
        Corpus { incidents: sorted, split: Some(Split::Train) },
        Corpus { incidents: validation, split: Some(Split::Validation) },
        Corpus { incidents: test, split: Some(Split::Test) },
    ))
}
