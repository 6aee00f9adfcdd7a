//! LLM-as-judge evaluation and per-strategy reporting.
//!
//! Each generated root cause is scored 1–5 against the ground truth by a
//! judge model that also sees the incident summary as context. Records
//! aggregate per strategy into `mean ± std` over two splits: the
//! complete set, and the filtered subset of incidents whose cleaned
//! summary is non-empty.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::PromptMode;
use crate::gateway::{ChatMessage, ChatRequest, Gateway, GatewayError, Role};
use crate::incident::Corpus;
use crate::inference::RcaRecommendation;
use crate::runtime::parallel_map;
use crate::templates;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("judge reply unparseable after one re-ask: {reply:?}")]
    JudgeParse { reply: String },
    #[error("reference root cause is empty")]
    EmptyReference,
    #[error("no evaluation records to aggregate")]
    EmptyRecords,
    #[error("mode {0:?} not present in report")]
    UnknownMode(String),
    #[error("baseline mode {0:?} has an empty or zero-mean split")]
    ZeroBaseline(String),
    #[error("incident {0:?} from results file not found in corpus")]
    MissingIncident(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// A 1–5 judge rating with its justification.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeScore {
    pub score: u8,
    pub justification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationRecord {
    pub incident_id: String,
    pub mode: PromptMode,
    pub judge: JudgeScore,
    /// True iff the incident's cleaned summary is non-empty.
    pub in_filtered_set: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitStats {
    pub mean: f64,
    pub sample_std: f64,
    pub n: usize,
}

impl SplitStats {
    fn empty() -> Self {
        Self { mean: 0.0, sample_std: 0.0, n: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeStats {
    pub complete: SplitStats,
    pub filtered: SplitStats,
}

/// Per-strategy judge statistics, keyed by mode token in sorted order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub modes: BTreeMap<String, ModeStats>,
}

static SCORE_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)score\s*[:\-]?\s*(-?\d{1,9})").unwrap());
static JUSTIFICATION_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)justification\s*[:\-]?\s*").unwrap());

fn parse_judge_reply(reply: &str) -> Option<(i64, String)> {
    let score: i64 = SCORE_RE.captures(reply)?.get(1)?.as_str().parse().ok()?;
    let justification = JUSTIFICATION_RE
        .find(reply)
        .map(|m| reply[m.end()..].trim().to_string())
        .unwrap_or_default();
    Some((score, justification))
}

/// Score `generated` against `reference` with the judge model, passing
/// the incident summary as context. Integer replies outside 1–5 are
/// clamped; an unparseable reply is re-asked once.
pub fn judge(
    gateway: &Gateway,
    generated: &str,
    reference: &str,
    incident_summary: &str,
) -> Result<JudgeScore, EvalError> {
    if reference.trim().is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let prompt = templates::render(
        templates::JUDGE,
        &[("generated", generated), ("reference", reference), ("summary", incident_summary)],
    );
    let request = ChatRequest::new(Role::Judge, None, prompt.clone());
    let first = gateway.complete(&request)?;

    let parsed = parse_judge_reply(&first.content).map(Some).unwrap_or(None);
    let (raw_score, justification) = match parsed {
        Some(hit) => hit,
        None => {
            let mut retry = request;
            retry.messages.push(ChatMessage::assistant(first.content.clone()));
            retry.messages.push(ChatMessage::user(
                "Your previous reply did not follow the required format. Reply again with \
                 exactly:\nScore: <1-5>\nJustification: <one sentence>",
            ));
            let second = gateway.complete(&retry)?;
            parse_judge_reply(&second.content)
                .ok_or(EvalError::JudgeParse { reply: second.content })?
        }
    };

    let score = if (1..=5).contains(&raw_score) {
        raw_score as u8
    } else {
        tracing::warn!("judge returned out-of-range score {raw_score}; clamping to [1,5]");
        raw_score.clamp(1, 5) as u8
    };
    let justification = if justification.is_empty() {
        "(no justification provided)".to_string()
    } else {
        justification
    };
    Ok(JudgeScore { score, justification })
}

/// Judge every recommendation in a results set against the corpus ground
/// truth. Records keep results-file order; incidents without a ground
/// truth root cause are skipped with a warning.
pub fn evaluate_results(
    gateway: &Gateway,
    results: &[RcaRecommendation],
    corpus: &Corpus,
    concurrency: usize,
) -> Result<Vec<EvaluationRecord>, EvalError> {
    let mut jobs = Vec::new();
    for rec in results {
        let incident = corpus
            .get(&rec.incident_id)
            .ok_or_else(|| EvalError::MissingIncident(rec.incident_id.clone()))?;
        if incident.root_cause.trim().is_empty() {
            tracing::warn!(
                "incident {} has no ground-truth root cause; skipping evaluation",
                incident.id
            );
            continue;
        }
        jobs.push((
            rec.incident_id.clone(),
            rec.mode,
            rec.extracted_root_cause.clone(),
            incident.root_cause.clone(),
            incident.cleaned_summary.clone(),
        ));
    }

    let judged = parallel_map(jobs, concurrency, |(id, mode, generated, reference, summary)| {
        judge(gateway, &generated, &reference, &summary).map(|score| EvaluationRecord {
            incident_id: id,
            mode,
            judge: score,
            in_filtered_set: !summary.is_empty(),
        })
    });
    judged.into_iter().collect()
}

/// Streaming mean and sample standard deviation (Welford).
#[derive(Debug, Default, Clone, Copy)]
struct RunningStats {
    n: usize,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn finish(&self) -> SplitStats {
        if self.n == 0 {
            return SplitStats::empty();
        }
        let sample_std = if self.n > 1 { (self.m2 / (self.n - 1) as f64).sqrt() } else { 0.0 };
        SplitStats { mean: self.mean, sample_std, n: self.n }
    }
}

/// Aggregate records into per-mode statistics over the complete set and
/// the filtered subset.
pub fn aggregate(records: &[EvaluationRecord]) -> Result<EvaluationReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut acc: BTreeMap<String, (RunningStats, RunningStats)> = BTreeMap::new();
    for record in records {
        let entry = acc.entry(record.mode.token().to_string()).or_default();
        let score = record.judge.score as f64;
        entry.0.push(score);
        if record.in_filtered_set {
            entry.1.push(score);
        }
    }
    let modes = acc
        .into_iter()
        .map(|(mode, (complete, filtered))| {
            (mode, ModeStats { complete: complete.finish(), filtered: filtered.finish() })
        })
        .collect();
    Ok(EvaluationReport { modes })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeComparison {
    pub complete_pct: f64,
    pub filtered_pct: f64,
}

/// Relative improvement of `candidate` over `baseline`, in percent, per
/// split: `(candidate_mean - baseline_mean) / baseline_mean * 100`.
pub fn compare_modes(
    report: &EvaluationReport,
    baseline: &str,
    candidate: &str,
) -> Result<ModeComparison, EvalError> {
    let base = report.modes.get(baseline).ok_or_else(|| EvalError::UnknownMode(baseline.into()))?;
    let cand =
        report.modes.get(candidate).ok_or_else(|| EvalError::UnknownMode(candidate.into()))?;
    let pct = |b: SplitStats, c: SplitStats| -> Result<f64, EvalError> {
        if b.n == 0 || b.mean == 0.0 {
            return Err(EvalError::ZeroBaseline(baseline.to_string()));
        }
        Ok((c.mean - b.mean) / b.mean * 100.0)
    };
    Ok(ModeComparison {
        complete_pct: pct(base.complete, cand.complete)?,
        filtered_pct: pct(base.filtered, cand.filtered)?,
    })
}

/// `2.33 ± 0.98`, the table cell format.
pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.2} ± {std:.2}")
}

/// `+21.3%` / `-25.0%`.
pub fn format_pct(pct: f64) -> String {
    format!("{pct:+.1}%")
}

/// Aligned-text table with one row per mode and a cell per split.
pub fn render_table(report: &EvaluationReport) -> String {
    let mut rows: Vec<[String; 3]> =
        vec![["Mode".to_string(), "Complete".to_string(), "Filtered".to_string()]];
    for (mode, stats) in &report.modes {
        let cell = |s: &SplitStats| {
            if s.n == 0 {
                "-".to_string()
            } else {
                format!("{} (n={})", format_mean_std(s.mean, s.sample_std), s.n)
            }
        };
        rows.push([mode.clone(), cell(&stats.complete), cell(&stats.filtered)]);
    }
    let widths: Vec<usize> =
        (0..3).map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0)).collect();
    rows.iter()
        .map(|r| {
            format!(
                "{:<w0$}  {:<w1$}  {:<w2$}",
                r[0],
                r[1],
                r[2],
                w0 = widths[0],
                w1 = widths[1],
                w2 = widths[2]
            )
            .trim_end()
            .to_string()
        })
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn save_report(report: &EvaluationReport, path: &std::path::Path) -> Result<(), EvalError> {
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_report(path: &std::path::Path) -> Result<EvaluationReport, EvalError> {
    let text = std::fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| EvalError::Io(std::io::Error::other(e)))
}
