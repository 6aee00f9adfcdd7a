//! Per-strategy prompt assembly.
//!
//! Nine experimental strategies share one assembler. What varies is the
//! instruction source (manual vs. optimized), the example source
//! (retrieved semantically similar vs. the optimized prompt's static
//! set vs. none), and whether the answer-format section appears (exactly
//! when an optimized instruction is used):
//!
//! | mode              | instruction | examples        | answer format |
//! |-------------------|-------------|-----------------|---------------|
//! | manual-ss         | manual      | retrieved       | no            |
//! | manual-ss-base    | manual      | retrieved       | no            |
//! | pw-default        | optimized   | static          | yes           |
//! | pw-ss             | optimized   | retrieved       | yes           |
//! | ft-slm            | none        | none            | no            |
//! | ft-slm-pw         | optimized   | static          | yes           |
//! | ft-slm-pw-noex    | optimized   | none            | yes           |
//! | base-slm-pw       | optimized   | static          | yes           |
//! | base-slm-pw-noex  | optimized   | none            | yes           |
//!
//! Which chat endpoint serves the request (LLM, base SLM, fine-tuned
//! SLM) is backend configuration; the assembler only shapes text.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::{query_text, EmbeddingBackend, EmbeddingError};
use crate::incident::{Corpus, Incident};
use crate::index::{IndexError, VectorIndex};
use crate::optimizer::examples::incident_problem;
use crate::optimizer::OptimizedPrompt;

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("mode {mode} requires {part}")]
    MissingPart { mode: PromptMode, part: &'static str },
    #[error("cannot retrieve examples: {0}")]
    Retrieval(#[from] IndexError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("retrieved incident {0:?} not present in corpus")]
    MissingIncident(String),
    #[error("unknown prompt mode {0:?}")]
    UnknownMode(String),
}

/// The eight experimental strategies plus the Manual-SS-on-base-SLM
/// baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PromptMode {
    #[serde(rename = "manual-ss")]
    ManualSs,
    #[serde(rename = "pw-default")]
    PwDefault,
    #[serde(rename = "pw-ss")]
    PwSs,
    #[serde(rename = "ft-slm")]
    FtSlm,
    #[serde(rename = "ft-slm-pw")]
    FtSlmPw,
    #[serde(rename = "ft-slm-pw-noex")]
    FtSlmPwNoEx,
    #[serde(rename = "base-slm-pw")]
    BaseSlmPw,
    #[serde(rename = "base-slm-pw-noex")]
    BaseSlmPwNoEx,
    #[serde(rename = "manual-ss-base")]
    ManualSsBase,
}

impl PromptMode {
    pub const ALL: [PromptMode; 9] = [
        PromptMode::ManualSs,
        PromptMode::PwDefault,
        PromptMode::PwSs,
        PromptMode::FtSlm,
        PromptMode::FtSlmPw,
        PromptMode::FtSlmPwNoEx,
        PromptMode::BaseSlmPw,
        PromptMode::BaseSlmPwNoEx,
        PromptMode::ManualSsBase,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            PromptMode::ManualSs => "manual-ss",
            PromptMode::PwDefault => "pw-default",
            PromptMode::PwSs => "pw-ss",
            PromptMode::FtSlm => "ft-slm",
            PromptMode::FtSlmPw => "ft-slm-pw",
            PromptMode::FtSlmPwNoEx => "ft-slm-pw-noex",
            PromptMode::BaseSlmPw => "base-slm-pw",
            PromptMode::BaseSlmPwNoEx => "base-slm-pw-noex",
            PromptMode::ManualSsBase => "manual-ss-base",
        }
    }

    /// Modes whose example section comes from retrieval at inference time.
    pub fn uses_retrieval(&self) -> bool {
        matches!(self, PromptMode::ManualSs | PromptMode::ManualSsBase | PromptMode::PwSs)
    }

    /// Modes whose example section is the optimized prompt's static set.
    pub fn uses_static_examples(&self) -> bool {
        matches!(self, PromptMode::PwDefault | PromptMode::FtSlmPw | PromptMode::BaseSlmPw)
    }

    /// Modes carrying the optimized instruction (and thus the answer format).
    pub fn uses_optimized_instruction(&self) -> bool {
        !matches!(self, PromptMode::ManualSs | PromptMode::ManualSsBase | PromptMode::FtSlm)
    }
}

impl std::fmt::Display for PromptMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.token())
    }
}

impl std::str::FromStr for PromptMode {
    type Err = AssemblyError;

    /// Case-, separator-, and dot-insensitive: `pw-ss`, `PWSS`, and
    /// `FtSLM PW noEx.` all parse.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let squash = |t: &str| {
            t.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_lowercase()
        };
        let norm = squash(s);
        PromptMode::ALL
            .into_iter()
            .find(|m| squash(m.token()) == norm)
            .ok_or_else(|| AssemblyError::UnknownMode(s.to_string()))
    }
}

/// A historical incident retrieved as an in-context example.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievedExample {
    pub incident: Incident,
    pub root_cause: String,
    pub distance: f64,
}

/// Top-k semantically similar historical incidents for `incident`,
/// most similar first, excluding the incident itself when indexed.
pub fn retrieve_icl_examples(
    backend: &dyn EmbeddingBackend,
    index: &VectorIndex,
    corpus: &Corpus,
    incident: &Incident,
    k: usize,
) -> Result<Vec<RetrievedExample>, AssemblyError> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let query = backend.embed(&query_text(incident))?;
    // Over-fetch by one so self-exclusion still yields k results.
    let fetch = if index.contains(&incident.id) { k + 1 } else { k };
    let hits = index.search_top_k(&query, fetch)?;
    let mut out = Vec::with_capacity(k);
    for hit in hits {
        if hit.incident_id == incident.id {
            continue;
        }
        let historical = corpus
            .get(&hit.incident_id)
            .ok_or_else(|| AssemblyError::MissingIncident(hit.incident_id.clone()))?;
        out.push(RetrievedExample {
            incident: historical.clone(),
            root_cause: historical.root_cause.clone(),
            distance: hit.distance,
        });
        if out.len() == k {
            break;
        }
    }
    Ok(out)
}

/// A fully assembled inference prompt, prior to chat-message rendering.
#[derive(Debug, Clone, PartialEq)]
pub struct AssembledPrompt {
    /// Instruction plus intent and persona, mode-dependent; empty for
    /// the bare fine-tuned-SLM format.
    pub system_part: String,
    pub example_part: Vec<String>,
    pub incident_part: String,
    /// Present exactly when an optimized instruction is in play.
    pub answer_format_part: String,
    pub mode: PromptMode,
}

fn render_retrieved(examples: &[RetrievedExample]) -> Vec<String> {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            format!(
                "Example {}:\n{}\nRoot cause: {}",
                i + 1,
                incident_problem(&ex.incident),
                ex.root_cause
            )
        })
        .collect()
}

fn render_static(prompt: &OptimizedPrompt) -> Vec<String> {
    prompt
        .examples
        .iter()
        .enumerate()
        .map(|(i, ex)| {
            let mut block = format!("Example {}:\n{}", i + 1, ex.problem);
            if !ex.reasoning.is_empty() {
                block.push_str(&format!("\nReasoning: {}", ex.reasoning));
            }
            block.push_str(&format!("\nRoot cause: {}", ex.answer));
            block
        })
        .collect()
}

fn optimized_system(prompt: &OptimizedPrompt) -> String {
    format!(
        "{}\n\n{}\n\nTask intent: {}\nExpert persona: {}",
        prompt.problem_description, prompt.instruction, prompt.task_intent, prompt.expert_persona
    )
}

/// Assemble the inference prompt for a mode from the parts it requires.
pub fn assemble(
    mode: PromptMode,
    incident: &Incident,
    optimized: Option<&OptimizedPrompt>,
    manual_instruction: Option<&str>,
    retrieved: Option<&[RetrievedExample]>,
) -> Result<AssembledPrompt, AssemblyError> {
    let need_optimized = || {
        optimized.ok_or(AssemblyError::MissingPart { mode, part: "optimized prompt artifact" })
    };
    let need_manual = || {
        manual_instruction
            .filter(|s| !s.trim().is_empty())
            .ok_or(AssemblyError::MissingPart { mode, part: "manual instruction" })
    };
    let need_retrieved =
        || retrieved.ok_or(AssemblyError::MissingPart { mode, part: "retrieved examples" });

    let (system_part, example_part, answer_format_part) = match mode {
        PromptMode::ManualSs | PromptMode::ManualSsBase => {
            let instruction = need_manual()?;
            let examples = render_retrieved(need_retrieved()?);
            (instruction.trim().to_string(), examples, String::new())
        }
        PromptMode::PwSs => {
            let prompt = need_optimized()?;
            let examples = render_retrieved(need_retrieved()?);
            (optimized_system(prompt), examples, prompt.answer_format.clone())
        }
        PromptMode::PwDefault | PromptMode::FtSlmPw | PromptMode::BaseSlmPw => {
            let prompt = need_optimized()?;
            (optimized_system(prompt), render_static(prompt), prompt.answer_format.clone())
        }
        PromptMode::FtSlmPwNoEx | PromptMode::BaseSlmPwNoEx => {
            let prompt = need_optimized()?;
            (optimized_system(prompt), Vec::new(), prompt.answer_format.clone())
        }
        // Bare incident details in the fine-tuning format.
        PromptMode::FtSlm => (String::new(), Vec::new(), String::new()),
    };

    Ok(AssembledPrompt {
        system_part,
        example_part,
        incident_part: incident_problem(incident),
        answer_format_part,
        mode,
    })
}

impl AssembledPrompt {
    /// Flatten into the user-message body: examples, then the live
    /// incident, then the answer format when present.
    pub fn user_message(&self) -> String {
        let mut out = String::new();
        if !self.example_part.is_empty() {
            out.push_str("Historical examples:\n\n");
            out.push_str(&self.example_part.join("\n\n"));
            out.push_str("\n\n");
        }
        out.push_str("Current incident:\n");
        out.push_str(&self.incident_part);
        if !self.answer_format_part.is_empty() {
            out.push_str("\n\n");
            out.push_str(&self.answer_format_part);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::HashEmbeddingBackend;
    use crate::optimizer::test_support::examples;
    use crate::optimizer::{build_optimized_prompt, OptimizationConfig, PromptParts};
    use crate::templates;

    fn optimized(few_shot: usize) -> OptimizedPrompt {
        build_optimized_prompt(
            PromptParts {
                problem_description: "desc".to_string(),
                instruction: "OPTIMIZED-INSTRUCTION".to_string(),
                examples: examples(few_shot),
                task_intent: "intent".to_string(),
                expert_persona: "persona".to_string(),
                answer_format: templates::ANSWER_FORMAT.trim().to_string(),
            },
            &OptimizationConfig { few_shot_count: few_shot, ..OptimizationConfig::default() },
        )
        .unwrap()
    }

    fn retrieved(n: usize) -> Vec<RetrievedExample> {
        (0..n)
            .map(|i| RetrievedExample {
                incident: crate::incident::tests::incident(&format!("h{i}"), 1 + i as u32),
                root_cause: format!("cause h{i}"),
                distance: i as f64,
            })
            .collect()
    }

    fn fixture_incident() -> Incident {
        crate::incident::tests::incident("live", 20)
    }

    #[test]
    fn mode_tokens_round_trip() {
        for mode in PromptMode::ALL {
            assert_eq!(mode.token().parse::<PromptMode>().unwrap(), mode);
        }
        assert_eq!("PWSS".parse::<PromptMode>().unwrap(), PromptMode::PwSs);
        assert_eq!("FtSLM PW noEx.".parse::<PromptMode>().unwrap(), PromptMode::FtSlmPwNoEx);
        assert!("warp-speed".parse::<PromptMode>().is_err());
    }

    #[test]
    fn pwss_uses_retrieved_examples_and_optimized_instruction() {
        let prompt = optimized(4);
        let hits = retrieved(10);
        let assembled =
            assemble(PromptMode::PwSs, &fixture_incident(), Some(&prompt), None, Some(&hits))
                .unwrap();
        assert_eq!(assembled.example_part.len(), 10);
        assert!(assembled.system_part.contains("OPTIMIZED-INSTRUCTION"));
        assert!(!assembled.answer_format_part.is_empty());

        // Zero retrieved examples (the k=0 ablation row) assemble cleanly.
        let empty =
            assemble(PromptMode::PwSs, &fixture_incident(), Some(&prompt), None, Some(&[]))
                .unwrap();
        assert!(empty.example_part.is_empty());
    }

    #[test]
    fn ftslm_is_bare_incident_details() {
        let assembled =
            assemble(PromptMode::FtSlm, &fixture_incident(), None, None, None).unwrap();
        assert!(assembled.example_part.is_empty());
        assert!(assembled.system_part.is_empty());
        assert!(assembled.answer_format_part.is_empty());
        assert!(assembled.incident_part.contains("Title: incident live"));
    }

    #[test]
    fn ftslm_pw_noex_has_instruction_but_no_examples() {
        let prompt = optimized(4);
        let assembled =
            assemble(PromptMode::FtSlmPwNoEx, &fixture_incident(), Some(&prompt), None, None)
                .unwrap();
        assert!(assembled.example_part.is_empty());
        assert!(assembled.system_part.contains("OPTIMIZED-INSTRUCTION"));
        assert!(!assembled.answer_format_part.is_empty());
    }

    #[test]
    fn missing_parts_are_named() {
        let err =
            assemble(PromptMode::PwSs, &fixture_incident(), None, None, Some(&[])).unwrap_err();
        assert!(matches!(err, AssemblyError::MissingPart { part: "optimized prompt artifact", .. }));
        let err = assemble(PromptMode::ManualSs, &fixture_incident(), None, None, Some(&[]))
            .unwrap_err();
        assert!(matches!(err, AssemblyError::MissingPart { part: "manual instruction", .. }));
        let err = assemble(
            PromptMode::ManualSs,
            &fixture_incident(),
            None,
            Some("manual"),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, AssemblyError::MissingPart { part: "retrieved examples", .. }));
    }

    #[test]
    fn assembly_is_deterministic() {
        let prompt = optimized(3);
        let hits = retrieved(3);
        let a = assemble(PromptMode::PwSs, &fixture_incident(), Some(&prompt), None, Some(&hits))
            .unwrap();
        let b = assemble(PromptMode::PwSs, &fixture_incident(), Some(&prompt), None, Some(&hits))
            .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.user_message(), b.user_message());
    }

    #[test]
    fn retrieval_excludes_the_query_incident_and_caps_at_index_size() {
        let backend = HashEmbeddingBackend::new(8);
        let mut corpus = Corpus::default();
        let mut index = VectorIndex::new(8);
        for i in 0..3 {
            let mut incident = crate::incident::tests::incident(&format!("i{i}"), 1 + i as u32);
            incident.cleaned_summary = format!("summary {i}");
            index
                .add(incident.id.clone(), backend.embed(&query_text(&incident)).unwrap())
                .unwrap();
            corpus.incidents.push(incident);
        }
        let query = corpus.incidents[0].clone();
        let hits = retrieve_icl_examples(&backend, &index, &corpus, &query, 10).unwrap();
        assert_eq!(hits.len(), 2);
        assert!(hits.iter().all(|h| h.incident.id != query.id));
        // Most similar first.
        assert!(hits[0].distance <= hits[1].distance);

        // An un-indexed query gets min(k, index size) results, and the
        // example ids equal the raw search output in order.
        let mut live = crate::incident::tests::incident("live", 9);
        live.cleaned_summary = "fresh incident".to_string();
        let hits = retrieve_icl_examples(&backend, &index, &corpus, &live, 10).unwrap();
        assert_eq!(hits.len(), 3);
        let raw = index
            .search_top_k(&backend.embed(&query_text(&live)).unwrap(), 3)
            .unwrap();
        assert_eq!(
            hits.iter().map(|h| h.incident.id.as_str()).collect::<Vec<_>>(),
            raw.iter().map(|r| r.incident_id.as_str()).collect::<Vec<_>>()
        );

        let empty = VectorIndex::new(8);
        assert!(matches!(
            retrieve_icl_examples(&backend, &empty, &corpus, &query, 5),
            Err(AssemblyError::Retrieval(IndexError::EmptyIndex))
        ));
    }

    /// The mode/example matrix: example counts and instruction sources
    /// for all nine modes.
    #[test]
    fn mode_example_matrix_holds_for_all_nine_modes() {
        let prompt = optimized(4);
        let hits = retrieved(7);
        let incident = fixture_incident();
        for mode in PromptMode::ALL {
            let assembled =
                assemble(mode, &incident, Some(&prompt), Some("MANUAL-INSTRUCTION"), Some(&hits))
                    .unwrap();
            let expected_examples = if mode.uses_retrieval() {
                hits.len()
            } else if mode.uses_static_examples() {
                prompt.examples.len()
            } else {
                0
            };
            assert_eq!(assembled.example_part.len(), expected_examples, "mode {mode}");
            assert_eq!(
                assembled.system_part.contains("OPTIMIZED-INSTRUCTION"),
                mode.uses_optimized_instruction(),
                "mode {mode}"
            );
            assert_eq!(
                !assembled.answer_format_part.is_empty(),
                mode.uses_optimized_instruction(),
                "mode {mode}"
            );
            assert!(!assembled.incident_part.is_empty());
        }
    }
}
