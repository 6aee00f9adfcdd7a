//! Root-cause generation and answer extraction.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assembly::{AssembledPrompt, AssemblyError, PromptMode};
use crate::gateway::{
    ChatRequest, Gateway, GatewayError, Role, DEFAULT_GENERATION_TEMPERATURE,
    DEFAULT_MAX_NEW_TOKENS,
};
use crate::runtime::parallel_map;

pub const ANS_START: &str = "<ANS_START>";
pub const ANS_END: &str = "<ANS_END>";

#[derive(Debug, Error)]
pub enum InferenceError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error("generator returned empty output for incident {0:?}")]
    EmptyOutput(String),
    #[error("malformed results line {line}: {source}")]
    ResultsParse {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sampling parameters used for a generation call; defaults are
/// temperature 0 and a 200-token cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub temperature: f32,
    pub max_new_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_GENERATION_TEMPERATURE,
            max_new_tokens: DEFAULT_MAX_NEW_TOKENS,
        }
    }
}

/// Whether the answer markers were found in the raw generation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerStatus {
    /// A complete `<ANS_START>...<ANS_END>` pair.
    Found,
    /// No markers; the whole trimmed output was taken.
    Missing,
    /// `<ANS_START>` without a closing marker; the suffix was taken.
    Malformed,
    /// Markers were not expected for this mode.
    NotExpected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractedAnswer {
    pub text: String,
    pub markers: MarkerStatus,
}

/// Pull the final root cause out of a raw generation: the text between
/// the first `<ANS_START>` and the next `<ANS_END>`, trimmed. Without
/// markers the whole text is returned (flagged `Missing`); a start
/// marker without an end returns the suffix (flagged `Malformed`).
pub fn extract_answer(raw: &str) -> ExtractedAnswer {
    match raw.find(ANS_START) {
        None => ExtractedAnswer { text: raw.trim().to_string(), markers: MarkerStatus::Missing },
        Some(start) => {
            let after = &raw[start + ANS_START.len()..];
            match after.find(ANS_END) {
                Some(end) => ExtractedAnswer {
                    text: after[..end].trim().to_string(),
                    markers: MarkerStatus::Found,
                },
                None => ExtractedAnswer {
                    text: after.trim().to_string(),
                    markers: MarkerStatus::Malformed,
                },
            }
        }
    }
}

/// One generated recommendation, as written to the results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcaRecommendation {
    pub incident_id: String,
    pub mode: PromptMode,
    pub raw_output: String,
    pub extracted_root_cause: String,
    pub marker_status: MarkerStatus,
    pub generation_params: GenerationParams,
}

/// Call the generator with an assembled prompt and extract the answer.
/// Marker extraction applies exactly when the prompt carries an answer
/// format; otherwise the raw output is taken trimmed.
pub fn generate_rca(
    gateway: &Gateway,
    incident_id: &str,
    assembled: &AssembledPrompt,
    params: GenerationParams,
) -> Result<RcaRecommendation, InferenceError> {
    let system = if assembled.system_part.is_empty() {
        None
    } else {
        Some(assembled.system_part.as_str())
    };
    let mut request = ChatRequest::new(Role::Generator, system, assembled.user_message());
    request.temperature = params.temperature;
    request.max_new_tokens = params.max_new_tokens;

    let raw_output = gateway.complete(&request)?.content;
    let (extracted_root_cause, marker_status) = if assembled.answer_format_part.is_empty() {
        (raw_output.trim().to_string(), MarkerStatus::NotExpected)
    } else {
        let extracted = extract_answer(&raw_output);
        (extracted.text, extracted.markers)
    };
    // Covers both an empty generation and markers wrapping nothing.
    if extracted_root_cause.is_empty() {
        return Err(InferenceError::EmptyOutput(incident_id.to_string()));
    }

    Ok(RcaRecommendation {
        incident_id: incident_id.to_string(),
        mode: assembled.mode,
        raw_output,
        extracted_root_cause,
        marker_status,
        generation_params: params,
    })
}

/// Run assemble → generate → extract over many incidents with bounded
/// gateway parallelism, preserving input order.
pub fn generate_batch<A>(
    gateway: &Gateway,
    incidents: Vec<(String, A)>,
    params: GenerationParams,
    concurrency: usize,
) -> Vec<Result<RcaRecommendation, InferenceError>>
where
    A: std::borrow::Borrow<AssembledPrompt> + Send,
{
    parallel_map(incidents, concurrency, |(id, assembled)| {
        generate_rca(gateway, &id, assembled.borrow(), params)
    })
}

pub fn save_results(
    results: &[RcaRecommendation],
    path: &std::path::Path,
) -> Result<(), InferenceError> {
    let mut out = String::new();
    for result in results {
        out.push_str(&serde_json::to_string(result).expect("recommendation serializes"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn load_results(path: &std::path::Path) -> Result<Vec<RcaRecommendation>, InferenceError> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, line)| !line.trim().is_empty())
        .map(|(idx, line)| {
            serde_json::from_str(line)
                .map_err(|source| InferenceError::ResultsParse { line: idx + 1, source })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::gateway::{MockScript, ScriptedBackend};
    use std::sync::Arc;

    fn gw(script: MockScript) -> Gateway {
        Gateway::single_backend(Arc::new(ScriptedBackend::new(script)))
    }

    #[test]
    fn extracts_between_markers() {
        let out = extract_answer("<ANS_START>x<ANS_END>");
        assert_eq!(out.text, "x");
        assert_eq!(out.markers, MarkerStatus::Found);
    }

    #[test]
    fn missing_markers_take_whole_text() {
        let out = extract_answer("no markers here");
        assert_eq!(out.text, "no markers here");
        assert_eq!(out.markers, MarkerStatus::Missing);
    }

    #[test]
    fn first_pair_wins() {
        let out = extract_answer("<ANS_START>a<ANS_END>junk<ANS_START>b<ANS_END>");
        assert_eq!(out.text, "a");
        assert_eq!(out.markers, MarkerStatus::Found);
    }

    #[test]
    fn start_without_end_is_malformed_suffix() {
        let out = extract_answer("preamble <ANS_START> tail text");
        assert_eq!(out.text, "tail text");
        assert_eq!(out.markers, MarkerStatus::Malformed);
    }

    fn pw_assembled() -> AssembledPrompt {
        let prompt = crate::optimizer::build_optimized_prompt(
            crate::optimizer::PromptParts {
                problem_description: "d".into(),
                instruction: "i".into(),
                examples: crate::optimizer::test_support::examples(1),
                task_intent: "t".into(),
                expert_persona: "p".into(),
                answer_format: crate::templates::ANSWER_FORMAT.trim().to_string(),
            },
            &crate::optimizer::OptimizationConfig {
                few_shot_count: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assemble(
            PromptMode::FtSlmPwNoEx,
            &crate::incident::tests::incident("live", 1),
            Some(&prompt),
            None,
            None,
        )
        .unwrap()
    }

    #[test]
    fn pw_mode_extracts_marked_answer() {
        let gateway = gw(MockScript::with_default("<ANS_START>Cert expired<ANS_END>"));
        let rec = generate_rca(&gateway, "live", &pw_assembled(), GenerationParams::default())
            .unwrap();
        assert_eq!(rec.extracted_root_cause, "Cert expired");
        assert_eq!(rec.marker_status, MarkerStatus::Found);
        assert_eq!(rec.generation_params.temperature, 0.0);
        assert_eq!(rec.generation_params.max_new_tokens, 200);
    }

    #[test]
    fn ftslm_mode_takes_raw_output() {
        let gateway = gw(MockScript::with_default("Disk full on node 7"));
        let assembled = assemble(
            PromptMode::FtSlm,
            &crate::incident::tests::incident("live", 1),
            None,
            None,
            None,
        )
        .unwrap();
        let rec =
            generate_rca(&gateway, "live", &assembled, GenerationParams::default()).unwrap();
        assert_eq!(rec.extracted_root_cause, "Disk full on node 7");
        assert_eq!(rec.marker_status, MarkerStatus::NotExpected);
    }

    #[test]
    fn empty_generation_is_an_error() {
        let gateway = gw(MockScript::with_default(""));
        let err = generate_rca(&gateway, "live", &pw_assembled(), GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, InferenceError::EmptyOutput(_)));

        // Markers wrapping nothing also violate the non-empty contract.
        let gateway = gw(MockScript::with_default("<ANS_START>  <ANS_END>"));
        let err = generate_rca(&gateway, "live", &pw_assembled(), GenerationParams::default())
            .unwrap_err();
        assert!(matches!(err, InferenceError::EmptyOutput(_)));
    }

    #[test]
    fn batch_generation_preserves_input_order() {
        let gateway = gw(MockScript::with_default("a cause"));
        let jobs: Vec<(String, AssembledPrompt)> = (0..12)
            .map(|i| {
                let incident = crate::incident::tests::incident(&format!("i{i:02}"), 1);
                let assembled =
                    assemble(PromptMode::FtSlm, &incident, None, None, None).unwrap();
                (incident.id, assembled)
            })
            .collect();
        let results = generate_batch(&gateway, jobs, GenerationParams::default(), 4);
        let ids: Vec<String> =
            results.into_iter().map(|r| r.unwrap().incident_id).collect();
        assert_eq!(ids, (0..12).map(|i| format!("i{i:02}")).collect::<Vec<_>>());
    }

    #[test]
    fn results_file_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("results.jsonl");
        let gateway = gw(MockScript::with_default("<ANS_START>x<ANS_END>"));
        let rec = generate_rca(&gateway, "a", &pw_assembled(), GenerationParams::default())
            .unwrap();
        save_results(std::slice::from_ref(&rec), &path).unwrap();
        assert_eq!(load_results(&path).unwrap(), vec![rec]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn round_trip_extraction(s in "[^<]{0,64}") {
                // Any text without markers survives wrap + extract.
                prop_assume!(!s.contains(ANS_START) && !s.contains(ANS_END));
                let wrapped = format!("{ANS_START}{s}{ANS_END}");
                let out = extract_answer(&wrapped);
                prop_assert_eq!(out.text, s.trim());
                prop_assert_eq!(out.markers, MarkerStatus::Found);
            }
        }
    }
}
