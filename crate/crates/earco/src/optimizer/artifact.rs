//! The optimized-prompt artifact and its on-disk form.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::inference::{ANS_END, ANS_START};

use super::{IclExample, OptimizationConfig, OptimizerError};

pub const ARTIFACT_VERSION: &str = "earco-prompt/1";

/// The four-part product of optimization (plus the answering format):
/// problem description, tuned instruction, static in-context examples,
/// and task intent with an expert persona.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPrompt {
    pub problem_description: String,
    pub instruction: String,
    pub examples: Vec<IclExample>,
    pub task_intent: String,
    pub expert_persona: String,
    /// Instructs wrapping the final root cause between the answer markers.
    pub answer_format: String,
}

/// Best-score trajectory of the instruction-tuning loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub iteration: u32,
    pub best_score: f64,
}

/// What gets persisted: the prompt, the config snapshot that produced
/// it, the score history, and the winning candidate's lineage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptArtifact {
    pub version: String,
    pub prompt: OptimizedPrompt,
    pub config: OptimizationConfig,
    pub history: Vec<HistoryEntry>,
    pub lineage: Vec<String>,
}

impl PromptArtifact {
    pub fn new(
        prompt: OptimizedPrompt,
        config: OptimizationConfig,
        history: Vec<HistoryEntry>,
        lineage: Vec<String>,
    ) -> Self {
        Self { version: ARTIFACT_VERSION.to_string(), prompt, config, history, lineage }
    }
}

/// Unvalidated prompt parts; [`build_optimized_prompt`] enforces the
/// invariants.
#[derive(Debug, Clone, Default)]
pub struct PromptParts {
    pub problem_description: String,
    pub instruction: String,
    pub examples: Vec<IclExample>,
    pub task_intent: String,
    pub expert_persona: String,
    pub answer_format: String,
}

/// Assemble the final prompt object: all five text parts non-empty,
/// exactly `few_shot_count` examples, and an answer format carrying each
/// answer marker exactly once.
pub fn build_optimized_prompt(
    parts: PromptParts,
    config: &OptimizationConfig,
) -> Result<OptimizedPrompt, OptimizerError> {
    let require = |value: &str, name: &'static str| {
        if value.trim().is_empty() {
            Err(OptimizerError::MissingPart(name))
        } else {
            Ok(())
        }
    };
    require(&parts.problem_description, "problem_description")?;
    require(&parts.instruction, "instruction")?;
    require(&parts.task_intent, "task_intent")?;
    require(&parts.expert_persona, "expert_persona")?;
    require(&parts.answer_format, "answer_format")?;

    if parts.examples.len() != config.few_shot_count {
        return Err(OptimizerError::WrongExampleCount {
            expected: config.few_shot_count,
            got: parts.examples.len(),
        });
    }
    for marker in [ANS_START, ANS_END] {
        if parts.answer_format.matches(marker).count() != 1 {
            return Err(OptimizerError::BadAnswerFormat(format!(
                "expected exactly one {marker}"
            )));
        }
    }

    Ok(OptimizedPrompt {
        problem_description: parts.problem_description,
        instruction: parts.instruction,
        examples: parts.examples,
        task_intent: parts.task_intent,
        expert_persona: parts.expert_persona,
        answer_format: parts.answer_format,
    })
}

pub fn save_artifact(artifact: &PromptArtifact, path: &Path) -> Result<(), OptimizerError> {
    let json = serde_json::to_string_pretty(artifact)?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_artifact(path: &Path) -> Result<PromptArtifact, OptimizerError> {
    let text = std::fs::read_to_string(path)?;
    let artifact: PromptArtifact = serde_json::from_str(&text)?;
    if artifact.version != ARTIFACT_VERSION {
        return Err(OptimizerError::ArtifactVersion(artifact.version));
    }
    Ok(artifact)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::test_support::examples;
    use crate::templates;

    fn parts(n: usize) -> PromptParts {
        PromptParts {
            problem_description: "describe".to_string(),
            instruction: "instruct".to_string(),
            examples: examples(n),
            task_intent: "intent".to_string(),
            expert_persona: "persona".to_string(),
            answer_format: templates::ANSWER_FORMAT.trim().to_string(),
        }
    }

    fn config(few_shot: usize) -> OptimizationConfig {
        OptimizationConfig { few_shot_count: few_shot, ..OptimizationConfig::default() }
    }

    #[test]
    fn valid_parts_round_trip_through_disk() {
        let prompt = build_optimized_prompt(parts(10), &config(10)).unwrap();
        let artifact = PromptArtifact::new(
            prompt,
            config(10),
            vec![HistoryEntry { iteration: 1, best_score: 0.8 }],
            vec!["seed".to_string()],
        );
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prompt.json");
        save_artifact(&artifact, &path).unwrap();
        assert_eq!(load_artifact(&path).unwrap(), artifact);
    }

    #[test]
    fn nine_examples_with_few_shot_ten_rejected() {
        assert!(matches!(
            build_optimized_prompt(parts(9), &config(10)),
            Err(OptimizerError::WrongExampleCount { expected: 10, got: 9 })
        ));
    }

    #[test]
    fn missing_part_named() {
        let mut bad = parts(10);
        bad.expert_persona.clear();
        assert!(matches!(
            build_optimized_prompt(bad, &config(10)),
            Err(OptimizerError::MissingPart("expert_persona"))
        ));
    }

    #[test]
    fn answer_format_must_carry_each_marker_once() {
        let mut bad = parts(10);
        bad.answer_format = "no markers".to_string();
        assert!(matches!(
            build_optimized_prompt(bad, &config(10)),
            Err(OptimizerError::BadAnswerFormat(_))
        ));
        let mut doubled = parts(10);
        doubled.answer_format = "<ANS_START><ANS_START>x<ANS_END>".to_string();
        assert!(build_optimized_prompt(doubled, &config(10)).is_err());
    }

    #[test]
    fn unknown_version_rejected() {
        let prompt = build_optimized_prompt(parts(2), &config(2)).unwrap();
        let mut artifact = PromptArtifact::new(prompt, config(2), vec![], vec![]);
        artifact.version = "earco-prompt/99".to_string();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prompt.json");
        save_artifact(&artifact, &path).unwrap();
        assert!(matches!(load_artifact(&path), Err(OptimizerError::ArtifactVersion(_))));
    }
}
