//! Critique and Synthesize stages for instruction tuning.

use crate::gateway::{ChatRequest, Gateway, Role};
use crate::templates;

use super::{Critique, IclExample, OptimizerError, PromptCandidate};

/// Split a critique reply into its three sections. A reply without
/// recognizable sections is stored wholesale under weaknesses, so the
/// critique always stays actionable.
pub(crate) fn parse_critique_sections(reply: &str) -> Critique {
    let mut strengths = String::new();
    let mut weaknesses = String::new();
    let mut suggested = String::new();
    let mut current: Option<&mut String> = None;
    for line in reply.lines() {
        let lower = line.trim().to_lowercase();
        if lower.starts_with("strengths") {
            current = Some(&mut strengths);
            continue;
        } else if lower.starts_with("weaknesses") {
            current = Some(&mut weaknesses);
            continue;
        } else if lower.starts_with("suggested edits") || lower.starts_with("suggestions") {
            current = Some(&mut suggested);
            continue;
        }
        if let Some(section) = current.as_deref_mut() {
            if !section.is_empty() {
                section.push('\n');
            }
            section.push_str(line);
        }
    }
    let trim = |s: String| s.trim().to_string();
    let (strengths, mut weaknesses, suggested) = (trim(strengths), trim(weaknesses), trim(suggested));
    if weaknesses.is_empty() {
        weaknesses = if reply.trim().is_empty() {
            "(empty critique reply)".to_string()
        } else {
            reply.trim().to_string()
        };
    }
    Critique { strengths, weaknesses, suggested_edits: suggested }
}

fn render_failing(failing: &[IclExample]) -> String {
    if failing.is_empty() {
        return "(none)".to_string();
    }
    failing
        .iter()
        .take(5)
        .map(|ex| format!("Problem: {}\nExpected root cause: {}", ex.problem, ex.answer))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Ask for targeted feedback on the best candidate. Requested even with
/// zero failing examples; refinement continues regardless.
pub fn critique_instruction(
    gateway: &Gateway,
    best: &PromptCandidate,
    failing_examples: &[IclExample],
) -> Result<Critique, OptimizerError> {
    let prompt = templates::render(
        templates::CRITIQUE_INSTRUCTION,
        &[
            ("instruction", best.instruction.as_str()),
            ("failing_examples", &render_failing(failing_examples)),
        ],
    );
    let response = gateway.complete(&ChatRequest::new(Role::Optimizer, None, prompt))?;
    Ok(parse_critique_sections(&response.content))
}

/// Rewrite a candidate using the critique. The new candidate extends the
/// lineage with `synthesize`; an empty reply is an error so the caller
/// can keep the prior candidate.
pub fn synthesize_instruction(
    gateway: &Gateway,
    candidate: &PromptCandidate,
    critique: &Critique,
) -> Result<PromptCandidate, OptimizerError> {
    let prompt = templates::render(
        templates::SYNTHESIZE_INSTRUCTION,
        &[
            ("instruction", candidate.instruction.as_str()),
            ("strengths", critique.strengths.as_str()),
            ("weaknesses", critique.weaknesses.as_str()),
            ("suggested_edits", critique.suggested_edits.as_str()),
        ],
    );
    let response = gateway.complete(&ChatRequest::new(Role::Optimizer, None, prompt))?;
    let instruction = response.content.trim().to_string();
    if instruction.is_empty() {
        return Err(OptimizerError::EmptySynthesis);
    }
    let mut lineage = candidate.lineage.clone();
    lineage.push("synthesize".to_string());
    Ok(PromptCandidate { instruction, lineage, train_score: None })
}
