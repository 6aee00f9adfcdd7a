//! In-context example tuning: seed selection, refinement, reasoning,
//! validation, and intent/persona generation.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::gateway::{ChatRequest, Gateway, Role};
use crate::incident::{Corpus, Incident};
use crate::index::VectorIndex;
use crate::templates;

use super::fps::farthest_point_sample;
use super::{IclExample, OptimizationConfig, OptimizerError, Polarity};

/// Render an incident as an example problem; the same block format is
/// used for the incident section of inference prompts.
pub fn incident_problem(incident: &Incident) -> String {
    format!(
        "Title: {}\nSummary: {}\nOwning service: {}",
        incident.title,
        incident.effective_summary(),
        incident.owning_service
    )
}

/// Pick `n` diverse seed examples by farthest-point sampling over the
/// indexed embeddings, starting from a seeded-random incident. Only
/// incidents with a ground-truth root cause and a stored vector are
/// eligible; all seeds start positive (they are real incident/cause
/// pairs).
pub fn select_seed_examples(
    index: &VectorIndex,
    corpus_train: &Corpus,
    n: usize,
    seed: u64,
) -> Result<Vec<IclExample>, OptimizerError> {
    let eligible: Vec<&Incident> = corpus_train
        .incidents
        .iter()
        .filter(|i| !i.root_cause.trim().is_empty() && index.contains(&i.id))
        .collect();
    if eligible.len() < n {
        return Err(OptimizerError::InsufficientData { needed: n, available: eligible.len() });
    }

    let points: Vec<(&str, &crate::embedding::EmbeddingVector)> = eligible
        .iter()
        .map(|i| (i.id.as_str(), index.vector(&i.id).expect("eligible implies indexed")))
        .collect();
    let start = ChaCha8Rng::seed_from_u64(seed).random_range(0..points.len());
    let chosen = farthest_point_sample(&points, n, start);

    Ok(chosen
        .into_iter()
        .map(|i| IclExample {
            problem: incident_problem(eligible[i]),
            answer: eligible[i].root_cause.clone(),
            reasoning: String::new(),
            polarity: Polarity::Positive,
        })
        .collect())
}

fn render_examples(examples: &[IclExample]) -> String {
    examples
        .iter()
        .enumerate()
        .map(|(i, ex)| format!("EXAMPLE {}\nProblem: {}\nAnswer: {}", i + 1, ex.problem, ex.answer))
        .collect::<Vec<_>>()
        .join("\n\n")
}

/// Parsed synthesize-examples reply: optional refined instruction plus
/// any number of problem/answer blocks.
fn parse_refinement_reply(reply: &str) -> (Option<String>, Vec<(String, String)>) {
    #[derive(PartialEq)]
    enum Section {
        None,
        Instruction,
        Problem,
        Answer,
    }
    let mut instruction = String::new();
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut section = Section::None;

    let push_line = |buf: &mut String, line: &str| {
        if !buf.is_empty() {
            buf.push('\n');
        }
        buf.push_str(line);
    };

    for line in reply.lines() {
        let trimmed = line.trim();
        if trimmed.eq_ignore_ascii_case("instruction:") {
            section = Section::Instruction;
        } else if trimmed.to_uppercase().starts_with("EXAMPLE") {
            pairs.push((String::new(), String::new()));
            section = Section::None;
        } else if let Some(rest) = strip_prefix_ci(trimmed, "problem:") {
            if pairs.is_empty() {
                pairs.push((String::new(), String::new()));
            }
            let pair = pairs.last_mut().unwrap();
            push_line(&mut pair.0, rest.trim());
            section = Section::Problem;
        } else if let Some(rest) = strip_prefix_ci(trimmed, "answer:") {
            if pairs.is_empty() {
                pairs.push((String::new(), String::new()));
            }
            let pair = pairs.last_mut().unwrap();
            push_line(&mut pair.1, rest.trim());
            section = Section::Answer;
        } else {
            match section {
                Section::Instruction => push_line(&mut instruction, line),
                Section::Problem => push_line(&mut pairs.last_mut().unwrap().0, line),
                Section::Answer => push_line(&mut pairs.last_mut().unwrap().1, line),
                Section::None => {}
            }
        }
    }

    let instruction = instruction.trim().to_string();
    let pairs = pairs
        .into_iter()
        .map(|(p, a)| (p.trim().to_string(), a.trim().to_string()))
        .filter(|(p, a)| !p.is_empty() && !a.is_empty())
        .collect();
    (if instruction.is_empty() { None } else { Some(instruction) }, pairs)
}

fn strip_prefix_ci<'a>(line: &'a str, prefix: &str) -> Option<&'a str> {
    if line.len() >= prefix.len() && line[..prefix.len()].eq_ignore_ascii_case(prefix) {
        Some(&line[prefix.len()..])
    } else {
        None
    }
}

/// Example tuning: `refine_task_eg_iterations` rounds of critique →
/// synthesize over the (instruction, example set) pair. Examples the
/// model emits become synthetic; when it emits fewer than
/// `few_shot_count` usable ones, the set is topped up from the seed pool
/// in selection order. Output length is always `few_shot_count`.
pub fn optimize_examples(
    gateway: &Gateway,
    config: &OptimizationConfig,
    instruction: &str,
    seed_examples: &[IclExample],
) -> Result<(String, Vec<IclExample>), OptimizerError> {
    let mut instruction = instruction.to_string();
    let mut examples: Vec<IclExample> =
        seed_examples.iter().take(config.few_shot_count).cloned().collect();

    for _round in 0..config.refine_task_eg_iterations {
        let examples_block = render_examples(&examples);
        let critique_prompt = templates::render(
            templates::CRITIQUE_EXAMPLES,
            &[("instruction", instruction.as_str()), ("examples", examples_block.as_str())],
        );
        let critique_reply =
            gateway.complete(&ChatRequest::new(Role::Optimizer, None, critique_prompt))?;
        let critique = super::refine::parse_critique_sections(&critique_reply.content);

        let synth_prompt = templates::render(
            templates::SYNTHESIZE_EXAMPLES,
            &[
                ("instruction", instruction.as_str()),
                ("examples", examples_block.as_str()),
                ("strengths", critique.strengths.as_str()),
                ("weaknesses", critique.weaknesses.as_str()),
                ("suggested_edits", critique.suggested_edits.as_str()),
            ],
        );
        let synth_reply =
            gateway.complete(&ChatRequest::new(Role::Optimizer, None, synth_prompt))?;
        let (new_instruction, pairs) = parse_refinement_reply(&synth_reply.content);

        if let Some(new_instruction) = new_instruction {
            instruction = new_instruction;
        }
        if !pairs.is_empty() {
            examples = pairs
                .into_iter()
                .take(config.few_shot_count)
                .map(|(problem, answer)| IclExample {
                    problem,
                    answer,
                    reasoning: String::new(),
                    polarity: Polarity::Synthetic,
                })
                .collect();
        }
        top_up(&mut examples, seed_examples, config.few_shot_count);
    }

    top_up(&mut examples, seed_examples, config.few_shot_count);
    Ok((instruction, examples))
}

fn top_up(examples: &mut Vec<IclExample>, pool: &[IclExample], target: usize) {
    for seed in pool {
        if examples.len() >= target {
            break;
        }
        if !examples.iter().any(|e| e.problem == seed.problem) {
            examples.push(seed.clone());
        }
    }
    examples.truncate(target);
}

/// Reasoning stage: generate a chain of thought for every example that
/// does not have one yet. An empty reply leaves the reasoning empty,
/// which flags the example for removal during validation.
pub fn add_reasoning(
    gateway: &Gateway,
    examples: Vec<IclExample>,
) -> Result<Vec<IclExample>, OptimizerError> {
    let mut out = Vec::with_capacity(examples.len());
    for mut example in examples {
        if !example.reasoning.is_empty() {
            out.push(example);
            continue;
        }
        let prompt = templates::render(
            templates::REASONING,
            &[("problem", example.problem.as_str()), ("answer", example.answer.as_str())],
        );
        let reply = gateway.complete(&ChatRequest::new(Role::Optimizer, None, prompt))?;
        example.reasoning = reply.content.trim().to_string();
        if example.reasoning.is_empty() {
            tracing::warn!("empty reasoning reply; example flagged for validation removal");
        }
        out.push(example);
    }
    Ok(out)
}

/// Validation stage: a verification prompt judges each example
/// VALID/INVALID; invalid and flagged (reasoning-less) examples are
/// dropped. All examples failing is an error; optimization cannot
/// proceed without in-context examples.
pub fn validate_examples(
    gateway: &Gateway,
    examples: Vec<IclExample>,
) -> Result<Vec<IclExample>, OptimizerError> {
    let mut retained = Vec::new();
    for example in examples {
        if example.reasoning.is_empty() {
            continue;
        }
        let prompt = templates::render(
            templates::VALIDATE_EXAMPLE,
            &[
                ("problem", example.problem.as_str()),
                ("answer", example.answer.as_str()),
                ("reasoning", example.reasoning.as_str()),
            ],
        );
        let reply = gateway.complete(&ChatRequest::new(Role::Optimizer, None, prompt))?;
        let verdict = reply.content.to_uppercase();
        // "INVALID" contains "VALID"; check it first.
        let valid = !verdict.contains("INVALID") && verdict.contains("VALID");
        if valid {
            retained.push(example);
        }
    }
    if retained.is_empty() {
        return Err(OptimizerError::ValidationFailed);
    }
    Ok(retained)
}

/// Intent/persona stage. Falls back to the built-in defaults (an On-Call
/// Engineer persona) for any part the model fails to provide.
pub fn generate_intent_persona(
    gateway: &Gateway,
    task_description: &str,
) -> Result<(String, String), OptimizerError> {
    if task_description.trim().is_empty() {
        return Err(OptimizerError::MissingPart("task description"));
    }
    let prompt =
        templates::render(templates::INTENT_PERSONA, &[("task_description", task_description)]);
    let reply = gateway.complete(&ChatRequest::new(Role::Optimizer, None, prompt))?;

    let mut intent = String::new();
    let mut persona = String::new();
    for line in reply.content.lines() {
        let trimmed = line.trim();
        if let Some(rest) = strip_prefix_ci(trimmed, "intent:") {
            intent = rest.trim().to_string();
        } else if let Some(rest) = strip_prefix_ci(trimmed, "persona:") {
            persona = rest.trim().to_string();
        }
    }
    if intent.is_empty() {
        intent = templates::DEFAULT_INTENT.trim().to_string();
    }
    if persona.is_empty() {
        persona = templates::DEFAULT_PERSONA.trim().to_string();
    }
    Ok((intent, persona))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::{EmbeddingBackend, HashEmbeddingBackend};
    use crate::gateway::{MockRule, MockScript, ScriptedBackend};
    use crate::optimizer::test_support::{example, examples};
    use std::sync::Arc;

    fn gw(script: MockScript) -> Gateway {
        Gateway::single_backend(Arc::new(ScriptedBackend::new(script)))
    }

    fn small_config(few_shot: usize) -> OptimizationConfig {
        OptimizationConfig {
            few_shot_count: few_shot,
            seed_example_count: few_shot.max(4),
            refine_task_eg_iterations: 3,
            ..OptimizationConfig::default()
        }
    }

    fn seeded_corpus_and_index(n: usize) -> (Corpus, VectorIndex) {
        let backend = HashEmbeddingBackend::new(8);
        let mut index = VectorIndex::new(8);
        let mut incidents = Vec::new();
        for i in 0..n {
            let mut incident = crate::incident::tests::incident(&format!("i{i:02}"), 1 + i as u32);
            incident.cleaned_summary = format!("unique summary text number {i}");
            index
                .add(incident.id.clone(), backend.embed(&crate::embedding::query_text(&incident)).unwrap())
                .unwrap();
            incidents.push(incident);
        }
        (Corpus { incidents, split: None }, index)
    }

    #[test]
    fn seed_selection_is_deterministic_and_positive() {
        let (corpus, index) = seeded_corpus_and_index(10);
        let a = select_seed_examples(&index, &corpus, 5, 42).unwrap();
        let b = select_seed_examples(&index, &corpus, 5, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        assert!(a.iter().all(|e| e.polarity == Polarity::Positive));
        assert!(a.iter().all(|e| !e.problem.is_empty() && !e.answer.is_empty()));
    }

    #[test]
    fn single_seed_is_the_seeded_random_start() {
        let (corpus, index) = seeded_corpus_and_index(6);
        let one = select_seed_examples(&index, &corpus, 1, 7).unwrap();
        assert_eq!(one.len(), 1);
        // Same seed, same start.
        assert_eq!(one, select_seed_examples(&index, &corpus, 1, 7).unwrap());
    }

    #[test]
    fn insufficient_eligible_incidents_error() {
        let (mut corpus, index) = seeded_corpus_and_index(4);
        corpus.incidents[0].root_cause.clear();
        assert!(matches!(
            select_seed_examples(&index, &corpus, 4, 1),
            Err(OptimizerError::InsufficientData { needed: 4, available: 3 })
        ));
    }

    #[test]
    fn echoing_mock_keeps_instruction_and_seeds() {
        // The synthesize reply parses to no instruction and no examples,
        // so everything falls back: instruction unchanged, examples are
        // the first few_shot_count seeds.
        let script = MockScript::with_default("noted, no changes");
        let seeds = examples(6);
        let (instruction, out) =
            optimize_examples(&gw(script), &small_config(4), "keep me", &seeds).unwrap();
        assert_eq!(instruction, "keep me");
        assert_eq!(out, seeds[..4].to_vec());
    }

    #[test]
    fn model_rewrite_marks_synthetic_and_tops_up() {
        let script = MockScript::new(vec![MockRule::substring(
            "Refine the instruction and in-context examples",
            "INSTRUCTION:\nsharper\n\nEXAMPLE 1\nProblem: P1 incident\nAnswer: rewritten cause",
        )])
        .default_response("Weaknesses:\nredundant");
        let seeds = examples(6);
        let config = small_config(4);
        let (instruction, out) = optimize_examples(&gw(script), &config, "old", &seeds).unwrap();
        assert_eq!(instruction, "sharper");
        assert_eq!(out.len(), 4);
        assert_eq!(out[0].polarity, Polarity::Synthetic);
        assert_eq!(out[0].answer, "rewritten cause");
        // Top-up skips the seed with the duplicated problem text.
        assert_eq!(out[1], seeds[1]);
        assert!(out[1..].iter().all(|e| e.polarity == Polarity::Positive));
    }

    #[test]
    fn four_emitted_with_few_shot_ten_tops_up_to_ten() {
        let reply = (1..=4)
            .map(|i| format!("EXAMPLE {i}\nProblem: synth problem {i}\nAnswer: synth cause {i}"))
            .collect::<Vec<_>>()
            .join("\n\n");
        let script = MockScript::new(vec![MockRule::substring(
            "Refine the instruction and in-context examples",
            &reply,
        )])
        .default_response("Weaknesses:\nredundant");
        let seeds = examples(12);
        let config = OptimizationConfig {
            few_shot_count: 10,
            refine_task_eg_iterations: 1,
            ..OptimizationConfig::default()
        };
        let (_, out) = optimize_examples(&gw(script), &config, "old", &seeds).unwrap();
        assert_eq!(out.len(), 10);
        assert_eq!(out.iter().filter(|e| e.polarity == Polarity::Synthetic).count(), 4);
        assert_eq!(out.iter().filter(|e| e.polarity == Polarity::Positive).count(), 6);
    }

    #[test]
    fn reasoning_populates_and_skips_existing() {
        let gateway = gw(MockScript::with_default("because the symptoms match"));
        let mut seeds = examples(2);
        seeds[1].reasoning = "already here".to_string();
        let out = add_reasoning(&gateway, seeds).unwrap();
        assert_eq!(out[0].reasoning, "because the symptoms match");
        assert_eq!(out[1].reasoning, "already here");
        assert_eq!(gateway.calls(Role::Optimizer), 1);
    }

    #[test]
    fn empty_reasoning_reply_flags_example() {
        let gateway = gw(MockScript::with_default(""));
        let out = add_reasoning(&gateway, examples(1)).unwrap();
        assert!(out[0].reasoning.is_empty());
        // Flagged examples are dropped by validation; all dropped is an error.
        assert!(matches!(
            validate_examples(&gateway, out),
            Err(OptimizerError::ValidationFailed)
        ));
    }

    #[test]
    fn validation_drops_invalid_keeps_valid() {
        let script = MockScript::new(vec![
            MockRule::substring("P2 incident", "INVALID"),
            MockRule::substring("Reply with exactly VALID or INVALID", "VALID"),
        ]);
        let gateway = gw(script);
        let mut seeds = examples(10);
        for seed in &mut seeds {
            seed.reasoning = "reasonable".to_string();
        }
        let out = validate_examples(&gateway, seeds).unwrap();
        assert_eq!(out.len(), 9);
        assert!(out.iter().all(|e| !e.problem.contains("P2 ")));
    }

    #[test]
    fn all_invalid_is_an_error() {
        let gateway = gw(MockScript::with_default("INVALID"));
        let mut seeds = examples(3);
        for seed in &mut seeds {
            seed.reasoning = "r".to_string();
        }
        assert!(matches!(
            validate_examples(&gateway, seeds),
            Err(OptimizerError::ValidationFailed)
        ));
    }

    #[test]
    fn intent_persona_parses_or_falls_back() {
        let gateway = gw(MockScript::with_default(
            "Intent: find the cause\nPersona: seasoned OCE with deep cloud knowledge",
        ));
        let (intent, persona) = generate_intent_persona(&gateway, "task").unwrap();
        assert_eq!(intent, "find the cause");
        assert_eq!(persona, "seasoned OCE with deep cloud knowledge");

        let gateway = gw(MockScript::with_default(""));
        let (intent, persona) = generate_intent_persona(&gateway, "task").unwrap();
        assert_eq!(intent, templates::DEFAULT_INTENT.trim());
        assert!(persona.contains("On-Call Engineer"));
    }

    #[test]
    fn refinement_parser_handles_multiline_blocks() {
        let (instruction, pairs) = parse_refinement_reply(
            "INSTRUCTION:\nline one\nline two\n\nEXAMPLE 1\nProblem: first line\nsecond line\nAnswer: the cause",
        );
        assert_eq!(instruction.as_deref(), Some("line one\nline two"));
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].0, "first line\nsecond line");
        assert_eq!(pairs[0].1, "the cause");
    }

    #[test]
    fn incident_problem_uses_cleaned_summary() {
        let mut incident = crate::incident::tests::incident("x", 1);
        incident.title = "DB outage".to_string();
        incident.cleaned_summary = "primary down".to_string();
        incident.owning_service = "storage".to_string();
        assert_eq!(
            incident_problem(&incident),
            "Title: DB outage\nSummary: primary down\nOwning service: storage"
        );
        let _ = example("p", "a");
    }
}
