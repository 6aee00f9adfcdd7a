//! Score stage: candidate instructions evaluated on training batches.
//!
//! Training examples are chunked into batches of `questions_batch_size`.
//! For each example the candidate instruction plus the example problem
//! goes to the generator, and the output is judged against the ground
//! truth on the 1–5 scale; an example is correct iff the judge score
//! reaches `score_threshold`. A batch passes only if every example in it
//! is correct. Scoring stops early, returning 0, as soon as reaching
//! `min_correct_count` passing batches becomes arithmetically
//! impossible; otherwise the score is the fraction of correct examples
//! over everything evaluated.

use crate::evaluation::judge;
use crate::gateway::{ChatRequest, Gateway, Role};

use super::{IclExample, OptimizationConfig, OptimizerError, PromptCandidate};

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreOutcome {
    /// Fraction of correct examples in [0, 1]; 0 when the batch floor
    /// was missed.
    pub score: f64,
    pub evaluated: usize,
    pub correct: usize,
    /// Examples the candidate answered below threshold, for the critique.
    pub failing: Vec<IclExample>,
}

pub fn score_candidate(
    gateway: &Gateway,
    candidate: &PromptCandidate,
    train_examples: &[IclExample],
    config: &OptimizationConfig,
) -> Result<ScoreOutcome, OptimizerError> {
    if train_examples.len() < config.questions_batch_size {
        return Err(OptimizerError::InvalidConfig(format!(
            "need at least questions_batch_size ({}) training examples, have {}",
            config.questions_batch_size,
            train_examples.len()
        )));
    }
    let batches: Vec<&[IclExample]> = train_examples.chunks(config.questions_batch_size).collect();
    if config.min_correct_count > batches.len() {
        return Err(OptimizerError::InvalidConfig(format!(
            "min_correct_count ({}) exceeds the number of batches ({})",
            config.min_correct_count,
            batches.len()
        )));
    }

    let mut evaluated = 0usize;
    let mut correct = 0usize;
    let mut passed_batches = 0usize;
    let mut failing = Vec::new();

    for (batch_no, batch) in batches.iter().enumerate() {
        let mut batch_all_correct = true;
        for example in *batch {
            let request = ChatRequest::new(
                Role::Generator,
                Some(&candidate.instruction),
                format!("{}\n\nState the most probable root cause.", example.problem),
            );
            let generated = gateway.complete(&request)?.content;
            let verdict = judge(gateway, generated.trim(), &example.answer, &example.problem)?;
            evaluated += 1;
            if f64::from(verdict.score) >= config.score_threshold {
                correct += 1;
            } else {
                batch_all_correct = false;
                failing.push(example.clone());
            }
        }
        if batch_all_correct {
            passed_batches += 1;
        }
        let remaining = batches.len() - batch_no - 1;
        if passed_batches + remaining < config.min_correct_count {
            return Ok(ScoreOutcome { score: 0.0, evaluated, correct, failing });
        }
    }

    if passed_batches < config.min_correct_count {
        return Ok(ScoreOutcome { score: 0.0, evaluated, correct, failing });
    }
    Ok(ScoreOutcome { score: correct as f64 / evaluated as f64, evaluated, correct, failing })
}
