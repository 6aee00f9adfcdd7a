//! Discrete prompt optimization for the root-cause-analysis task.
//!
//! The loop follows the feedback-driven recipe: **Mutate** the incumbent
//! instruction through thinking styles, **Score** every variant on
//! training incidents, **Critique** the best one, and **Synthesize** a
//! refined instruction from the critique, iterating until a performance
//! threshold or the iteration cap. A second phase tunes the in-context
//! example set the same way, then examples gain chain-of-thought
//! reasoning, get validated, and the prompt is capped with a task intent
//! and an expert persona.
//!
//! Intermediate prompts are persisted after each phase so the stage
//! ablation can evaluate them later.

pub mod artifact;
pub mod examples;
pub mod fps;
pub mod mutate;
pub mod refine;
pub mod score;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::EmbeddingError;
use crate::evaluation::EvalError;
use crate::gateway::{Gateway, GatewayError};
use crate::incident::Corpus;
use crate::index::{IndexError, VectorIndex};
use crate::templates;

pub use artifact::{
    build_optimized_prompt, load_artifact, save_artifact, HistoryEntry, OptimizedPrompt,
    PromptArtifact, PromptParts, ARTIFACT_VERSION,
};
pub use examples::{
    add_reasoning, generate_intent_persona, optimize_examples, select_seed_examples,
    validate_examples,
};
pub use mutate::{default_thinking_styles, mutate};
pub use refine::{critique_instruction, synthesize_instruction};
pub use score::{score_candidate, ScoreOutcome};

#[derive(Debug, Error)]
pub enum OptimizerError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("mutation reply had no parseable numbered instructions: {reply:?}")]
    MutationParse { reply: String },
    #[error("synthesize returned an empty instruction")]
    EmptySynthesis,
    #[error("every optimization iteration was skipped; no candidate could be scored")]
    AllIterationsSkipped,
    #[error("insufficient eligible incidents: needed {needed}, have {available}")]
    InsufficientData { needed: usize, available: usize },
    #[error("all in-context examples failed validation")]
    ValidationFailed,
    #[error("invalid optimization config: {0}")]
    InvalidConfig(String),
    #[error("missing prompt part: {0}")]
    MissingPart(&'static str),
    #[error("wrong example count: expected {expected}, got {got}")]
    WrongExampleCount { expected: usize, got: usize },
    #[error("answer format must contain each answer marker exactly once: {0}")]
    BadAnswerFormat(String),
    #[error("unsupported prompt artifact version {0:?}")]
    ArtifactVersion(String),
    #[error("artifact io error: {0}")]
    ArtifactIo(#[from] std::io::Error),
    #[error("artifact format error: {0}")]
    ArtifactFormat(#[from] serde_json::Error),
}

/// Hyperparameters governing the optimization run. Defaults match the
/// documented configuration: 3/3/3 iterations, question batches of 5,
/// 3 batches required correct, 10 final examples, 25 seed examples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizationConfig {
    pub mutate_refine_iterations: u32,
    pub mutation_rounds: u32,
    pub refine_task_eg_iterations: u32,
    pub questions_batch_size: usize,
    pub min_correct_count: usize,
    pub few_shot_count: usize,
    /// Judge score (1–5 scale) at or above which an answer is correct.
    pub score_threshold: f64,
    /// Train-score fraction at or above which iteration stops early.
    pub performance_threshold: f64,
    pub seed_example_count: usize,
    /// Prompt variations requested per mutation call.
    pub styles_per_call: usize,
}

impl Default for OptimizationConfig {
    fn default() -> Self {
        Self {
            mutate_refine_iterations: 3,
            mutation_rounds: 3,
            refine_task_eg_iterations: 3,
            questions_batch_size: 5,
            min_correct_count: 3,
            few_shot_count: 10,
            score_threshold: 3.0,
            performance_threshold: 1.0,
            seed_example_count: 25,
            styles_per_call: 3,
        }
    }
}

impl OptimizationConfig {
    pub fn validate(&self) -> Result<(), OptimizerError> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(OptimizerError::InvalidConfig(msg.to_string()))
            }
        };
        check(self.mutate_refine_iterations >= 1, "mutate_refine_iterations must be >= 1")?;
        check(self.mutation_rounds >= 1, "mutation_rounds must be >= 1")?;
        check(self.refine_task_eg_iterations >= 1, "refine_task_eg_iterations must be >= 1")?;
        check(self.questions_batch_size >= 1, "questions_batch_size must be >= 1")?;
        check(self.min_correct_count >= 1, "min_correct_count must be >= 1")?;
        check(self.few_shot_count >= 1, "few_shot_count must be >= 1")?;
        check(self.seed_example_count >= 1, "seed_example_count must be >= 1")?;
        check(self.styles_per_call >= 1, "styles_per_call must be >= 1")?;
        check(
            (1.0..=5.0).contains(&self.score_threshold),
            "score_threshold must be within [1, 5]",
        )?;
        check(
            (0.0..=1.0).contains(&self.performance_threshold),
            "performance_threshold must be within [0, 1]",
        )?;
        check(
            self.few_shot_count <= self.seed_example_count,
            "few_shot_count must not exceed seed_example_count",
        )?;
        Ok(())
    }
}

/// An instruction variant flowing through the optimize loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptCandidate {
    pub instruction: String,
    /// Stage tags documenting how the candidate came to be, e.g.
    /// `["mutate:first-principles", "synthesize"]`.
    pub lineage: Vec<String>,
    pub train_score: Option<f64>,
}

impl PromptCandidate {
    pub fn seed(instruction: impl Into<String>) -> Self {
        Self { instruction: instruction.into(), lineage: vec!["seed".to_string()], train_score: None }
    }

    pub fn score_or_zero(&self) -> f64 {
        self.train_score.unwrap_or(0.0)
    }
}

/// Structured feedback on a candidate. `weaknesses` is always non-empty:
/// an unsectioned reply lands there wholesale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critique {
    pub strengths: String,
    pub weaknesses: String,
    pub suggested_edits: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Positive,
    Negative,
    Synthetic,
}

/// One in-context example: an incident rendered as a problem, its root
/// cause, and (after the reasoning stage) a chain of thought.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IclExample {
    pub problem: String,
    pub answer: String,
    #[serde(default)]
    pub reasoning: String,
    pub polarity: Polarity,
}

/// Instruction tuning: mutate → score → critique → synthesize, keeping
/// the best-scoring candidate. The retained best score never decreases;
/// iteration stops early once it reaches `performance_threshold`.
///
/// Returns the best candidate plus the per-iteration best-score history.
pub fn optimize_instruction(
    gateway: &Gateway,
    config: &OptimizationConfig,
    seed_instruction: &str,
    task_description: &str,
    train_examples: &[IclExample],
) -> Result<(PromptCandidate, Vec<HistoryEntry>), OptimizerError> {
    config.validate()?;
    if seed_instruction.trim().is_empty() {
        return Err(OptimizerError::MissingPart("seed instruction"));
    }

    let styles = default_thinking_styles();
    let mut incumbent = PromptCandidate::seed(seed_instruction);
    let seed_outcome = score_candidate(gateway, &incumbent, train_examples, config)?;
    incumbent.train_score = Some(seed_outcome.score);

    let mut history = Vec::new();
    let mut any_iteration_ran = false;

    for iteration in 1..=config.mutate_refine_iterations {
        let candidates = mutate(
            gateway,
            task_description,
            &incumbent.instruction,
            &styles,
            config.mutation_rounds,
            config.styles_per_call,
        )?;

        let mut scored: Vec<(PromptCandidate, ScoreOutcome)> = Vec::new();
        for mut candidate in candidates {
            match score_candidate(gateway, &candidate, train_examples, config) {
                Ok(outcome) => {
                    candidate.train_score = Some(outcome.score);
                    scored.push((candidate, outcome));
                }
                Err(err) => {
                    tracing::warn!("candidate unscoreable, skipping: {err}");
                }
            }
        }
        let Some((mut best, best_outcome)) = scored.into_iter().reduce(|acc, item| {
            if item.1.score > acc.1.score {
                item
            } else {
                acc
            }
        }) else {
            tracing::warn!("iteration {iteration}: no scoreable candidates, skipping");
            continue;
        };
        any_iteration_ran = true;

        let critique = critique_instruction(gateway, &best, &best_outcome.failing)?;
        match synthesize_instruction(gateway, &best, &critique) {
            Ok(mut refined) => match score_candidate(gateway, &refined, train_examples, config) {
                Ok(outcome) => {
                    refined.train_score = Some(outcome.score);
                    if refined.score_or_zero() >= best.score_or_zero() {
                        best = refined;
                    }
                }
                Err(err) => tracing::warn!("refined candidate unscoreable, keeping best: {err}"),
            },
            Err(OptimizerError::EmptySynthesis) => {
                tracing::warn!("iteration {iteration}: empty synthesis, keeping prior candidate");
            }
            Err(err) => return Err(err),
        }

        if best.score_or_zero() >= incumbent.score_or_zero() {
            incumbent = best;
        }
        history.push(HistoryEntry { iteration, best_score: incumbent.score_or_zero() });

        if incumbent.score_or_zero() >= config.performance_threshold {
            break;
        }
    }

    if !any_iteration_ran {
        return Err(OptimizerError::AllIterationsSkipped);
    }
    Ok((incumbent, history))
}

/// Prompt artifacts persisted by a full optimization run, one per stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageArtifacts {
    pub base: PromptArtifact,
    pub after_instruction: PromptArtifact,
    pub after_examples: PromptArtifact,
    pub final_prompt: PromptArtifact,
}

pub const STAGE_NAMES: [&str; 4] = ["base", "after-instruction", "after-examples", "final"];

impl StageArtifacts {
    pub fn by_name(&self, name: &str) -> Option<&PromptArtifact> {
        match name {
            "base" => Some(&self.base),
            "after-instruction" => Some(&self.after_instruction),
            "after-examples" => Some(&self.after_examples),
            "final" => Some(&self.final_prompt),
            _ => None,
        }
    }
}

/// The full optimization pipeline: seed selection, instruction tuning,
/// example tuning, reasoning, validation, intent/persona, assembly.
///
/// `seed` fixes the random choice of the farthest-point-sampling start,
/// making the whole run deterministic against a scripted backend.
pub fn run_optimization(
    gateway: &Gateway,
    index: &VectorIndex,
    corpus_train: &Corpus,
    config: &OptimizationConfig,
    seed: u64,
) -> Result<StageArtifacts, OptimizerError> {
    config.validate()?;
    let task_description = templates::TASK_DESCRIPTION.trim();
    let seed_instruction = templates::MANUAL_INSTRUCTION.trim();

    let seeds = select_seed_examples(index, corpus_train, config.seed_example_count, seed)?;
    let first_few: Vec<IclExample> = seeds.iter().take(config.few_shot_count).cloned().collect();

    let defaults = |instruction: &str, examples: Vec<IclExample>| PromptParts {
        problem_description: task_description.to_string(),
        instruction: instruction.to_string(),
        examples,
        task_intent: templates::DEFAULT_INTENT.trim().to_string(),
        expert_persona: templates::DEFAULT_PERSONA.trim().to_string(),
        answer_format: templates::ANSWER_FORMAT.trim().to_string(),
    };

    let base = PromptArtifact::new(
        build_optimized_prompt(defaults(seed_instruction, first_few.clone()), config)?,
        config.clone(),
        Vec::new(),
        vec!["seed".to_string()],
    );

    let (best, history) =
        optimize_instruction(gateway, config, seed_instruction, task_description, &seeds)?;
    let after_instruction = PromptArtifact::new(
        build_optimized_prompt(defaults(&best.instruction, first_few.clone()), config)?,
        config.clone(),
        history.clone(),
        best.lineage.clone(),
    );

    let (instruction, tuned_examples) =
        optimize_examples(gateway, config, &best.instruction, &seeds)?;
    let after_examples = PromptArtifact::new(
        build_optimized_prompt(defaults(&instruction, tuned_examples.clone()), config)?,
        config.clone(),
        history.clone(),
        best.lineage.clone(),
    );

    let with_reasoning = add_reasoning(gateway, tuned_examples)?;
    let mut validated = validate_examples(gateway, with_reasoning)?;

    // Validation may drop examples; refill from the unused seed pool so
    // the final prompt always carries exactly few_shot_count examples.
    let pool: Vec<IclExample> = seeds
        .iter()
        .filter(|s| !validated.iter().any(|v| v.problem == s.problem))
        .cloned()
        .collect();
    let mut pool = pool.into_iter();
    while validated.len() < config.few_shot_count {
        let Some(seed_example) = pool.next() else {
            return Err(OptimizerError::InsufficientData {
                needed: config.few_shot_count,
                available: validated.len(),
            });
        };
        let candidate = add_reasoning(gateway, vec![seed_example])?;
        match validate_examples(gateway, candidate) {
            Ok(mut kept) => validated.append(&mut kept),
            Err(OptimizerError::ValidationFailed) => continue,
            Err(err) => return Err(err),
        }
    }
    validated.truncate(config.few_shot_count);

    let (task_intent, expert_persona) = generate_intent_persona(gateway, task_description)?;
    let final_prompt = PromptArtifact::new(
        build_optimized_prompt(
            PromptParts {
                problem_description: task_description.to_string(),
                instruction,
                examples: validated,
                task_intent,
                expert_persona,
                answer_format: templates::ANSWER_FORMAT.trim().to_string(),
            },
            config,
        )?,
        config.clone(),
        history,
        best.lineage,
    );

    Ok(StageArtifacts { base, after_instruction, after_examples, final_prompt })
}
