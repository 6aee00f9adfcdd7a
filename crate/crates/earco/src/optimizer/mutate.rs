//! Mutate stage: thinking-style-driven instruction variations.

use std::sync::LazyLock;

use regex::Regex;

use crate::gateway::{ChatRequest, Gateway, Role};
use crate::templates;

use super::{OptimizerError, PromptCandidate};

/// Built-in thinking-style catalog, (name, prompt line). Callers may
/// substitute their own catalog.
pub fn default_thinking_styles() -> Vec<(String, String)> {
    [
        ("step-by-step", "Decompose the analysis into explicit sequential steps."),
        ("analogical", "Reason by analogy to similar past incidents."),
        ("critical", "Question every assumption in the incident description."),
        ("first-principles", "Reason from what the failing component fundamentally requires."),
        ("risk-focused", "Prioritize the failure modes with the largest blast radius."),
        ("dependency-mapping", "Trace the service's upstream and downstream dependencies."),
        ("timeline", "Reconstruct the incident timeline and look for the triggering change."),
        ("elimination", "Enumerate candidate causes and eliminate them against the evidence."),
        ("pattern-matching", "Match symptom patterns against known failure signatures."),
        ("simplification", "Strip the incident to its simplest consistent explanation."),
    ]
    .into_iter()
    .map(|(n, p)| (n.to_string(), p.to_string()))
    .collect()
}

static ITEM_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\d+[.)]\s*(.*)$").unwrap());

/// Split a numbered model reply ("1. ...\n2. ...") into items, with
/// unnumbered continuation lines folded into the current item.
fn parse_enumerated(reply: &str) -> Vec<String> {
    let mut items: Vec<String> = Vec::new();
    for line in reply.lines() {
        if let Some(caps) = ITEM_RE.captures(line) {
            items.push(caps[1].trim().to_string());
        } else if let Some(current) = items.last_mut() {
            if !line.trim().is_empty() {
                current.push(' ');
                current.push_str(line.trim());
            }
        }
    }
    items.retain(|item| !item.is_empty());
    items
}

/// Generate `mutation_rounds x styles_per_call` candidate instructions.
/// Each round issues one optimizer call covering `styles_per_call`
/// styles (rotating through the catalog) and parses the enumerated
/// reply. An unparseable round is retried once, then skipped.
pub fn mutate(
    gateway: &Gateway,
    task_description: &str,
    instruction: &str,
    thinking_styles: &[(String, String)],
    mutation_rounds: u32,
    styles_per_call: usize,
) -> Result<Vec<PromptCandidate>, OptimizerError> {
    if thinking_styles.is_empty() {
        return Err(OptimizerError::InvalidConfig("at least one thinking style".to_string()));
    }
    if mutation_rounds == 0 {
        return Err(OptimizerError::InvalidConfig("mutation_rounds must be >= 1".to_string()));
    }

    let mut candidates = Vec::new();
    for round in 0..mutation_rounds as usize {
        let styles: Vec<&(String, String)> = (0..styles_per_call)
            .map(|i| &thinking_styles[(round * styles_per_call + i) % thinking_styles.len()])
            .collect();
        let styles_block = styles
            .iter()
            .enumerate()
            .map(|(i, (name, prompt))| format!("{}. [{name}] {prompt}", i + 1))
            .collect::<Vec<_>>()
            .join("\n");
        let prompt = templates::render(
            templates::MUTATE,
            &[
                ("task_description", task_description),
                ("instruction", instruction),
                ("count", &styles_per_call.to_string()),
                ("styles", &styles_block),
            ],
        );
        let request = ChatRequest::new(Role::Optimizer, None, prompt);

        let mut items = parse_enumerated(&gateway.complete(&request)?.content);
        if items.is_empty() {
            // One retry; temperature > 0 gives a real model a second chance.
            items = parse_enumerated(&gateway.complete(&request)?.content);
        }
        if items.is_empty() {
            tracing::warn!("mutation round {round}: unparseable reply, skipping round");
            continue;
        }
        items.truncate(styles_per_call);
        for (i, item) in items.into_iter().enumerate() {
            let style = &styles[i % styles.len()].0;
            candidates.push(PromptCandidate {
                instruction: item,
                lineage: vec![format!("mutate:{style}")],
                train_score: None,
            });
        }
    }
    Ok(candidates)
}
