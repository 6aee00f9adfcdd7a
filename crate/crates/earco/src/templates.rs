//! Prompt templates, shipped as versioned files under `templates/`.
//!
//! Placeholders use `{name}` syntax and are substituted literally by
//! [`render`]; unknown braces in template text are left untouched.

pub const SUMMARIZE: &str = include_str!("../templates/summarize.txt");
pub const MUTATE: &str = include_str!("../templates/mutate.txt");
pub const CRITIQUE_INSTRUCTION: &str = include_str!("../templates/critique_instruction.txt");
pub const SYNTHESIZE_INSTRUCTION: &str = include_str!("../templates/synthesize_instruction.txt");
pub const CRITIQUE_EXAMPLES: &str = include_str!("../templates/critique_examples.txt");
pub const SYNTHESIZE_EXAMPLES: &str = include_str!("../templates/synthesize_examples.txt");
pub const REASONING: &str = include_str!("../templates/reasoning.txt");
pub const VALIDATE_EXAMPLE: &str = include_str!("../templates/validate_example.txt");
pub const INTENT_PERSONA: &str = include_str!("../templates/intent_persona.txt");
pub const JUDGE: &str = include_str!("../templates/judge.txt");
pub const MANUAL_INSTRUCTION: &str = include_str!("../templates/manual_instruction.txt");
pub const ANSWER_FORMAT: &str = include_str!("../templates/answer_format.txt");
pub const TASK_DESCRIPTION: &str = include_str!("../templates/task_description.txt");
pub const DEFAULT_INTENT: &str = include_str!("../templates/default_intent.txt");
pub const DEFAULT_PERSONA: &str = include_str!("../templates/default_persona.txt");

/// Substitute `{name}` placeholders. Values are inserted verbatim.
pub fn render(template: &str, vars: &[(&str, &str)]) -> String {
    let mut out = template.to_string();
    for (name, value) in vars {
        out = out.replace(&format!("{{{name}}}"), value);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_substitutes_all_occurrences() {
        let out = render("a {x} b {x} {y}", &[("x", "1"), ("y", "2")]);
        assert_eq!(out, "a 1 b 1 2");
    }

    #[test]
    fn unknown_placeholders_left_alone() {
        assert_eq!(render("{keep} {x}", &[("x", "v")]), "{keep} v");
    }

    #[test]
    fn judge_template_carries_the_rubric() {
        for needle in ["content coverage, nuance, and accuracy", "{generated}", "{reference}", "{summary}"] {
            assert!(JUDGE.contains(needle), "judge template missing {needle:?}");
        }
    }

    #[test]
    fn answer_format_has_each_marker_once() {
        assert_eq!(ANSWER_FORMAT.matches("<ANS_START>").count(), 1);
        assert_eq!(ANSWER_FORMAT.matches("<ANS_END>").count(), 1);
    }

    #[test]
    fn default_persona_mentions_the_oce_role() {
        assert!(DEFAULT_PERSONA.contains("On-Call Engineer"));
    }

    #[test]
    fn summarize_template_defines_the_sentinel() {
        assert!(SUMMARIZE.contains("NOISY_ROOT_CAUSE"));
    }
}
