//! Deterministic scripted mock backend.
//!
//! Every offline test and the CLI's `--backend test` mode run against a
//! [`MockScript`]: an ordered list of rules, each pairing a matcher with
//! a canned response. The request is flattened to `role: content` lines
//! and the first matching rule wins; if nothing matches, the script's
//! default response is returned (or the call fails when there is none).
//!
//! Matchers are plain substrings by default; set `regex: true` on a rule
//! for pattern matching across the whole flattened request.

use std::path::Path;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{ChatBackend, ChatRequest, ChatResponse, GatewayError, TokenUsage};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    /// Substring (or regex, see below) searched in the flattened request.
    #[serde(rename = "match")]
    pub matcher: String,
    /// Interpret `matcher` as a regex instead of a substring.
    #[serde(default)]
    pub regex: bool,
    pub response: String,
}

impl MockRule {
    pub fn substring(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self { matcher: matcher.into(), regex: false, response: response.into() }
    }

    pub fn pattern(matcher: impl Into<String>, response: impl Into<String>) -> Self {
        Self { matcher: matcher.into(), regex: true, response: response.into() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default_response: Option<String>,
}

impl MockScript {
    pub fn new(rules: Vec<MockRule>) -> Self {
        Self { rules, default_response: None }
    }

    pub fn with_default(default_response: impl Into<String>) -> Self {
        Self { rules: Vec::new(), default_response: Some(default_response.into()) }
    }

    pub fn rule(mut self, rule: MockRule) -> Self {
        self.rules.push(rule);
        self
    }

    pub fn default_response(mut self, response: impl Into<String>) -> Self {
        self.default_response = Some(response.into());
        self
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        let text = std::fs::read_to_string(path).map_err(GatewayError::CacheIo)?;
        Self::from_json(&text)
            .map_err(|e| GatewayError::InvalidRequest(format!("bad mock script: {e}")))
    }
}

/// The request text rules are matched against: one `role: content` line
/// per message, in order, with the model role and temperature appended.
pub fn flatten_request(request: &ChatRequest) -> String {
    let mut out = String::new();
    for message in &request.messages {
        out.push_str(message.role.as_str());
        out.push_str(": ");
        out.push_str(&message.content);
        out.push('\n');
    }
    out.push_str(&format!(
        "model_role: {}\ntemperature: {}\n",
        request.model_role, request.temperature
    ));
    out
}

/// Pure, deterministic backend evaluating a [`MockScript`].
pub struct ScriptedBackend {
    script: MockScript,
    compiled: Vec<Option<Regex>>,
    id: String,
}

impl ScriptedBackend {
    pub fn new(script: MockScript) -> Self {
        let compiled = script
            .rules
            .iter()
            .map(|rule| {
                if rule.regex {
                    Some(Regex::new(&rule.matcher).expect("mock rule regex compiles"))
                } else {
                    None
                }
            })
            .collect();
        Self { script, compiled, id: "mock".to_string() }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

impl ChatBackend for ScriptedBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let flat = flatten_request(request);
        let matched = self
            .script
            .rules
            .iter()
            .zip(&self.compiled)
            .find(|(rule, compiled)| match compiled {
                Some(re) => re.is_match(&flat),
                None => flat.contains(&rule.matcher),
            })
            .map(|(rule, _)| rule.response.clone())
            .or_else(|| self.script.default_response.clone());

        match matched {
            Some(content) => Ok(ChatResponse {
                usage: TokenUsage {
                    prompt_tokens: flat.len() as u32 / 4,
                    completion_tokens: content.len() as u32 / 4,
                },
                content,
                backend_id: self.id.clone(),
            }),
            None => Err(GatewayError::UnmatchedRequest),
        }
    }
}

/// Script used by `--backend test`: enough rules, keyed on the shipped
/// prompt templates, to drive every pipeline stage offline.
pub fn builtin_test_script() -> MockScript {
    MockScript::from_json(include_str!("../../assets/test_backend_script.json"))
        .expect("builtin test script parses")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::Role;

    fn request(text: &str) -> ChatRequest {
        ChatRequest::new(Role::Generator, Some("you are a tester"), text)
    }

    #[test]
    fn first_matching_rule_wins() {
        let script = MockScript::new(vec![
            MockRule::substring("root cause", "Cert expired"),
            MockRule::substring("cause", "never reached"),
        ]);
        let backend = ScriptedBackend::new(script);
        let response = backend.complete(&request("what is the root cause?")).unwrap();
        assert_eq!(response.content, "Cert expired");
    }

    #[test]
    fn falls_back_to_default() {
        let script = MockScript::new(vec![MockRule::substring("nope", "x")])
            .default_response("fallback");
        let backend = ScriptedBackend::new(script);
        assert_eq!(backend.complete(&request("hello")).unwrap().content, "fallback");
    }

    #[test]
    fn unmatched_without_default_errors() {
        let backend = ScriptedBackend::new(MockScript::new(vec![]));
        assert!(matches!(
            backend.complete(&request("hello")),
            Err(GatewayError::UnmatchedRequest)
        ));
    }

    #[test]
    fn regex_rules_match_across_messages() {
        let script = MockScript::new(vec![MockRule::pattern(
            "(?s)tester.*incident",
            "matched across",
        )]);
        let backend = ScriptedBackend::new(script);
        assert_eq!(
            backend.complete(&request("an incident happened")).unwrap().content,
            "matched across"
        );
    }

    #[test]
    fn script_round_trips_through_json() {
        let script = MockScript::new(vec![MockRule::substring("a", "b")]).default_response("d");
        let json = serde_json::to_string(&script).unwrap();
        assert_eq!(MockScript::from_json(&json).unwrap(), script);
    }

    #[test]
    fn builtin_script_parses_and_has_default() {
        let script = builtin_test_script();
        assert!(!script.rules.is_empty());
        assert!(script.default_response.is_some());
    }
}
