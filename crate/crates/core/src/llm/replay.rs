//! Deterministic backends for tests and offline runs.

use std::fs;
use std::path::Path;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    rough_tokens, BackendError, CallCounter, CompletionRequest, CompletionResult, HashEmbedder,
    LlmBackend, RoleTag, TokenUsage,
};

/// One scripted response. A rule matches when the role agrees (or is unset),
/// every `contains` needle occurs in the prompt and `regex` (if any) matches.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<RoleTag>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub contains: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regex: Option<String>,
    pub response: String,
    /// Rule stops matching after this many uses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_uses: Option<usize>,
    /// A required rule that was never used makes [`ReplayBackend::verify_exhausted`] fail.
    #[serde(default)]
    pub required: bool,
}

impl ReplayRule {
    pub fn new(role: RoleTag, response: impl Into<String>) -> Self {
        Self {
            role: Some(role),
            contains: Vec::new(),
            regex: None,
            response: response.into(),
            max_uses: None,
            required: false,
        }
    }

    pub fn containing(mut self, needle: impl Into<String>) -> Self {
        self.contains.push(needle.into());
        self
    }

    pub fn matching(mut self, pattern: impl Into<String>) -> Self {
        self.regex = Some(pattern.into());
        self
    }

    pub fn once(mut self) -> Self {
        self.max_uses = Some(1);
        self
    }

    pub fn uses(mut self, n: usize) -> Self {
        self.max_uses = Some(n);
        self
    }

    pub fn required(mut self) -> Self {
        self.required = true;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefaultAction {
    #[default]
    Error,
    Text(String),
}

fn default_true() -> bool {
    true
}

/// Ordered rules; the first matching rule wins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayScript {
    #[serde(default = "default_model")]
    pub model: String,
    pub rules: Vec<ReplayRule>,
    #[serde(default)]
    pub default: DefaultAction,
    /// Serve `embed` from the hash embedder.
    #[serde(default = "default_true")]
    pub hash_embedding_fallback: bool,
}

fn default_model() -> String {
    "replay".to_owned()
}

impl Default for ReplayScript {
    fn default() -> Self {
        Self {
            model: default_model(),
            rules: Vec::new(),
            default: DefaultAction::Error,
            hash_embedding_fallback: true,
        }
    }
}

impl ReplayScript {
    pub fn new(rules: Vec<ReplayRule>) -> Self {
        Self {
            rules,
            ..Self::default()
        }
    }

    pub fn push(&mut self, rule: ReplayRule) -> &mut Self {
        self.rules.push(rule);
        self
    }

    pub fn with_default(mut self, default: DefaultAction) -> Self {
        self.default = default;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, BackendError> {
        serde_json::from_str(text).map_err(|e| BackendError::Other(format!("invalid replay script: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = fs::read_to_string(path)
            .map_err(|e| BackendError::Other(format!("cannot read replay script {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("script serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub role: RoleTag,
    pub prompt: String,
    pub response: String,
    /// Index of the rule that answered, `None` for the default action.
    pub rule: Option<usize>,
}

#[derive(Debug, Default)]
struct ReplayState {
    uses: Vec<usize>,
    transcript: Vec<CallRecord>,
}

/// Scripted backend: matches each request against [`ReplayScript`] rules and
/// records the exchange.
#[derive(Debug)]
pub struct ReplayBackend {
    script: ReplayScript,
    patterns: Vec<Option<Regex>>,
    state: Mutex<ReplayState>,
    counter: CallCounter,
    embedder: HashEmbedder,
}

impl ReplayBackend {
    pub fn new(script: ReplayScript) -> Result<Self, BackendError> {
        let patterns = script
            .rules
            .iter()
            .map(|r| {
                r.regex
                    .as_deref()
                    .map(Regex::new)
                    .transpose()
                    .map_err(|e| BackendError::Other(format!("invalid rule regex: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let uses = vec![0; script.rules.len()];
        Ok(Self {
            script,
            patterns,
            state: Mutex::new(ReplayState {
                uses,
                transcript: Vec::new(),
            }),
            counter: CallCounter::default(),
            embedder: HashEmbedder::default(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        Self::new(ReplayScript::load(path)?)
    }

    pub fn script(&self) -> &ReplayScript {
        &self.script
    }

    pub fn counter(&self) -> &CallCounter {
        &self.counter
    }

    pub fn calls(&self, role: RoleTag) -> usize {
        self.counter.get(role)
    }

    pub fn transcript(&self) -> Vec<CallRecord> {
        self.state.lock().unwrap().transcript.clone()
    }

    /// Indices of required rules that were never used.
    pub fn unused_required_rules(&self) -> Vec<usize> {
        let st = self.state.lock().unwrap();
        self.script
            .rules
            .iter()
            .enumerate()
            .filter(|(i, r)| r.required && st.uses[*i] == 0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn verify_exhausted(&self) -> Result<(), String> {
        let unused = self.unused_required_rules();
        if unused.is_empty() {
            Ok(())
        } else {
            Err(format!("required replay rules never used: {unused:?}"))
        }
    }

    fn rule_matches(&self, i: usize, req: &CompletionRequest, uses: usize) -> bool {
        let rule = &self.script.rules[i];
        if rule.max_uses.is_some_and(|m| uses >= m) {
            return false;
        }
        if rule.role.is_some_and(|r| r != req.role_tag) {
            return false;
        }
        if !rule.contains.iter().all(|n| req.prompt.contains(n.as_str())) {
            return false;
        }
        self.patterns[i].as_ref().is_none_or(|re| re.is_match(&req.prompt))
    }
}

impl LlmBackend for ReplayBackend {
    fn model_id(&self) -> &str {
        &self.script.model
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        let mut st = self.state.lock().unwrap();
        let hit = (0..self.script.rules.len()).find(|&i| self.rule_matches(i, req, st.uses[i]));
        let text = match hit {
            Some(i) => {
                st.uses[i] += 1;
                self.script.rules[i].response.clone()
            }
            None => match &self.script.default {
                DefaultAction::Text(t) => t.clone(),
                DefaultAction::Error => {
                    return Err(BackendError::NoMatchingRule { role: req.role_tag });
                }
            },
        };
        st.transcript.push(CallRecord {
            role: req.role_tag,
            prompt: req.prompt.clone(),
            response: text.clone(),
            rule: hit,
        });
        drop(st);
        self.counter.record(req.role_tag);
        Ok(CompletionResult {
            token_usage: TokenUsage {
                input: rough_tokens(&req.prompt),
                output: rough_tokens(&text),
            },
            text,
            latency: started.elapsed(),
            model_id: self.script.model.clone(),
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        if self.script.hash_embedding_fallback {
            Ok(self.embedder.embed(texts))
        } else {
            Err(BackendError::EmbeddingUnavailable(
                "replay script has no embedding fallback".into(),
            ))
        }
    }
}

type Responder = dyn Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync;

/// Backend computing each response with a rule-based function.
pub struct OracleBackend {
    model: String,
    respond: Box<Responder>,
    counter: CallCounter,
    embedder: HashEmbedder,
    delay: Option<Duration>,
}

impl OracleBackend {
    pub fn new(
        model: impl Into<String>,
        respond: impl Fn(&CompletionRequest) -> Result<String, BackendError> + Send + Sync + 'static,
    ) -> Self {
        Self {
            model: model.into(),
            respond: Box::new(respond),
            counter: CallCounter::default(),
            embedder: HashEmbedder::default(),
            delay: None,
        }
    }

    /// Sleeps this long inside every completion.
    pub fn with_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn counter(&self) -> &CallCounter {
        &self.counter
    }

    pub fn calls(&self, role: RoleTag) -> usize {
        self.counter.get(role)
    }
}

impl std::fmt::Debug for OracleBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OracleBackend").field("model", &self.model).finish_non_exhaustive()
    }
}

impl LlmBackend for OracleBackend {
    fn model_id(&self) -> &str {
        &self.model
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        let started = Instant::now();
        if let Some(d) = self.delay {
            std::thread::sleep(d);
        }
        let text = (self.respond)(req)?;
        self.counter.record(req.role_tag);
        Ok(CompletionResult {
            token_usage: TokenUsage {
                input: rough_tokens(&req.prompt),
                output: rough_tokens(&text),
            },
            text,
            latency: started.elapsed(),
            model_id: self.model.clone(),
        })
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, BackendError> {
        Ok(self.embedder.embed(texts))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(role: RoleTag, prompt: &str) -> CompletionRequest {
        CompletionRequest::new(role, prompt)
    }

    #[test]
    fn first_matching_rule_wins() {
        let backend = ReplayBackend::new(ReplayScript::new(vec![
            ReplayRule::new(RoleTag::Integrate, "step-1").containing("fact_before_filter"),
            ReplayRule::new(RoleTag::Integrate, "other"),
        ]))
        .unwrap();
        let out = backend.complete(&req(RoleTag::Integrate, "x [[ ## fact_before_filter ## ]]")).unwrap();
        assert_eq!(out.text, "step-1");
        assert_eq!(backend.complete(&req(RoleTag::Integrate, "nothing")).unwrap().text, "other");
    }

    #[test]
    fn identical_requests_identical_results() {
        let backend =
            ReplayBackend::new(ReplayScript::new(vec![ReplayRule::new(RoleTag::Ner, "{\"named entities\": []}")]))
                .unwrap();
        let a = backend.complete(&req(RoleTag::Ner, "p")).unwrap();
        let b = backend.complete(&req(RoleTag::Ner, "p")).unwrap();
        assert_eq!(a.text, b.text);
        assert_eq!(backend.calls(RoleTag::Ner), 2);
        let t = backend.transcript();
        assert_eq!(t[0], t[1]);
    }

    #[test]
    fn missing_rule_names_role() {
        let backend = ReplayBackend::new(ReplayScript::default()).unwrap();
        let err = backend.complete(&req(RoleTag::ReaderPassage, "p")).unwrap_err();
        assert_eq!(err, BackendError::NoMatchingRule { role: RoleTag::ReaderPassage });
        assert!(err.to_string().contains("READER_PASSAGE"));
        assert_eq!(backend.calls(RoleTag::ReaderPassage), 0);
    }

    #[test]
    fn max_uses_sequences_responses() {
        let backend = ReplayBackend::new(ReplayScript::new(vec![
            ReplayRule::new(RoleTag::Integrate, "garbage").once(),
            ReplayRule::new(RoleTag::Integrate, "valid"),
        ]))
        .unwrap();
        assert_eq!(backend.complete(&req(RoleTag::Integrate, "p")).unwrap().text, "garbage");
        assert_eq!(backend.complete(&req(RoleTag::Integrate, "p")).unwrap().text, "valid");
    }

    #[test]
    fn required_rules_must_be_used() {
        let backend = ReplayBackend::new(ReplayScript::new(vec![
            ReplayRule::new(RoleTag::Ner, "a").required(),
            ReplayRule::new(RoleTag::Integrate, "b").required(),
        ]))
        .unwrap();
        backend.complete(&req(RoleTag::Ner, "p")).unwrap();
        assert_eq!(backend.unused_required_rules(), vec![1]);
        assert!(backend.verify_exhausted().is_err());
    }

    #[test]
    fn default_text_and_json_roundtrip() {
        let script = ReplayScript::new(vec![ReplayRule::new(RoleTag::Ner, "x").matching("^abc")])
            .with_default(DefaultAction::Text("fallback".into()));
        let parsed = ReplayScript::from_json(&script.to_json()).unwrap();
        assert_eq!(parsed, script);
        let backend = ReplayBackend::new(parsed).unwrap();
        assert_eq!(backend.complete(&req(RoleTag::Ner, "zabc")).unwrap().text, "fallback");
        assert_eq!(backend.complete(&req(RoleTag::Ner, "abc")).unwrap().text, "x");
    }
}
