//! Integrator prompt assembly, sectioned-output parsing and history.
//!
//! A prompt for round `t` is the instruction, the original question, the
//! round-1 candidates and then, for every earlier round, the model's sections
//! (`thought`, `fact_after_filter`, `question`) followed by the next round's
//! `fact_before_filter` block. The prompt for round `t + 1` therefore extends
//! the prompt for round `t` by exactly the round-`t` output and observation.

use std::collections::{HashMap, HashSet};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::{normalized_key, parse_rows, CandidateTripleSet, Triple};
use crate::llm::{BackendError, CompletionRequest, LlmBackend, RoleTag};
use crate::prompts;

pub const MARK_QUERY: &str = "[[ ## Original Query ## ]]";
pub const MARK_FACT_BEFORE: &str = "[[ ## fact_before_filter ## ]]";
pub const MARK_HISTORY: &str = "[[ ## historical_context ## ]]";
pub const MARK_THOUGHT: &str = "[[ ## thought ## ]]";
pub const MARK_FACT_AFTER: &str = "[[ ## fact_after_filter ## ]]";
pub const MARK_QUESTION: &str = "[[ ## question ## ]]";
pub const NO_QUESTION: &str = "<no question>";
const OMITTED_THOUGHT: &str = "(omitted)";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntegrationError {
    #[error("cannot parse integrator output ({message}): {raw:?}")]
    Parse { message: String, raw: String },
    #[error("history index mismatch: expected record {expected}, got {got}")]
    HistoryIndex { expected: usize, got: usize },
}

/// `(r_t, T̃_t, a_{t+1})`: rationale, kept triples and the next query
/// (`None` ends the loop).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegrationDecision {
    pub rationale: String,
    pub core_triples: Vec<Triple>,
    pub next_query: Option<String>,
}

impl IntegrationDecision {
    pub fn terminal(rationale: impl Into<String>) -> Self {
        Self {
            rationale: rationale.into(),
            core_triples: Vec::new(),
            next_query: None,
        }
    }
}

/// One finished round: the decision plus the candidates retrieved for its
/// next query. `next_candidates` is only present when `next_query` is; the
/// last record of a budget-stopped run has a query but no candidates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub rationale: String,
    pub core_triples: Vec<Triple>,
    pub next_query: Option<String>,
    pub next_candidates: Option<CandidateTripleSet>,
}

impl IterationRecord {
    pub fn new(decision: IntegrationDecision, next_candidates: Option<CandidateTripleSet>) -> Self {
        debug_assert!(next_candidates.is_none() || decision.next_query.is_some());
        Self {
            rationale: decision.rationale,
            core_triples: decision.core_triples,
            next_query: decision.next_query,
            next_candidates,
        }
    }

    pub fn decision(&self) -> IntegrationDecision {
        IntegrationDecision {
            rationale: self.rationale.clone(),
            core_triples: self.core_triples.clone(),
            next_query: self.next_query.clone(),
        }
    }
}

/// Records of rounds `1..t-1`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryContext {
    pub records: Vec<IterationRecord>,
}

impl HistoryContext {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Returns `history` extended by `record`, which must be record number
/// `history.len() + 1`.
pub fn append_history(
    history: &HistoryContext,
    index: usize,
    record: IterationRecord,
) -> Result<HistoryContext, IntegrationError> {
    let expected = history.len() + 1;
    if index != expected {
        return Err(IntegrationError::HistoryIndex { expected, got: index });
    }
    let mut next = history.clone();
    next.records.push(record);
    Ok(next)
}

/// `{"fact": [...]}` with one triple per line.
pub fn render_facts(triples: &[Triple]) -> String {
    if triples.is_empty() {
        return "{\"fact\": []}".to_owned();
    }
    let rows: Vec<String> = triples
        .iter()
        .map(|t| serde_json::to_string(&t.fields()).expect("fields serialize"))
        .collect();
    format!("{{\"fact\": [\n{}\n]}}", rows.join(",\n"))
}

/// Observation block: the candidates of the following round.
pub fn render_observation(candidates: &CandidateTripleSet) -> String {
    format!("{MARK_FACT_BEFORE}:\n{}\n\n", render_facts(&candidates.triples))
}

/// The model's sectioned output for a decision.
pub fn render_decision(decision: &IntegrationDecision) -> String {
    render_sections(&decision.rationale, &decision.core_triples, decision.next_query.as_deref())
}

fn render_sections(rationale: &str, core: &[Triple], next_query: Option<&str>) -> String {
    format!(
        "{MARK_THOUGHT}:\n{}\n\n{MARK_FACT_AFTER}:\n{}\n\n{MARK_QUESTION}:\n{}\n\n",
        rationale.trim(),
        render_facts(core),
        next_query.unwrap_or(NO_QUESTION)
    )
}

fn render_prompt(x: &str, initial: &CandidateTripleSet, history: &HistoryContext, omit_thoughts: usize) -> String {
    let mut p = String::new();
    p.push_str(prompts::integration_instruction());
    p.push_str("\n\ni-th Inputs:\n\n");
    p.push_str(&format!("{MARK_QUERY}: {x}\n\n"));
    p.push_str(&render_observation(initial));
    p.push_str(&format!("{MARK_HISTORY}:\n\n"));
    for (i, rec) in history.records.iter().enumerate() {
        let thought = if i < omit_thoughts { OMITTED_THOUGHT } else { rec.rationale.as_str() };
        p.push_str(&render_sections(thought, &rec.core_triples, rec.next_query.as_deref()));
        if let Some(next) = &rec.next_candidates {
            p.push_str(&render_observation(next));
        }
    }
    p
}

/// Integration prompt for round `history.len() + 1`.
///
/// With a character budget, the oldest thoughts are replaced by a placeholder
/// until the prompt fits; triples and questions are always kept.
pub fn build_integration_prompt(
    x: &str,
    initial: &CandidateTripleSet,
    history: &HistoryContext,
    char_budget: Option<usize>,
) -> String {
    let mut omit = 0;
    loop {
        let p = render_prompt(x, initial, history, omit);
        match char_budget {
            Some(budget) if p.chars().count() > budget && omit < history.len() => omit += 1,
            _ => return p,
        }
    }
}

/// Candidate sets visible in a round-`history.len() + 1` prompt, latest first.
pub fn presented_candidates<'a>(initial: &'a CandidateTripleSet, history: &'a HistoryContext) -> Vec<&'a CandidateTripleSet> {
    let mut sets: Vec<&CandidateTripleSet> = history.records.iter().filter_map(|r| r.next_candidates.as_ref()).collect();
    sets.reverse();
    sets.push(initial);
    sets
}

fn marker_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?i)\[\[\s*##\s*(thought|fact_after_filter|question|fact_before_filter|original query|historical_context)\s*##\s*\]\]")
            .unwrap()
    })
}

fn section_body(s: &str) -> &str {
    let s = s.trim_start();
    s.strip_prefix(':').unwrap_or(s).trim()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedIntegration {
    pub decision: IntegrationDecision,
    /// Filtered facts that matched no presented candidate.
    pub unmatched_facts: usize,
    /// Malformed rows in the fact section.
    pub malformed_facts: usize,
}

/// Parses the model's `thought` / `fact_after_filter` / `question` sections
/// and resolves kept facts against `presented` (earlier sets take lower
/// priority). Facts matching no candidate are dropped.
pub fn parse_integration_output(
    raw: &str,
    presented: &[&CandidateTripleSet],
) -> Result<ParsedIntegration, IntegrationError> {
    let perr = |message: String| IntegrationError::Parse {
        message,
        raw: raw.to_owned(),
    };
    let markers: Vec<(String, usize, usize)> = marker_regex()
        .captures_iter(raw)
        .map(|c| {
            let m = c.get(0).unwrap();
            (c[1].to_ascii_lowercase(), m.start(), m.end())
        })
        .collect();
    let find = |name: &str| markers.iter().position(|(n, _, _)| n == name);
    let thought = find("thought").ok_or_else(|| perr("missing thought section".into()))?;
    let fact = find("fact_after_filter").ok_or_else(|| perr("missing fact_after_filter section".into()))?;
    let question = find("question").ok_or_else(|| perr("missing question section".into()))?;
    if !(thought < fact && fact < question) {
        return Err(perr("sections out of order".into()));
    }
    let slice = |i: usize| {
        let start = markers[i].2;
        let end = markers.get(i + 1).map_or(raw.len(), |m| m.1);
        section_body(&raw[start..end])
    };
    let rationale = section_body(&raw[markers[thought].2..markers[fact].1]).to_owned();
    let fact_text = section_body(&raw[markers[fact].2..markers[question].1]);
    let question_text = slice(question);

    let rows = parse_rows(fact_text, "fact").map_err(|m| perr(format!("fact_after_filter: {m}")))?;
    let mut lookup: HashMap<&str, &Triple> = HashMap::new();
    for set in presented.iter().rev() {
        for t in &set.triples {
            lookup.insert(t.normalized.as_str(), t);
        }
    }
    let mut seen = HashSet::new();
    let mut core = Vec::new();
    let mut unmatched = 0;
    for [s, r, o] in &rows.rows {
        let key = normalized_key(s, r, o);
        match lookup.get(key.as_str()) {
            Some(t) => {
                if seen.insert(key) {
                    core.push((*t).clone());
                }
            }
            None => unmatched += 1,
        }
    }
    if unmatched > 0 {
        warn!("dropped {unmatched} filtered fact(s) not among the presented candidates");
    }

    let next_query = if question_text.is_empty() || question_text.to_lowercase().contains(NO_QUESTION) {
        None
    } else {
        Some(question_text.to_owned())
    };
    Ok(ParsedIntegration {
        decision: IntegrationDecision {
            rationale,
            core_triples: core,
            next_query,
        },
        unmatched_facts: unmatched,
        malformed_facts: rows.dropped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrationOutcome {
    pub decision: IntegrationDecision,
    /// Re-issued requests after a parse failure (0 or 1).
    pub retries: usize,
    /// Both attempts failed to parse; the decision is the terminal fallback.
    pub safe_terminated: bool,
    pub unmatched_facts: usize,
    pub raw: String,
    pub latency: Duration,
}

/// Prompt, complete and parse. A parse failure is retried once with the same
/// prompt; a second failure yields a terminal decision carrying the raw text.
pub fn run_integration(
    x: &str,
    initial: &CandidateTripleSet,
    history: &HistoryContext,
    backend: &dyn LlmBackend,
    char_budget: Option<usize>,
) -> Result<IntegrationOutcome, BackendError> {
    let started = Instant::now();
    let req = CompletionRequest::new(RoleTag::Integrate, build_integration_prompt(x, initial, history, char_budget));
    let presented = presented_candidates(initial, history);
    let mut retries = 0;
    loop {
        let out = backend.complete(&req)?;
        match parse_integration_output(&out.text, &presented) {
            Ok(parsed) => {
                return Ok(IntegrationOutcome {
                    decision: parsed.decision,
                    retries,
                    safe_terminated: false,
                    unmatched_facts: parsed.unmatched_facts,
                    raw: out.text,
                    latency: started.elapsed(),
                })
            }
            Err(e) if retries == 0 => {
                warn!("{e}; retrying once");
                retries += 1;
            }
            Err(e) => {
                warn!("{e}; terminating safely");
                return Ok(IntegrationOutcome {
                    decision: IntegrationDecision::terminal(out.text.clone()),
                    retries,
                    safe_terminated: true,
                    unmatched_facts: 0,
                    raw: out.text,
                    latency: started.elapsed(),
                });
            }
        }
    }
}
