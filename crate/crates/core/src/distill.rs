//! Teacher trajectories and their export as target-masked training examples.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::extraction::CandidateTripleSet;
use crate::ici::{IciResult, StopReason};
use crate::integration::{build_integration_prompt, render_decision, HistoryContext, IntegrationDecision, IterationRecord};
use crate::prompts::{integration_instruction, INTEGRATION_INSTRUCTION_ID};

pub const MASK_TARGET_ONLY: &str = "target_only";

#[derive(Debug, Error)]
pub enum DistillError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Malformed { path: String, line: usize, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrajectoryStep {
    pub decision: IntegrationDecision,
    /// Candidates retrieved for `decision.next_query`.
    pub observation: Option<CandidateTripleSet>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub question_id: String,
    pub question: String,
    pub initial_candidates: CandidateTripleSet,
    pub instruction_id: String,
    pub steps: Vec<TrajectoryStep>,
    pub stop_reason: StopReason,
    /// Filled in from the evaluation of the teacher run.
    pub answer_correct: Option<bool>,
}

impl Trajectory {
    /// History of the first `t` steps.
    pub fn history_prefix(&self, t: usize) -> HistoryContext {
        HistoryContext {
            records: self.steps[..t]
                .iter()
                .map(|s| IterationRecord::new(s.decision.clone(), s.observation.clone()))
                .collect(),
        }
    }
}

pub fn record_trajectory(question_id: &str, result: &IciResult) -> Trajectory {
    let steps = result
        .history
        .records
        .iter()
        .map(|r| TrajectoryStep {
            decision: r.decision(),
            observation: r.next_candidates.clone(),
        })
        .collect();
    Trajectory {
        question_id: question_id.to_owned(),
        question: result.question.clone(),
        initial_candidates: result.initial_candidates.clone(),
        instruction_id: INTEGRATION_INSTRUCTION_ID.to_owned(),
        steps,
        stop_reason: result.stop_reason,
        answer_correct: None,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExampleMeta {
    pub question_id: String,
    /// 1-based round number.
    pub step: usize,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingExample {
    pub context: String,
    pub target: String,
    pub meta: ExampleMeta,
    /// The same example as system/user/assistant turns; only the assistant
    /// turn is supervised.
    pub messages: Vec<ChatMessage>,
}

/// One example per step. Contexts are rendered without a character budget
/// so that each context is a strict prefix of the next.
pub fn export_training_examples(traj: &Trajectory) -> Vec<TrainingExample> {
    let instruction = integration_instruction();
    (0..traj.steps.len())
        .map(|t| {
            let context = build_integration_prompt(&traj.question, &traj.initial_candidates, &traj.history_prefix(t), None);
            let target = render_decision(&traj.steps[t].decision);
            let user = context.strip_prefix(instruction).unwrap_or(&context).trim_start().to_owned();
            TrainingExample {
                messages: vec![
                    ChatMessage {
                        role: "system".into(),
                        content: instruction.to_owned(),
                    },
                    ChatMessage {
                        role: "user".into(),
                        content: user,
                    },
                    ChatMessage {
                        role: "assistant".into(),
                        content: target.clone(),
                    },
                ],
                context,
                target,
                meta: ExampleMeta {
                    question_id: traj.question_id.clone(),
                    step: t + 1,
                    mask: MASK_TARGET_ONLY.to_owned(),
                },
            }
        })
        .collect()
}

pub fn export_all(trajs: &[Trajectory]) -> Vec<TrainingExample> {
    trajs.par_iter().flat_map_iter(export_training_examples).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterPolicy {
    #[default]
    KeepAll,
    KeepAnswerCorrect,
    KeepTerminated,
}

impl std::str::FromStr for FilterPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keep-all" => Ok(Self::KeepAll),
            "keep-answer-correct" => Ok(Self::KeepAnswerCorrect),
            "keep-terminated" => Ok(Self::KeepTerminated),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

/// Applies `policy`, then keeps at most `cap` trajectories in input order.
pub fn filter_trajectories(trajs: &[Trajectory], policy: FilterPolicy, cap: Option<usize>) -> Vec<Trajectory> {
    trajs
        .iter()
        .filter(|t| match policy {
            FilterPolicy::KeepAll => true,
            FilterPolicy::KeepAnswerCorrect => t.answer_correct == Some(true),
            FilterPolicy::KeepTerminated => t.stop_reason == StopReason::NoQuestion,
        })
        .take(cap.unwrap_or(usize::MAX))
        .cloned()
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<(), DistillError> {
    let io = |source| DistillError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| io(e.into()))?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, DistillError> {
    let shown = path.display().to_string();
    let f = File::open(path).map_err(|source| DistillError::Io {
        path: shown.clone(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|source| DistillError::Io {
            path: shown.clone(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DistillError::Malformed {
            path: shown.clone(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extraction::Triple;
    use crate::integration::{parse_integration_output, NO_QUESTION};

    fn cands(q: &str, it: usize, rows: &[(&str, &str, &str)]) -> CandidateTripleSet {
        CandidateTripleSet {
            query: q.into(),
            iteration: it,
            triples: rows
                .iter()
                .map(|(s, r, o)| Triple::new(*s, *r, *o, "d", Some(0)).unwrap())
                .collect(),
        }
    }

    fn two_step() -> Trajectory {
        let c1 = cands("q", 1, &[("a", "born in", "b"), ("x", "y", "z")]);
        let c2 = cands("where is b", 2, &[("b", "located in", "c")]);
        Trajectory {
            question_id: "t1".into(),
            question: "q".into(),
            initial_candidates: c1.clone(),
            instruction_id: INTEGRATION_INSTRUCTION_ID.into(),
            steps: vec![
                TrajectoryStep {
                    decision: IntegrationDecision {
                        rationale: "a was born in b.".into(),
                        core_triples: vec![c1.triples[0].clone()],
                        next_query: Some("where is b".into()),
                    },
                    observation: Some(c2.clone()),
                },
                TrajectoryStep {
                    decision: IntegrationDecision {
                        rationale: "b is in c.".into(),
                        core_triples: vec![c2.triples[0].clone()],
                        next_query: None,
                    },
                    observation: None,
                },
            ],
            stop_reason: StopReason::NoQuestion,
            answer_correct: Some(true),
        }
    }

    #[test]
    fn contexts_nest_and_targets_reparse() {
        let traj = two_step();
        let ex = export_training_examples(&traj);
        assert_eq!(ex.len(), 2);
        assert!(ex[1].context.contains(&ex[0].target));
        let obs = crate::integration::render_observation(traj.steps[0].observation.as_ref().unwrap());
        assert_eq!(ex[1].context, format!("{}{}{}", ex[0].context, ex[0].target, obs));
        assert!(ex[1].target.trim_end().ends_with(NO_QUESTION));
        for (t, e) in ex.iter().enumerate() {
            let h = traj.history_prefix(t + 1);
            let presented = crate::integration::presented_candidates(&traj.initial_candidates, &h);
            let parsed = parse_integration_output(&e.target, &presented).unwrap();
            assert_eq!(parsed.decision, traj.steps[t].decision);
            assert_eq!(e.meta.mask, MASK_TARGET_ONLY);
            assert_eq!(e.messages[2].content, e.target);
        }
    }

    #[test]
    fn empty_trajectory_exports_nothing() {
        let mut t = two_step();
        t.steps.clear();
        assert!(export_training_examples(&t).is_empty());
    }

    #[test]
    fn policies() {
        let good = two_step();
        let mut bad = two_step();
        bad.answer_correct = Some(false);
        bad.stop_reason = StopReason::MaxIterations;
        let all = vec![good.clone(), bad.clone()];
        assert_eq!(filter_trajectories(&all, FilterPolicy::KeepAnswerCorrect, None), [good.clone()]);
        assert_eq!(filter_trajectories(&all, FilterPolicy::KeepTerminated, None), [good.clone()]);
        let five: Vec<_> = (0..5)
            .map(|i| {
                let mut t = good.clone();
                t.question_id = i.to_string();
                t
            })
            .collect();
        let capped = filter_trajectories(&five, FilterPolicy::KeepAll, Some(2));
        assert_eq!(capped.iter().map(|t| t.question_id.as_str()).collect::<Vec<_>>(), ["0", "1"]);
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.jsonl");
        let trajs = vec![two_step(), two_step()];
        write_jsonl(&p, &trajs).unwrap();
        let back: Vec<Trajectory> = read_jsonl(&p).unwrap();
        assert_eq!(back, trajs);
    }
}
