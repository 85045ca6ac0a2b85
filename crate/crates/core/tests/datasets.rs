use std::path::PathBuf;

use cirag::eval::{build_eval_corpus, load_dataset, paragraph_id, DatasetFormat, EvalError, MAX_DPR_DISTRACTORS};
use serde_json::{json, Value};
use tempfile::TempDir;

fn write(dir: &TempDir, name: &str, rows: &[Value], jsonl: bool) -> PathBuf {
    let p = dir.path().join(name);
    let text = if jsonl {
        rows.iter().map(Value::to_string).collect::<Vec<_>>().join("\n")
    } else {
        Value::Array(rows.to_vec()).to_string()
    };
    std::fs::write(&p, text).unwrap();
    p
}

fn hotpot_row(id: &str, gold_title: &str) -> Value {
    json!({
        "_id": id,
        "question": format!("question {id}?"),
        "answer": "yes",
        "supporting_facts": [[gold_title, 0], [gold_title, 1]],
        "context": [
            ["Alpha", ["Alpha is a letter.", " It comes first."]],
            ["Beta", ["Beta is second."]],
            ["Gamma", ["Gamma rays are energetic."]],
        ],
    })
}

#[test]
fn hotpotqa_layout() {
    let dir = TempDir::new().unwrap();
    let rows = [hotpot_row("h1", "Alpha"), hotpot_row("h2", "Beta"), hotpot_row("h3", "Gamma")];
    let p = write(&dir, "hotpot.json", &rows, false);
    let ds = load_dataset(&p, DatasetFormat::Hotpotqa, None, 0).unwrap();
    assert_eq!(ds.len(), 3);
    let alpha = paragraph_id("Alpha", "Alpha is a letter. It comes first.");
    assert_eq!(ds.examples[0].supporting_doc_ids, std::slice::from_ref(&alpha));
    assert_eq!(ds.examples[0].distractor_doc_ids.len(), 2);
    assert!(ds.examples[1].distractor_doc_ids.contains(&alpha));
    assert_eq!(ds.examples[2].gold_answers, ["yes"]);
    // identical paragraphs across examples collapse into one document
    let corpus = build_eval_corpus(&ds).unwrap();
    assert_eq!(corpus.len(), 3);
    assert!(corpus.windows(2).all(|w| w[0].id < w[1].id));

    // the same rows as JSONL and under the twowiki name load identically
    let pl = write(&dir, "hotpot.jsonl", &rows, true);
    let again = load_dataset(&pl, DatasetFormat::Twowiki, None, 0).unwrap();
    assert_eq!(again.examples, ds.examples);
}

#[test]
fn musique_layout_with_aliases() {
    let dir = TempDir::new().unwrap();
    let row = json!({
        "id": "m1",
        "question": "Who?",
        "answer": "Ann",
        "answer_aliases": ["Annie"],
        "paragraphs": [
            {"idx": 0, "title": "A", "paragraph_text": "Ann lives here.", "is_supporting": true},
            {"idx": 1, "title": "B", "paragraph_text": "Bob lives there.", "is_supporting": false},
        ],
    });
    let p = write(&dir, "m.jsonl", &[row], true);
    let ds = load_dataset(&p, DatasetFormat::Musique, None, 0).unwrap();
    let e = &ds.examples[0];
    assert_eq!(e.gold_answers, ["Ann", "Annie"]);
    assert_eq!(e.supporting_doc_ids, [paragraph_id("A", "Ann lives here.")]);
    assert_eq!(e.distractor_doc_ids, [paragraph_id("B", "Bob lives there.")]);
}

#[test]
fn dpr_layout_caps_distractors() {
    let dir = TempDir::new().unwrap();
    let ctx = |kind: &str, i: usize| json!({"title": format!("{kind} {i}"), "text": format!("{kind} text {i}.")});
    let row = json!({
        "question": "where?",
        "answers": ["here", "there"],
        "positive_ctxs": [ctx("pos", 0), ctx("pos", 1)],
        "negative_ctxs": (0..4).map(|i| ctx("neg", i)).collect::<Vec<_>>(),
        "hard_negative_ctxs": (0..20).map(|i| ctx("hard", i)).collect::<Vec<_>>(),
    });
    let p = write(&dir, "nq.json", &[row], false);
    let ds = load_dataset(&p, DatasetFormat::Nq, None, 0).unwrap();
    let e = &ds.examples[0];
    assert_eq!(e.id, "nq-0");
    assert_eq!(e.gold_answers.len(), 2);
    assert_eq!(e.supporting_doc_ids.len(), 2);
    assert_eq!(e.distractor_doc_ids.len(), MAX_DPR_DISTRACTORS);
    assert_eq!(e.distractor_doc_ids[3], paragraph_id("neg 3", "neg text 3."));
    assert_eq!(e.distractor_doc_ids[4], paragraph_id("hard 0", "hard text 0."));
}

#[test]
fn layout_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let mut bad = hotpot_row("h1", "Alpha");
    bad["context"][1] = json!("not a pair");
    let p = write(&dir, "bad.json", &[hotpot_row("h0", "Beta"), bad], false);
    match load_dataset(&p, DatasetFormat::Hotpotqa, None, 0) {
        Err(EvalError::Layout { pointer, .. }) => assert_eq!(pointer, "/1/context/1"),
        other => panic!("expected a layout error, got {other:?}"),
    }
    let p = write(&dir, "dup.json", &[hotpot_row("h0", "Beta"), hotpot_row("h0", "Alpha")], false);
    assert!(matches!(
        load_dataset(&p, DatasetFormat::Hotpotqa, None, 0),
        Err(EvalError::DuplicateId(id)) if id == "h0"
    ));
}

#[test]
fn sampling() {
    let dir = TempDir::new().unwrap();
    let rows: Vec<Value> = (0..10).map(|i| hotpot_row(&format!("h{i}"), "Alpha")).collect();
    let p = write(&dir, "h.json", &rows, false);
    assert!(load_dataset(&p, DatasetFormat::Hotpotqa, Some(0), 1).unwrap().examples.is_empty());
    let a = load_dataset(&p, DatasetFormat::Hotpotqa, Some(4), 9).unwrap();
    let b = load_dataset(&p, DatasetFormat::Hotpotqa, Some(4), 9).unwrap();
    assert_eq!(a.examples, b.examples);
    assert_eq!(a.len(), 4);
    let all = load_dataset(&p, DatasetFormat::Hotpotqa, Some(50), 9).unwrap();
    assert_eq!(all.len(), 10);
}
