//! Document collection: JSONL ingestion, the immutable document store, and
//! rule-based sentence segmentation.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text::tokenize;

/// File name of the persisted store inside an index directory.
pub const STORE_FILE: &str = "documents.jsonl";

/// Tokens ending in '.' that never close a sentence.
pub const ABBREVIATIONS: [&str; 8] = ["Mr.", "Mrs.", "Dr.", "St.", "Jr.", "U.S.", "e.g.", "i.e."];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed record at line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate document id {id:?} at line {second_line} (first seen at line {first_line})")]
    DuplicateId {
        id: String,
        first_line: usize,
        second_line: usize,
    },
    #[error("unknown document id {0:?}")]
    UnknownDocument(String),
}

impl CorpusError {
    fn io(path: &Path, source: std::io::Error) -> Self {
        CorpusError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "text")]
    pub body: String,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, body: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            body: body.into(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("document id is empty".into());
        }
        if self.body.is_empty() && self.title.is_empty() {
            return Err(format!("document {:?} has neither title nor body", self.id));
        }
        Ok(())
    }
}

/// Byte offsets `[begin, end)` into [`Document::body`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub span: Span,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub document_count: usize,
    pub sentence_count: usize,
    pub token_count: usize,
}

/// Segments a document body into sentences.
///
/// Splits after '.', '!' or '?' when followed by whitespace or end of text,
/// and at every newline. A terminal '.' closing one of [`ABBREVIATIONS`] does
/// not split. Spans cover the trimmed sentence text.
pub fn segment_sentences(doc: &Document) -> Vec<Sentence> {
    let body = doc.body.as_str();
    let mut out = Vec::new();
    let mut start = 0usize;
    let mut chars = body.char_indices().peekable();

    let emit = |begin: usize, end: usize, out: &mut Vec<Sentence>| {
        let raw = &body[begin..end];
        let trimmed = raw.trim();
        if trimmed.is_empty() {
            return;
        }
        let lead = raw.len() - raw.trim_start().len();
        let b = begin + lead;
        out.push(Sentence {
            doc_id: doc.id.clone(),
            index: out.len(),
            text: trimmed.to_owned(),
            span: Span {
                begin: b,
                end: b + trimmed.len(),
            },
        });
    };

    while let Some((i, c)) = chars.next() {
        match c {
            '\n' => {
                emit(start, i, &mut out);
                start = i + 1;
            }
            '.' | '!' | '?' => {
                let at_boundary = chars.peek().is_none_or(|(_, n)| n.is_whitespace());
                let end = i + c.len_utf8();
                if at_boundary && !(c == '.' && ends_with_abbreviation(&body[start..end])) {
                    emit(start, end, &mut out);
                    start = end;
                }
            }
            _ => {}
        }
    }
    emit(start, body.len(), &mut out);
    out
}

fn ends_with_abbreviation(segment: &str) -> bool {
    let last = segment
        .rsplit(char::is_whitespace)
        .next()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric());
    ABBREVIATIONS.contains(&last)
}

/// Immutable, id-indexed document collection with precomputed segmentation.
#[derive(Debug, Clone, Default)]
pub struct DocumentStore {
    docs: Vec<Document>,
    sentences: Vec<Vec<Sentence>>,
    by_id: HashMap<String, usize>,
    // source line of each document, for duplicate-id reports
    lines: Vec<usize>,
}

impl DocumentStore {
    /// Builds a store, rejecting invalid documents and duplicate ids.
    /// Line numbers in errors are 1-based positions in `docs`.
    pub fn from_documents(docs: Vec<Document>) -> Result<Self, CorpusError> {
        let mut store = DocumentStore::default();
        for (i, doc) in docs.into_iter().enumerate() {
            store.push(doc, i + 1)?;
        }
        Ok(store)
    }

    fn push(&mut self, doc: Document, line: usize) -> Result<(), CorpusError> {
        doc.validate()
            .map_err(|message| CorpusError::Malformed { line, message })?;
        if let Some(&first) = self.by_id.get(&doc.id) {
            return Err(CorpusError::DuplicateId {
                id: doc.id,
                first_line: self.lines[first],
                second_line: line,
            });
        }
        self.by_id.insert(doc.id.clone(), self.docs.len());
        self.lines.push(line);
        self.sentences.push(segment_sentences(&doc));
        self.docs.push(doc);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn documents(&self) -> &[Document] {
        &self.docs
    }

    pub fn get(&self, id: &str) -> Option<&Document> {
        self.by_id.get(id).map(|&i| &self.docs[i])
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }

    pub fn sentences(&self, id: &str) -> Option<&[Sentence]> {
        self.by_id.get(id).map(|&i| self.sentences[i].as_slice())
    }

    pub fn sentence(&self, id: &str, index: usize) -> Option<&Sentence> {
        self.sentences(id).and_then(|s| s.get(index))
    }

    pub fn stats(&self) -> CorpusStats {
        CorpusStats {
            document_count: self.docs.len(),
            sentence_count: self.sentences.iter().map(Vec::len).sum(),
            token_count: self
                .docs
                .iter()
                .map(|d| tokenize(&d.title).len() + tokenize(&d.body).len())
                .sum(),
        }
    }

    /// Writes the store as corpus JSONL. Output is byte-stable for a given store.
    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        fs::create_dir_all(dir).map_err(|e| CorpusError::io(dir, e))?;
        let path = dir.join(STORE_FILE);
        let mut file = fs::File::create(&path).map_err(|e| CorpusError::io(&path, e))?;
        for doc in &self.docs {
            let line = serde_json::to_string(doc).expect("document serializes");
            writeln!(file, "{line}").map_err(|e| CorpusError::io(&path, e))?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        Ok(ingest_corpus(&dir.join(STORE_FILE))?.0)
    }
}

/// Reads a corpus JSONL file (`id`, `title`, `text` per line).
///
/// Blank lines are skipped. Returns the store and its statistics.
pub fn ingest_corpus(source: &Path) -> Result<(DocumentStore, CorpusStats), CorpusError> {
    let file = fs::File::open(source).map_err(|e| CorpusError::io(source, e))?;
    let mut store = DocumentStore::default();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| CorpusError::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Document = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            message: e.to_string(),
        })?;
        store.push(doc, line_no)?;
    }
    let stats = store.stats();
    Ok((store, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    const RADIO_CITY: &str = "Radio City is India's first private FM radio station and was started on 3 July 2001. It plays Hindi, English and regional songs.";

    fn texts(body: &str) -> Vec<String> {
        segment_sentences(&Document::new("d", "t", body))
            .into_iter()
            .map(|s| s.text)
            .collect()
    }

    #[test]
    fn empty_body_has_no_sentences() {
        assert!(texts("").is_empty());
    }

    #[test]
    fn radio_city_splits_in_two() {
        let sents = segment_sentences(&Document::new("rc", "Radio City", RADIO_CITY));
        assert_eq!(sents.len(), 2);
        assert_eq!(sents[0].index, 0);
        assert_eq!(sents[1].index, 1);
        assert!(sents[1].text.starts_with("It plays Hindi"));
    }

    #[test]
    fn abbreviations_suppress_splits() {
        assert_eq!(texts("Dr. Smith arrived. He left."), ["Dr. Smith arrived.", "He left."]);
        assert_eq!(texts("Born in the U.S. in 1950. Moved."), ["Born in the U.S. in 1950.", "Moved."]);
        assert_eq!(texts("Fruit (e.g. apples) is good."), ["Fruit (e.g. apples) is good."]);
    }

    #[test]
    fn newlines_are_boundaries() {
        assert_eq!(texts("Title line\nBody text! More?"), ["Title line", "Body text!", "More?"]);
        assert_eq!(texts("Version 2.0 shipped."), ["Version 2.0 shipped."]);
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let err = DocumentStore::from_documents(vec![
            Document::new("d1", "a", "x"),
            Document::new("d2", "b", "y"),
            Document::new("d1", "c", "z"),
        ])
        .unwrap_err();
        match err {
            CorpusError::DuplicateId {
                id,
                first_line,
                second_line,
            } => {
                assert_eq!(id, "d1");
                assert_eq!((first_line, second_line), (1, 3));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_empty_id_and_empty_document() {
        assert!(DocumentStore::from_documents(vec![Document::new("", "t", "b")]).is_err());
        assert!(DocumentStore::from_documents(vec![Document::new("x", "", "")]).is_err());
        assert!(DocumentStore::from_documents(vec![Document::new("x", "Title", "")]).is_ok());
    }

    proptest::proptest! {
        #[test]
        fn spans_are_faithful_and_ordered(body in "[A-Za-z .!?\n,é]{0,120}") {
            let doc = Document::new("p", "t", body.clone());
            let sents = segment_sentences(&doc);
            let mut prev_end = 0;
            for (i, s) in sents.iter().enumerate() {
                proptest::prop_assert_eq!(s.index, i);
                proptest::prop_assert!(s.span.begin >= prev_end);
                proptest::prop_assert!(s.span.begin < s.span.end);
                proptest::prop_assert_eq!(body[s.span.begin..s.span.end].trim(), s.text.as_str());
                prev_end = s.span.end;
            }
        }

        #[test]
        fn segmentation_is_idempotent(body in "[A-Za-z .!?\n]{0,120}") {
            let first = texts(&body);
            let rejoined = first.join("\n");
            proptest::prop_assert_eq!(texts(&rejoined), first);
        }
    }
}
