//! Versioned prompt assets.

use sha2::{Digest, Sha256};

use crate::text::{render_template, NORMALIZATION_VERSION};

pub const NER_TEMPLATE: &str = include_str!("../assets/prompts/ner.v1.txt");
pub const TRIPLE_TEMPLATE: &str = include_str!("../assets/prompts/triples.v1.txt");
pub const INTEGRATION_INSTRUCTION: &str = include_str!("../assets/prompts/integration.v1.txt");
pub const READER_TRIPLE_TEMPLATE: &str = include_str!("../assets/prompts/reader_triple.v1.txt");
pub const READER_SENTENCE_TEMPLATE: &str = include_str!("../assets/prompts/reader_sentence.v1.txt");
pub const READER_PASSAGE_TEMPLATE: &str = include_str!("../assets/prompts/reader_passage.v1.txt");

/// Identifier of the integration instruction, recorded in trajectories.
pub const INTEGRATION_INSTRUCTION_ID: &str = "integration.v1";

/// Sentence removed from the passage reader to force an answer.
pub const REFUSAL_CLAUSE: &str = "If the provided information cannot answer the question, output Unanswerable. ";

pub fn ner_prompt(document_text: &str) -> String {
    render_template(NER_TEMPLATE, &[("{document text}", document_text)])
}

pub fn triple_prompt(title: &str, text: &str, entity_list: &str) -> String {
    render_template(
        TRIPLE_TEMPLATE,
        &[
            ("{document title}", title),
            ("{document text}", text),
            ("{entity list}", entity_list),
        ],
    )
}

/// The integration instruction without its trailing newline.
pub fn integration_instruction() -> &'static str {
    INTEGRATION_INSTRUCTION.trim_end()
}

/// Passage reader with the refusal option removed.
pub fn forced_reader_template() -> String {
    READER_PASSAGE_TEMPLATE.replacen(REFUSAL_CLAUSE, "", 1)
}

/// Hash of everything that determines extraction output for a fixed model.
pub fn extraction_fingerprint() -> String {
    let mut h = Sha256::new();
    h.update(NER_TEMPLATE.as_bytes());
    h.update([0u8]);
    h.update(TRIPLE_TEMPLATE.as_bytes());
    h.update([0u8]);
    h.update(NORMALIZATION_VERSION.as_bytes());
    hex::encode(&h.finalize()[..8])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ner_template_carries_exemplar() {
        let p = ner_prompt("Some passage.");
        assert!(p.starts_with("Instruction: Your task is to extract named entities from the given paragraph."));
        assert!(p.contains(r#"["Radio City", "India", "3 July 2001", "Hindi", "English", "May 2008", "PlanetRadiocity.com"]"#));
        assert!(p.contains("Passage: Some passage.\n"));
        assert!(p.trim_end().ends_with("Entity lists:"));
    }

    #[test]
    fn triple_template_slots() {
        let p = triple_prompt("T", "Body", "{\"named entities\": [\"A\"]}");
        assert!(p.contains("Title: T\n\nText: Body\n\nEntity lists: {\"named entities\": [\"A\"]}"));
        assert!(p.contains(r#"["Radio City", "started on", "3 July 2001"],"#));
        assert_eq!(p.matches("\n        [\"").count(), 12);
    }

    #[test]
    fn forced_variant_drops_only_refusal() {
        let forced = forced_reader_template();
        assert!(!forced.contains("Unanswerable"));
        assert_eq!(forced.len() + REFUSAL_CLAUSE.len(), READER_PASSAGE_TEMPLATE.len());
        for t in [READER_TRIPLE_TEMPLATE, READER_SENTENCE_TEMPLATE, READER_PASSAGE_TEMPLATE] {
            assert!(t.contains(REFUSAL_CLAUSE));
            assert!(t.contains("{context}") && t.contains("{query}"));
        }
    }

    #[test]
    fn integration_instruction_grammar() {
        let i = integration_instruction();
        assert!(i.contains("[[ ## fact_before_filter ## ]]"));
        assert!(i.contains("{ \"fact\": [] }"));
        assert!(i.contains("output <no question> as the end"));
    }

    #[test]
    fn fingerprint_is_stable() {
        assert_eq!(extraction_fingerprint(), extraction_fingerprint());
        assert_eq!(extraction_fingerprint().len(), 16);
    }
}
