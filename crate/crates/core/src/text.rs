//! Text normalization shared by extraction, retrieval and provenance matching.

/// Version tag of [`normalize_text`]; part of the triple-cache fingerprint.
pub const NORMALIZATION_VERSION: &str = "ascii-alnum-v1";

/// Canonical form used for triple fields, serialization and token overlap.
///
/// Lowercases, maps every codepoint that is not an ASCII letter or digit to a
/// space, collapses whitespace runs and trims. Non-ASCII letters are treated as
/// separators, so "Bråk" becomes "br k".
pub fn normalize_text(t: &str) -> String {
    let mut out = String::with_capacity(t.len());
    let mut pending_space = false;
    for ch in t.chars().flat_map(char::to_lowercase) {
        if ch.is_ascii_alphanumeric() {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(ch);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Lowercased, punctuation-stripped tokens.
pub fn tokenize(t: &str) -> Vec<String> {
    normalize_text(t)
        .split(' ')
        .filter(|s| !s.is_empty())
        .map(str::to_owned)
        .collect()
}

/// Single-pass placeholder substitution.
///
/// Substituted values are never rescanned, so a document containing a
/// placeholder-looking string cannot inject into later slots.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    loop {
        let next = slots
            .iter()
            .filter_map(|(key, value)| rest.find(key).map(|pos| (pos, *key, *value)))
            .min_by_key(|(pos, key, _)| (*pos, std::cmp::Reverse(key.len())));
        match next {
            Some((pos, key, value)) => {
                out.push_str(&rest[..pos]);
                out.push_str(value);
                rest = &rest[pos + key.len()..];
            }
            None => {
                out.push_str(rest);
                return out;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalizes_case_study_strings() {
        assert_eq!(normalize_text("Aldri annet enn Bråk"), "aldri annet enn br k");
        assert_eq!(normalize_text("God's Gift To Women"), "god s gift to women");
        assert_eq!(normalize_text("God'S Gift To Women"), "god s gift to women");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("  ,;  "), "");
        assert_eq!(normalize_text("December 24, 1886"), "december 24 1886");
    }

    #[test]
    fn tokenize_drops_punctuation() {
        assert_eq!(tokenize("Erik Hort's birthplace?"), ["erik", "hort", "s", "birthplace"]);
        assert!(tokenize("?!").is_empty());
    }

    #[test]
    fn template_values_are_not_rescanned() {
        let out = render_template("T: {a} / {b}", &[("{a}", "{b}"), ("{b}", "x")]);
        assert_eq!(out, "T: {b} / x");
    }

    proptest::proptest! {
        #[test]
        fn normalize_is_idempotent(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            proptest::prop_assert_eq!(normalize_text(&once), once);
        }
    }
}
