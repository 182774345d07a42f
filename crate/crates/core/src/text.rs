//! Canonical text forms shared by the linker, the scorers and the pipeline.

use crate::encoders::ENTITY_TOKEN;

/// Lowercases, strips non-alphanumeric characters from both ends of every
/// whitespace-separated word, drops words left empty and joins the rest
/// with single spaces. The `<e>` placeholder is kept verbatim.
pub fn normalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        let lowered = word.to_lowercase();
        let w = if lowered == ENTITY_TOKEN {
            lowered.as_str()
        } else {
            lowered.trim_matches(|c: char| !c.is_alphanumeric())
        };
        if w.is_empty() {
            continue;
        }
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(w);
    }
    out
}

/// Words of the normalized form of `text`.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize(text).split(' ').filter(|w| !w.is_empty()).map(str::to_string).collect()
}

/// Words of a relation name: split on `_` and `.`, lowercased.
pub fn relation_words(name: &str) -> Vec<String> {
    name.split(['_', '.'])
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}
