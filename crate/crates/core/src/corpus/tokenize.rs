use std::sync::OnceLock;

use regex::Regex;

fn token_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    // Placeholders first so `<email>` stays one token; then word runs; then
    // any other single non-space character.
    RE.get_or_init(|| Regex::new(r"<[\w:]+>|\w+|[^\w\s]").expect("valid token regex"))
}

/// Word-level split: whitespace separates words, each punctuation mark is
/// its own token, and `<...>` placeholders are kept whole.
pub fn tokenize(text: &str) -> Vec<String> {
    token_regex()
        .find_iter(text)
        .map(|m| m.as_str().to_owned())
        .collect()
}
