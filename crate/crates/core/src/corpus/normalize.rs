//! Text normalization: lowercasing, placeholder substitution for
//! identifiers that would otherwise flood the vocabulary, and whitespace
//! collapsing.

use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};

use super::record::ReviewRecord;
use super::tokens;
use crate::error::{Error, Result};

/// Trailing sentence punctuation is left outside the URL.
pub const DEFAULT_URL_PATTERN: &str = r#"(?i)\b(?:https?://|www\.)[^\s<>"]*[^\s<>".,;:!?)\]'"]"#;
pub const DEFAULT_EMAIL_PATTERN: &str = r"(?i)[\w.+-]+@[\w-]+(?:\.[\w-]+)+";
pub const DEFAULT_USER_PATTERN: &str = r"@\w+";

/// A regular expression and the placeholder token that replaces its
/// matches.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "RuleSpec", into = "RuleSpec")]
pub struct PlaceholderRule {
    regex: Regex,
    token: String,
}

#[derive(Serialize, Deserialize)]
struct RuleSpec {
    pattern: String,
    token: String,
}

impl TryFrom<RuleSpec> for PlaceholderRule {
    type Error = Error;

    fn try_from(spec: RuleSpec) -> Result<Self> {
        PlaceholderRule::new(&spec.pattern, spec.token)
    }
}

impl From<PlaceholderRule> for RuleSpec {
    fn from(rule: PlaceholderRule) -> Self {
        RuleSpec {
            pattern: rule.regex.as_str().to_owned(),
            token: rule.token,
        }
    }
}

impl PartialEq for PlaceholderRule {
    fn eq(&self, other: &Self) -> bool {
        self.regex.as_str() == other.regex.as_str() && self.token == other.token
    }
}

impl PlaceholderRule {
    pub fn new(pattern: &str, token: impl Into<String>) -> Result<Self> {
        let regex = Regex::new(pattern)
            .map_err(|e| Error::Config(format!("bad placeholder pattern {pattern:?}: {e}")))?;
        Ok(Self {
            regex,
            token: token.into(),
        })
    }

    pub fn pattern(&self) -> &str {
        self.regex.as_str()
    }

    pub fn token(&self) -> &str {
        &self.token
    }

    pub fn is_match(&self, text: &str) -> bool {
        self.regex.is_match(text)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessConfig {
    /// Applied in order, after lowercasing.
    pub placeholder_rules: Vec<PlaceholderRule>,
    pub lowercase: bool,
    pub ad_ngram_n: usize,
    pub ad_flag_threshold: f64,
    pub max_review_tokens: usize,
    pub max_response_tokens: usize,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            placeholder_rules: default_rules(),
            lowercase: true,
            ad_ngram_n: 5,
            ad_flag_threshold: 0.005,
            max_review_tokens: 100,
            max_response_tokens: 120,
        }
    }
}

/// URL, then email, then `@handle` user ids. App names are matched per
/// record from the record's own `app_name`; add a rule for patterns that
/// should apply corpus-wide.
pub fn default_rules() -> Vec<PlaceholderRule> {
    vec![
        PlaceholderRule::new(DEFAULT_URL_PATTERN, tokens::URL).expect("valid default"),
        PlaceholderRule::new(DEFAULT_EMAIL_PATTERN, tokens::EMAIL).expect("valid default"),
        PlaceholderRule::new(DEFAULT_USER_PATTERN, tokens::USER_NAME).expect("valid default"),
    ]
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ad_ngram_n == 0 {
            return Err(Error::Config("ad_ngram_n must be at least 1".into()));
        }
        if !(self.ad_flag_threshold > 0.0 && self.ad_flag_threshold <= 1.0) {
            return Err(Error::Config(format!(
                "ad_flag_threshold {} must lie in (0, 1]",
                self.ad_flag_threshold
            )));
        }
        if self.max_review_tokens == 0 || self.max_response_tokens == 0 {
            return Err(Error::Config("token limits must be positive".into()));
        }
        Ok(())
    }
}

/// Lowercase (optionally), substitute placeholders, collapse whitespace.
/// Total and idempotent.
pub fn normalize_text(text: &str, config: &PreprocessConfig) -> String {
    let mut out = if config.lowercase {
        text.to_lowercase()
    } else {
        text.to_owned()
    };
    for rule in &config.placeholder_rules {
        if rule.regex.is_match(&out) {
            out = rule.regex.replace_all(&out, rule.token.as_str()).into_owned();
        }
    }
    collapse_whitespace(&out)
}

/// Normalize both texts of a record, then replace the record's own app
/// name with the app-name placeholder. Rules run first so an app name
/// inside a URL or email address does not break those placeholders.
pub fn normalize_record(record: &ReviewRecord, config: &PreprocessConfig) -> ReviewRecord {
    let app = app_name_regex(&record.app_name);
    let apply = |text: &str| {
        let text = normalize_text(text, config);
        match &app {
            Some(re) => replace_outside_placeholders(re, &text, tokens::APP_NAME),
            None => text,
        }
    };
    ReviewRecord {
        app_name: record.app_name.clone(),
        category: record.category.clone(),
        rating: record.rating,
        review_text: apply(&record.review_text),
        response_text: apply(&record.response_text),
    }
}

fn app_name_regex(app_name: &str) -> Option<Regex> {
    let name = app_name.trim();
    if name.chars().filter(|c| c.is_alphanumeric()).count() < 2 {
        return None;
    }
    let escaped: Vec<String> = name.split_whitespace().map(regex::escape).collect();
    let pattern = format!(r"(?:^|\b){}(?:\b|$)", escaped.join(r"\s+"));
    RegexBuilder::new(&pattern).case_insensitive(true).build().ok()
}

/// Like `replace_all`, but leaves matches that sit inside `<...>`.
fn replace_outside_placeholders(re: &Regex, text: &str, token: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut last = 0;
    for m in re.find_iter(text) {
        let inside = text[..m.start()].ends_with('<') || text[m.end()..].starts_with('>');
        if inside {
            continue;
        }
        out.push_str(&text[last..m.start()]);
        out.push_str(token);
        last = m.end();
    }
    out.push_str(&text[last..]);
    out
}

fn collapse_whitespace(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn email_is_replaced() {
        let config = PreprocessConfig::default();
        assert_eq!(
            normalize_text("contact us at foo@bar.com", &config),
            "contact us at <email>"
        );
    }

    #[test]
    fn empty_input() {
        assert_eq!(normalize_text("", &PreprocessConfig::default()), "");
    }

    #[test]
    fn urls_and_handles() {
        let config = PreprocessConfig::default();
        assert_eq!(
            normalize_text("See HTTPS://Example.com/faq or ask @support_team  now", &config),
            "see <url> or ask <user_name> now"
        );
        assert_eq!(normalize_text("visit www.foo.org", &config), "visit <url>");
        assert_eq!(normalize_text("see www.foo.org/a_b. ok?", &config), "see <url>. ok?");
    }

    #[test]
    fn lowercase_can_be_disabled() {
        let config = PreprocessConfig {
            lowercase: false,
            ..PreprocessConfig::default()
        };
        assert_eq!(normalize_text("Mail A@B.io", &config), "Mail <email>");
    }

    #[test]
    fn record_app_name_is_replaced() {
        let record = ReviewRecord::new(
            "Super Cleaner",
            "TOOLS",
            4,
            "super cleaner froze my phone",
            "Thanks for using Super Cleaner!",
        );
        let out = normalize_record(&record, &PreprocessConfig::default());
        assert_eq!(out.review_text, "<app_name> froze my phone");
        assert_eq!(out.response_text, "thanks for using <app_name>!");
    }

    #[test]
    fn app_name_inside_email_or_placeholder_is_left_alone() {
        let config = PreprocessConfig::default();
        let r = ReviewRecord::new("QuickNotes", "TOOLS", 1, "quicknotes lost data", "mail help@quicknotes.com");
        let out = normalize_record(&r, &config);
        assert_eq!(out.review_text, "<app_name> lost data");
        assert_eq!(out.response_text, "mail <email>");
        let r = ReviewRecord::new("Email", "TOOLS", 1, "email app, write to a@b.io", "ok");
        assert_eq!(normalize_record(&r, &config).review_text, "<app_name> app, write to <email>");
    }

    #[test]
    fn validation() {
        let mut config = PreprocessConfig::default();
        assert!(config.validate().is_ok());
        config.ad_flag_threshold = 0.0;
        assert!(config.validate().is_err());
        config.ad_flag_threshold = 0.5;
        config.ad_ngram_n = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn config_serializes_patterns() {
        let config = PreprocessConfig::default();
        let json = serde_json::to_string(&config).unwrap();
        let back: PreprocessConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back, config);
    }
}
