//! Deterministic text normalization.
//!
//! `normalize_text` applies, in order: Unicode NFKC normalization, URL
//! replacement, emoji replacement, curly-quote straightening, whitespace-run
//! collapse, and trimming. The function is pure and idempotent, and Bengali
//! letters (U+0980..U+09FF) pass through unchanged.

use unicode_normalization::UnicodeNormalization;

/// Replacement tokens and toggles for [`normalize_text`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizerConfig {
    pub url_token: String,
    pub emoji_token: String,
    pub collapse_whitespace: bool,
    pub normalize_quotes: bool,
}

impl Default for NormalizerConfig {
    fn default() -> Self {
        NormalizerConfig {
            url_token: "<URL>".to_string(),
            emoji_token: "<EMO>".to_string(),
            collapse_whitespace: true,
            normalize_quotes: true,
        }
    }
}

impl NormalizerConfig {
    /// Replacement tokens must not contain whitespace.
    pub fn validate(&self) -> crate::Result<()> {
        for (name, token) in [("url_token", &self.url_token), ("emoji_token", &self.emoji_token)] {
            if token.chars().any(char::is_whitespace) {
                return Err(crate::Error::Config {
                    msg: format!("{name} {token:?} contains whitespace"),
                });
            }
        }
        Ok(())
    }
}

/// URL prefixes recognized at word starts, matched up to the next whitespace.
const URL_PREFIXES: [&str; 4] = ["http://", "https://", "ftp://", "www."];

/// Emoji codepoint ranges: emoticons, symbols & pictographs, transport,
/// supplemental symbols, and regional-indicator flags.
const EMOJI_RANGES: [(u32, u32); 5] = [
    (0x1F600, 0x1F64F),
    (0x1F300, 0x1F5FF),
    (0x1F680, 0x1F6FF),
    (0x1F900, 0x1F9FF),
    (0x1F1E6, 0x1F1FF),
];

fn is_emoji(c: char) -> bool {
    let cp = c as u32;
    EMOJI_RANGES.iter().any(|&(lo, hi)| (lo..=hi).contains(&cp))
}

/// Normalize one text per the configured pipeline.
pub fn normalize_text(raw: &str, cfg: &NormalizerConfig) -> String {
    let text: String = raw.nfkc().collect();
    let text = replace_urls(&text, &cfg.url_token);

    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if is_emoji(c) {
            out.push_str(&cfg.emoji_token);
        } else if cfg.normalize_quotes && matches!(c, '\u{2018}' | '\u{2019}') {
            out.push('\'');
        } else if cfg.normalize_quotes && matches!(c, '\u{201C}' | '\u{201D}') {
            out.push('"');
        } else {
            out.push(c);
        }
    }

    if cfg.collapse_whitespace {
        let mut collapsed = String::with_capacity(out.len());
        let mut in_space = false;
        for c in out.chars() {
            if c.is_whitespace() {
                if !in_space {
                    collapsed.push(' ');
                }
                in_space = true;
            } else {
                collapsed.push(c);
                in_space = false;
            }
        }
        collapsed.trim().to_string()
    } else {
        out
    }
}

fn replace_urls(text: &str, token: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    let mut at_word_start = true;
    while !rest.is_empty() {
        if at_word_start && URL_PREFIXES.iter().any(|p| rest.starts_with(p)) {
            let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
            out.push_str(token);
            rest = &rest[end..];
            at_word_start = false;
            continue;
        }
        let c = rest.chars().next().unwrap();
        out.push(c);
        at_word_start = c.is_whitespace();
        rest = &rest[c.len_utf8()..];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn norm(s: &str) -> String {
        normalize_text(s, &NormalizerConfig::default())
    }

    #[test]
    fn collapses_whitespace_runs() {
        assert_eq!(norm("good   food "), "good food");
        assert_eq!(norm("\ta\n\nb  c\u{00A0}d"), "a b c d");
    }

    #[test]
    fn replaces_urls() {
        assert_eq!(norm("see https://x.yz/a now"), "see <URL> now");
        assert_eq!(norm("http://a.b"), "<URL>");
        assert_eq!(norm("go to www.site.com please"), "go to <URL> please");
        // mid-word prefix is not a word start
        assert_eq!(norm("nothttp://x"), "nothttp://x");
    }

    #[test]
    fn replaces_emoji() {
        assert_eq!(norm("nice \u{1F600} food"), "nice <EMO> food");
        assert_eq!(norm("go \u{1F680}\u{1F680}"), "go <EMO><EMO>");
        assert_eq!(norm("flag \u{1F1E7}\u{1F1E9}"), "flag <EMO><EMO>");
    }

    #[test]
    fn straightens_quotes() {
        assert_eq!(norm("\u{201C}ok\u{201D}"), "\"ok\"");
        assert_eq!(norm("it\u{2019}s \u{2018}x\u{2019}"), "it's 'x'");
    }

    #[test]
    fn bengali_passes_through() {
        let s = "\u{0996}\u{09BE}\u{09AC}\u{09BE}\u{09B0} \u{09AD}\u{09BE}\u{09B2}\u{09CB}";
        assert_eq!(norm(s), s);
    }

    #[test]
    fn config_rejects_whitespace_tokens() {
        let cfg = NormalizerConfig {
            url_token: "<U RL>".into(),
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn empty_and_space_only_inputs() {
        assert_eq!(norm(""), "");
        assert_eq!(norm("   \t\n"), "");
    }

    proptest! {
        #[test]
        fn idempotent_on_arbitrary_strings(s in "\\PC{0,80}") {
            let once = norm(&s);
            prop_assert_eq!(norm(&once), once);
        }

        #[test]
        fn never_two_consecutive_whitespace(s in "\\PC{0,80}") {
            let out = norm(&s);
            let chars: Vec<char> = out.chars().collect();
            prop_assert!(!chars.windows(2).any(|w| w[0].is_whitespace() && w[1].is_whitespace()));
        }
    }
}
