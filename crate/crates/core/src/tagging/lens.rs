//! Cleanup of web-match context snippets ("Title -- Description").

use std::sync::LazyLock;

use regex::Regex;

fn re(pattern: &str) -> Regex {
    Regex::new(pattern).expect("static regex")
}

// A URL together with a call-to-action lead-in such as "Check out" or "Visit".
static URL: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)(?:\b(?:check(?:\s+it)?(?:\s+out)?|see|visit|click|watch|read\s+more|more)\s*(?:at|on|here)?\s*:?\s*)?(?:https?://|www\.)\S+")
});
static USER_HANDLE: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)(?:^|\b)/?u/[A-Za-z0-9_-]+"));
static SUBREDDIT_PREFIX: LazyLock<Regex> = LazyLock::new(|| re(r"(?i)(?:^|\b)/?r/([A-Za-z0-9_]+)"));
static EMOJI: LazyLock<Regex> = LazyLock::new(|| {
    re(r"[\x{1F000}-\x{1FAFF}\x{2600}-\x{27BF}\x{2300}-\x{23FF}\x{2B00}-\x{2BFF}\x{1F1E6}-\x{1F1FF}\x{FE00}-\x{FE0F}\x{200D}\x{20E3}\x{E0020}-\x{E007F}]+")
});
static METRIC: LazyLock<Regex> = LazyLock::new(|| {
    re(r"(?i)\b\d+(?:[.,]\d+)*\s*[kmb]?\+?\s+(?:likes?|views?|comments?|shares?|followers?|upvotes?|points?|reactions?|retweets?|reposts?|subscribers?)\b")
});
static MENTION: LazyLock<Regex> = LazyLock::new(|| re(r"@[\w.]+"));
static NON_LATIN: LazyLock<Regex> = LazyLock::new(|| re(r"[^\p{Latin}\p{Common}\p{Inherited}]+"));
static SPACES: LazyLock<Regex> = LazyLock::new(|| re(r"\s+"));

fn pass(text: &str) -> String {
    let s = text.trim();
    let s = URL.replace_all(s, " ");
    let s = USER_HANDLE.replace_all(&s, " ");
    let s = SUBREDDIT_PREFIX.replace_all(&s, "$1");
    let s = EMOJI.replace_all(&s, " ");
    let s = METRIC.replace_all(&s, " ");
    let s = MENTION.replace_all(&s, " ");
    let s = NON_LATIN.replace_all(&s, " ");
    SPACES.replace_all(&s, " ").trim().to_string()
}

/// Strip URLs, platform prefixes, emojis, engagement counts, @mentions and non-Latin
/// script runs, then collapse whitespace. Repeated until nothing changes, which makes
/// the function idempotent even when a removal exposes a new match.
pub fn clean_lens_context(raw: &str) -> String {
    let mut current = pass(raw);
    loop {
        let next = pass(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}
