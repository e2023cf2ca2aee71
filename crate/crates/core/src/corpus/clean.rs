use std::collections::HashSet;

use super::Corpus;

/// Keep only posts with at least `min` comments, preserving order.
pub fn filter_min_comments(corpus: &Corpus, min: u32) -> Corpus {
    corpus.with_records(
        corpus
            .records
            .iter()
            .filter(|r| r.comment_count >= min)
            .cloned()
            .collect(),
    )
}

/// Lowercase, trim, drop stoplisted and repeated tags. First occurrence order is kept.
pub fn clean_tag_list(tags: &[String], stoplist: &HashSet<String>) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(tags.len());
    for tag in tags {
        let tag = tag.trim().to_lowercase();
        if tag.is_empty() || stoplist.contains(&tag) {
            continue;
        }
        if seen.insert(tag.clone()) {
            out.push(tag);
        }
    }
    out
}

pub fn clean_tags(corpus: &Corpus, stoplist: &[String]) -> Corpus {
    let stoplist: HashSet<String> = stoplist.iter().map(|s| s.trim().to_lowercase()).collect();
    corpus.with_records(
        corpus
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.tags = clean_tag_list(&r.tags, &stoplist);
                r
            })
            .collect(),
    )
}
