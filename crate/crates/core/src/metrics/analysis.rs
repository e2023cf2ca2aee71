//! Corpus analyses: top tags per class, tag co-occurrence and word frequencies.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::text::tokenize;
use crate::corpus::{Corpus, PostRecord};

/// Light lemmatization: lowercase, trim and strip English plural endings word by word.
pub fn lemmatize(tag: &str) -> String {
    tag.trim()
        .to_lowercase()
        .split_whitespace()
        .map(singular)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Words whose final "s" is not a plural marker.
const KEEP_S: &[&str] = &["isis", "this", "texas", "tennis", "penis", "always", "perhaps", "christmas", "atlas"];

fn singular(word: &str) -> String {
    let n = word.chars().count();
    if n <= 3 || !word.is_ascii() {
        return word.to_string();
    }
    if let Some(stem) = word.strip_suffix("ies") {
        if n > 4 {
            return format!("{stem}y");
        }
    }
    for suffix in ["sses", "shes", "ches", "xes", "zes"] {
        if word.ends_with(suffix) {
            return word[..word.len() - 2].to_string();
        }
    }
    if word.ends_with("ss") || word.ends_with("us") || word.ends_with("sis") || KEEP_S.contains(&word) {
        return word.to_string();
    }
    match word.strip_suffix('s') {
        Some(stem) => stem.to_string(),
        None => word.to_string(),
    }
}

/// True when the post's stage I or stage II label equals `class`.
pub fn has_class(post: &PostRecord, class: &str) -> bool {
    post.stage1_label.is_some_and(|l| l.as_str() == class)
        || post.stage2_label.is_some_and(|l| l.as_str() == class)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ranked {
    pub item: String,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagPair {
    pub a: String,
    pub b: String,
    pub count: usize,
}

fn ranked(counts: BTreeMap<String, usize>, n: usize) -> Vec<Ranked> {
    let mut v: Vec<Ranked> = counts.into_iter().map(|(item, count)| Ranked { item, count }).collect();
    // BTreeMap order already breaks ties alphabetically; the sort is stable.
    v.sort_by_key(|x| std::cmp::Reverse(x.count));
    v.truncate(n);
    v
}

/// Most frequent tags, optionally restricted to posts of one class.
pub fn top_tags(corpus: &Corpus, class: Option<&str>, n: usize) -> Vec<Ranked> {
    let mut counts = BTreeMap::new();
    for p in corpus.records.iter().filter(|p| class.is_none_or(|c| has_class(p, c))) {
        for t in p.tags.iter().collect::<BTreeSet<_>>() {
            *counts.entry(t.clone()).or_insert(0) += 1;
        }
    }
    ranked(counts, n)
}

/// Tag pairs co-occurring within posts (after lemmatization), ranked by count then
/// alphabetically; pairs below `min_count` are dropped.
pub fn cooccurrence(corpus: &Corpus, class: Option<&str>, min_count: usize) -> Vec<TagPair> {
    let mut counts: BTreeMap<(String, String), usize> = BTreeMap::new();
    for p in corpus.records.iter().filter(|p| class.is_none_or(|c| has_class(p, c))) {
        let lemmas: Vec<String> = p
            .tags
            .iter()
            .map(|t| lemmatize(t))
            .filter(|t| !t.is_empty())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        for i in 0..lemmas.len() {
            for j in i + 1..lemmas.len() {
                *counts.entry((lemmas[i].clone(), lemmas[j].clone())).or_insert(0) += 1;
            }
        }
    }
    let mut pairs: Vec<TagPair> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count)
        .map(|((a, b), count)| TagPair { a, b, count })
        .collect();
    pairs.sort_by_key(|x| std::cmp::Reverse(x.count));
    pairs
}

const STOPWORDS: &[&str] = &[
    "a", "about", "after", "all", "also", "am", "an", "and", "any", "are", "as", "at", "be", "been",
    "but", "by", "can", "could", "did", "do", "does", "for", "from", "get", "got", "had", "has",
    "have", "he", "her", "him", "his", "how", "i", "if", "in", "into", "is", "it", "its", "just",
    "like", "me", "my", "no", "not", "of", "on", "one", "or", "our", "out", "she", "so", "some",
    "than", "that", "the", "their", "them", "then", "there", "they", "this", "to", "up", "us",
    "was", "we", "were", "what", "when", "which", "who", "why", "will", "with", "would", "you",
    "your",
];

/// Word frequencies over titles and OCR text (stopwords, digits and punctuation removed).
pub fn word_frequencies(corpus: &Corpus, class: Option<&str>, n: usize) -> Vec<Ranked> {
    let mut counts = BTreeMap::new();
    for p in corpus.records.iter().filter(|p| class.is_none_or(|c| has_class(p, c))) {
        for w in tokenize(&p.title).into_iter().chain(tokenize(&p.ocr_text)) {
            if w.chars().count() < 2 || !w.chars().all(char::is_alphabetic) || STOPWORDS.contains(&w.as_str()) {
                continue;
            }
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    ranked(counts, n)
}
