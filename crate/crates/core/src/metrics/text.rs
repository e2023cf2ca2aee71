//! Reference-based text metrics for generated summaries.
//!
//! BLEU, chrF and ROUGE-L follow the behaviour of the common Python implementations
//! (nltk `sentence_bleu` with epsilon smoothing, sacrebleu `CHRF`, rouge-score `rougeL`)
//! so that numbers are comparable with published tables.

use std::collections::HashMap;
use std::sync::LazyLock;

use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};

use crate::error::{Error, Result};
use crate::gateway::Gateway;

static TOKEN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+|[^\w\s]").expect("token regex"));

pub const BLEU_EPSILON: f64 = 1e-9;
const CHRF_ORDER: usize = 6;
const CHRF_BETA: f64 = 2.0;

/// Lowercased word and punctuation tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let lower = text.to_lowercase();
    TOKEN.find_iter(&lower).map(|m| m.as_str().to_string()).collect()
}

fn require_non_empty(candidate: &str, reference: &str) -> Result<()> {
    if candidate.trim().is_empty() || reference.trim().is_empty() {
        return Err(Error::invalid("text metrics need non-empty candidate and reference"));
    }
    Ok(())
}

fn ngram_counts<T: std::hash::Hash + Eq + Clone>(seq: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if seq.len() >= n {
        for w in seq.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// (clipped matches, candidate n-gram total)
fn overlap<T: std::hash::Hash + Eq + Clone>(cand: &[T], reference: &[T], n: usize) -> (usize, usize) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(reference, n);
    let matched = c.iter().map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, c.values().sum())
}

/// Sentence BLEU in [0, 1]: up to 4-gram precision, brevity penalty, zero n-gram counts
/// replaced by ε. Candidates shorter than four tokens use uniform weights over the
/// orders they can have.
pub fn bleu(candidate: &str, reference: &str) -> Result<f64> {
    require_non_empty(candidate, reference)?;
    Ok(bleu_tokens(&tokenize(candidate), &tokenize(reference)))
}

pub fn bleu_tokens(cand: &[String], reference: &[String]) -> f64 {
    let c = cand.len();
    let r = reference.len();
    let precisions: Vec<(usize, usize)> = (1..=4).map(|n| overlap(cand, reference, n)).collect();
    if precisions[0].0 == 0 {
        return 0.0;
    }
    let bp = if c > r {
        1.0
    } else if c == 0 {
        0.0
    } else {
        (1.0 - r as f64 / c as f64).exp()
    };
    let orders = if c < 4 { c } else { 4 };
    let weight = 1.0 / orders as f64;
    let log_sum: f64 = precisions
        .iter()
        .take(orders)
        .map(|&(m, total)| {
            let den = total.max(1) as f64;
            let p = if m == 0 { BLEU_EPSILON / den } else { m as f64 / den };
            weight * p.ln()
        })
        .sum();
    bp * log_sum.exp()
}

/// Character n-gram F-score (n = 1..6, β = 2) on the 0–100 scale. Whitespace is ignored
/// and case is significant.
pub fn chrf(candidate: &str, reference: &str) -> Result<f64> {
    require_non_empty(candidate, reference)?;
    let strip = |s: &str| s.chars().filter(|c| !c.is_whitespace()).collect::<Vec<char>>();
    let (hyp, refc) = (strip(candidate), strip(reference));
    let factor = CHRF_BETA * CHRF_BETA;
    let (mut avg_p, mut avg_r, mut effective) = (0.0, 0.0, 0usize);
    for n in 1..=CHRF_ORDER {
        let (matched, n_hyp) = overlap(&hyp, &refc, n);
        let n_ref = if refc.len() >= n { refc.len() - n + 1 } else { 0 };
        if n_hyp > 0 && n_ref > 0 {
            avg_p += matched as f64 / n_hyp as f64;
            avg_r += matched as f64 / n_ref as f64;
            effective += 1;
        }
    }
    if effective == 0 {
        return Ok(0.0);
    }
    avg_p /= effective as f64;
    avg_r /= effective as f64;
    if avg_p + avg_r == 0.0 {
        return Ok(0.0);
    }
    Ok(100.0 * (1.0 + factor) * avg_p * avg_r / (factor * avg_p + avg_r))
}

fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// ROUGE-L F-measure in [0, 1] over [`tokenize`] tokens.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64> {
    require_non_empty(candidate, reference)?;
    let (c, r) = (tokenize(candidate), tokenize(reference));
    if c.is_empty() || r.is_empty() {
        return Ok(0.0);
    }
    let l = lcs_len(&c, &r) as f64;
    let (p, rec) = (l / c.len() as f64, l / r.len() as f64);
    Ok(if p + rec > 0.0 { 2.0 * p * rec / (p + rec) } else { 0.0 })
}

/// METEOR without a synonym stage: exact then stem unigram alignment, recall-weighted
/// harmonic mean (9:1) and the usual fragmentation penalty. Range [0, 1].
pub fn meteor_lite(candidate: &str, reference: &str) -> Result<f64> {
    require_non_empty(candidate, reference)?;
    let (c, r) = (tokenize(candidate), tokenize(reference));
    let stemmer = Stemmer::create(Algorithm::English);
    let mut ref_used = vec![false; r.len()];
    let mut align: Vec<Option<usize>> = vec![None; c.len()];

    for (i, w) in c.iter().enumerate() {
        if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && r[j] == *w) {
            ref_used[j] = true;
            align[i] = Some(j);
        }
    }
    let c_stem: Vec<String> = c.iter().map(|w| stemmer.stem(w).into_owned()).collect();
    let r_stem: Vec<String> = r.iter().map(|w| stemmer.stem(w).into_owned()).collect();
    for i in 0..c.len() {
        if align[i].is_some() {
            continue;
        }
        if let Some(j) = (0..r.len()).find(|&j| !ref_used[j] && r_stem[j] == c_stem[i]) {
            ref_used[j] = true;
            align[i] = Some(j);
        }
    }

    let pairs: Vec<(usize, usize)> = align
        .iter()
        .enumerate()
        .filter_map(|(i, j)| j.map(|j| (i, j)))
        .collect();
    let m = pairs.len();
    if m == 0 {
        return Ok(0.0);
    }
    let chunks = 1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count();
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let fmean = 10.0 * p * rec / (rec + 9.0 * p);
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    Ok(fmean * (1.0 - penalty))
}

/// Sentence-embedding cosine ×100.
pub fn sbert_cosine(gateway: &Gateway, model: &str, candidate: &str, reference: &str) -> Result<f64> {
    require_non_empty(candidate, reference)?;
    let a = gateway.embed_text(model, candidate)?;
    let b = gateway.embed_text(model, reference)?;
    Ok(100.0 * a.cosine(&b))
}
