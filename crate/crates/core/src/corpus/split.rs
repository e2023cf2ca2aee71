use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Corpus, Split};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitConfig {
    pub test_size: usize,
    /// Minimum share of each frequent tag's posts that must land in the test split.
    pub coverage: f64,
    pub seed: u64,
    /// Tags with fewer occurrences than this carry no coverage constraint.
    pub min_tag_occurrences: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_size: 1000,
            coverage: 0.15,
            seed: 0,
            min_tag_occurrences: 4,
        }
    }
}

fn required(coverage: f64, occurrences: usize) -> usize {
    // guard against 0.15 * 20 = 3.0000000000000004 rounding up to 4
    (coverage * occurrences as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Assign every post to train or test.
///
/// Frequent tags are processed in descending frequency order; for each, posts carrying it are
/// moved into test (in seeded random order) until the tag's coverage quota is met. The rest of
/// the test split is then filled from the same seeded order.
pub fn split_train_test(corpus: &Corpus, config: &SplitConfig) -> Result<Corpus> {
    let n = corpus.len();
    if config.test_size >= n && n > 0 {
        return Err(Error::invalid(format!(
            "test size {} must be smaller than corpus size {n}",
            config.test_size
        )));
    }
    if !(0.0..=1.0).contains(&config.coverage) {
        return Err(Error::invalid(format!("coverage {} outside [0, 1]", config.coverage)));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let mut rank = vec![0usize; n];
    for (pos, &idx) in order.iter().enumerate() {
        rank[idx] = pos;
    }

    let mut posts_by_tag: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (idx, r) in corpus.records.iter().enumerate() {
        let mut tags: Vec<&str> = r.tags.iter().map(String::as_str).collect();
        tags.sort_unstable();
        tags.dedup();
        for t in tags {
            posts_by_tag.entry(t).or_default().push(idx);
        }
    }
    let mut frequent: Vec<(&str, Vec<usize>)> = posts_by_tag
        .into_iter()
        .filter(|(_, posts)| posts.len() >= config.min_tag_occurrences)
        .collect();
    frequent.sort_by(|a, b| b.1.len().cmp(&a.1.len()).then(a.0.cmp(b.0)));

    let mut in_test = vec![false; n];
    let mut test_count = 0usize;
    for (tag, mut posts) in frequent {
        let need = required(config.coverage, posts.len());
        let have = posts.iter().filter(|&&i| in_test[i]).count();
        if have >= need {
            continue;
        }
        let deficit = need - have;
        let available = config.test_size - test_count;
        if deficit > available {
            return Err(Error::InfeasibleSplit {
                tag: tag.to_string(),
                needed: deficit,
                available,
            });
        }
        posts.retain(|&i| !in_test[i]);
        posts.sort_by_key(|&i| rank[i]);
        for &i in posts.iter().take(deficit) {
            in_test[i] = true;
        }
        test_count += deficit;
    }

    for &i in &order {
        if test_count >= config.test_size {
            break;
        }
        if !in_test[i] {
            in_test[i] = true;
            test_count += 1;
        }
    }

    let records = corpus
        .records
        .iter()
        .zip(&in_test)
        .map(|(r, &test)| {
            let mut r = r.clone();
            r.split = Some(if test { Split::Test } else { Split::Train });
            r
        })
        .collect();
    Ok(corpus.with_records(records))
}
