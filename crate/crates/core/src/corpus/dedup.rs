use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use image::imageops::FilterType;
use serde::Serialize;

use super::Corpus;
use crate::error::{Error, Result};

/// 64-bit difference hash.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerceptualHash(pub u64);

pub fn hamming(a: PerceptualHash, b: PerceptualHash) -> u32 {
    (a.0 ^ b.0).count_ones()
}

/// Difference hash of an encoded image: grayscale, downsample to 9x8, and set one bit per
/// adjacent horizontal pair where the right pixel is brighter than the left.
pub fn dhash_bytes(buf: &[u8]) -> Result<PerceptualHash> {
    let img = image::load_from_memory(buf).map_err(|e| Error::invalid(format!("undecodable image: {e}")))?;
    let small = img.to_luma8();
    let small = image::imageops::resize(&small, 9, 8, FilterType::Triangle);
    let mut hash = 0u64;
    for y in 0..8 {
        for x in 0..8 {
            let left = small.get_pixel(x, y)[0];
            let right = small.get_pixel(x + 1, y)[0];
            if right > left {
                hash |= 1 << (y * 8 + x);
            }
        }
    }
    Ok(PerceptualHash(hash))
}

pub fn dhash_file(path: &Path) -> Result<PerceptualHash> {
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    dhash_bytes(&buf)
}

/// Posts sharing the same title and tag set, ids in ascending order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DuplicateGroup {
    pub ids: Vec<String>,
}

/// Group posts with identical title and identical (order-insensitive) tag sets.
/// Singleton groups are omitted.
pub fn dedup_exact(corpus: &Corpus) -> Vec<DuplicateGroup> {
    let mut buckets: BTreeMap<(String, Vec<String>), Vec<String>> = BTreeMap::new();
    for r in &corpus.records {
        let mut tags: Vec<String> = r.tags.clone();
        tags.sort();
        tags.dedup();
        buckets
            .entry((r.title.clone(), tags))
            .or_default()
            .push(r.id.clone());
    }
    let mut groups: Vec<DuplicateGroup> = buckets
        .into_values()
        .filter(|ids| ids.len() > 1)
        .map(|mut ids| {
            ids.sort();
            DuplicateGroup { ids }
        })
        .collect();
    groups.sort_by(|a, b| a.ids[0].cmp(&b.ids[0]));
    groups
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct DedupOutcome {
    #[serde(skip)]
    pub corpus: Corpus,
    /// `(dropped id, id of the survivor it duplicates)`.
    pub dropped: Vec<(String, String)>,
    /// Records whose image could not be hashed; always kept.
    pub unreadable: Vec<String>,
}

/// Visual deduplication inside each exact-match group.
///
/// Members are visited in ascending id order; a member is dropped when its hash lies within
/// `threshold` bits of an already kept member. Posts outside every group are untouched.
pub fn dedup_perceptual(corpus: &Corpus, groups: &[DuplicateGroup], threshold: u32) -> DedupOutcome {
    let by_id: HashMap<&str, &super::PostRecord> =
        corpus.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let mut dropped = Vec::new();
    let mut unreadable = Vec::new();

    for group in groups {
        let mut ids: Vec<&str> = group
            .ids
            .iter()
            .map(String::as_str)
            .filter(|id| by_id.contains_key(id))
            .collect();
        ids.sort_unstable();
        let mut kept: Vec<(&str, PerceptualHash)> = Vec::new();
        for id in ids {
            let post = by_id[id];
            let hash = match dhash_file(&corpus.resolve_image(post)) {
                Ok(h) => h,
                Err(e) => {
                    tracing::warn!(post = id, error = %e, "image not hashable; keeping record");
                    unreadable.push(id.to_string());
                    continue;
                }
            };
            match kept.iter().find(|(_, h)| hamming(*h, hash) <= threshold) {
                Some((survivor, _)) => dropped.push((id.to_string(), survivor.to_string())),
                None => kept.push((id, hash)),
            }
        }
    }

    let removed: HashSet<&str> = dropped.iter().map(|(id, _)| id.as_str()).collect();
    let records = corpus
        .records
        .iter()
        .filter(|r| !removed.contains(r.id.as_str()))
        .cloned()
        .collect();
    DedupOutcome {
        corpus: corpus.with_records(records),
        dropped,
        unreadable,
    }
}
