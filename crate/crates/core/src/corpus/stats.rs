use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::Serialize;

use super::{dedup_exact, Corpus, PostRecord, Split};
use crate::labels::{Stage1Label, Stage2Label};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub train: usize,
    pub test: usize,
    /// Posts without a split assignment.
    pub unsplit: usize,
    pub total: usize,
}

impl LabelCounts {
    fn add(&mut self, split: Option<Split>) {
        match split {
            Some(Split::Train) => self.train += 1,
            Some(Split::Test) => self.test += 1,
            None => self.unsplit += 1,
        }
        self.total += 1;
    }
}

/// Per-label counts per split, in the row order of the published dataset table.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CorpusStats {
    pub normal: LabelCounts,
    pub toxic: LabelCounts,
    pub hateful: LabelCounts,
    pub dangerous: LabelCounts,
    pub offensive: LabelCounts,
    pub undecided: LabelCounts,
    pub total: LabelCounts,
    pub tag_vocabulary: usize,
    pub duplicate_groups: usize,
}

impl CorpusStats {
    pub fn rows(&self) -> [(&'static str, &'static str, LabelCounts); 7] {
        [
            ("I & II", "normal", self.normal),
            ("I", "toxic", self.toxic),
            ("II", "hateful", self.hateful),
            ("II", "dangerous", self.dangerous),
            ("II", "offensive", self.offensive),
            ("II", "undecided", self.undecided),
            ("", "Total", self.total),
        ]
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<7} {:<10} {:>7} {:>7} {:>7}", "stage", "label", "train", "test", "total");
        for (stage, label, c) in self.rows() {
            let _ = writeln!(out, "{stage:<7} {label:<10} {:>7} {:>7} {:>7}", c.train, c.test, c.total);
        }
        let _ = writeln!(out, "tag vocabulary: {}", self.tag_vocabulary);
        let _ = writeln!(out, "duplicate groups: {}", self.duplicate_groups);
        out
    }
}

fn tally(stats: &mut CorpusStats, r: &PostRecord) {
    match r.stage1_label {
        Some(Stage1Label::Normal) => stats.normal.add(r.split),
        Some(Stage1Label::Toxic) => stats.toxic.add(r.split),
        None => {}
    }
    match r.stage2_label {
        Some(Stage2Label::Hateful) => stats.hateful.add(r.split),
        Some(Stage2Label::Dangerous) => stats.dangerous.add(r.split),
        Some(Stage2Label::Offensive) => stats.offensive.add(r.split),
        Some(Stage2Label::Undecided) => stats.undecided.add(r.split),
        None => {}
    }
    stats.total.add(r.split);
}

pub fn corpus_stats(corpus: &Corpus) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for r in &corpus.records {
        tally(&mut stats, r);
    }
    stats.tag_vocabulary = corpus
        .records
        .iter()
        .flat_map(|r| r.tags.iter())
        .collect::<BTreeSet<_>>()
        .len();
    stats.duplicate_groups = dedup_exact(corpus).len();
    stats
}
