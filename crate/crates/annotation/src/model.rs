use std::collections::{BTreeMap, HashMap};

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use memeguard::labels::Stage;

pub const DEFAULT_DAILY_CAP: u32 = 50;
pub const RATERS_PER_SAMPLE: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub id: String,
    /// Display name. Never a platform username.
    pub handle: String,
    pub daily_cap: u32,
    pub active: bool,
}

impl AnnotatorProfile {
    pub fn new(id: impl Into<String>, daily_cap: u32) -> Self {
        let id = id.into();
        Self {
            handle: id.clone(),
            id,
            daily_cap,
            active: true,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("annotator id must be non-empty".into());
        }
        if self.daily_cap < 1 {
            return Err("daily_cap must be at least 1".into());
        }
        let h = self.handle.to_lowercase();
        if h.contains("u/") || h.contains("r/") || h.contains('@') {
            return Err(format!("handle '{}' looks like a platform username", self.handle));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub sample: String,
    pub annotator: String,
    pub stage: Stage,
    pub label: String,
    pub submitted_at: DateTime<FixedOffset>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingRecord {
    pub sample: String,
    pub annotator: String,
    pub completeness: u8,
    pub fluency: u8,
    pub grammar: u8,
    pub submitted_at: DateTime<FixedOffset>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Assignment {
    pub sample: String,
    pub annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    pub id: u64,
    pub stage: Stage,
    pub assignments: Vec<Assignment>,
    pub created_at: DateTime<FixedOffset>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finalization {
    /// Final label per sample, `undecided` included.
    pub labels: BTreeMap<String, String>,
    pub undecided: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    AnnotatorRegistered(AnnotatorProfile),
    BatchCreated(Batch),
    Annotated(AnnotationRecord),
    Rated(RatingRecord),
    Finalized { stage: Stage, result: Finalization },
}

/// Everything the service knows, rebuilt by folding the event log.
#[derive(Debug, Clone, Default)]
pub struct State {
    pub annotators: BTreeMap<String, AnnotatorProfile>,
    pub batches: Vec<Batch>,
    /// (stage, sample) → the three assigned annotators.
    pub assigned: HashMap<(Stage, String), Vec<String>>,
    /// Per annotator, assigned tasks in assignment order.
    pub queues: HashMap<String, Vec<(Stage, String)>>,
    pub annotations: BTreeMap<(Stage, String, String), AnnotationRecord>,
    pub ratings: BTreeMap<(String, String), RatingRecord>,
    pub finalized: BTreeMap<Stage, Finalization>,
    pub submitted_per_day: HashMap<(String, NaiveDate), u32>,
}

impl State {
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Self {
        let mut s = Self::default();
        for e in events {
            s.apply(e);
        }
        s
    }

    /// Apply an already-validated event. Total: never fails, so replay cannot diverge.
    pub fn apply(&mut self, event: Event) {
        match event {
            Event::AnnotatorRegistered(p) => {
                self.annotators.insert(p.id.clone(), p);
            }
            Event::BatchCreated(b) => {
                for a in &b.assignments {
                    for who in &a.annotators {
                        self.queues
                            .entry(who.clone())
                            .or_default()
                            .push((b.stage, a.sample.clone()));
                    }
                    self.assigned.insert((b.stage, a.sample.clone()), a.annotators.clone());
                }
                self.batches.push(b);
            }
            Event::Annotated(r) => {
                let day = r.submitted_at.date_naive();
                *self.submitted_per_day.entry((r.annotator.clone(), day)).or_default() += 1;
                self.annotations
                    .insert((r.stage, r.sample.clone(), r.annotator.clone()), r);
            }
            Event::Rated(r) => {
                self.ratings.insert((r.sample.clone(), r.annotator.clone()), r);
            }
            Event::Finalized { stage, result } => {
                self.finalized.insert(stage, result);
            }
        }
    }

    pub fn submitted_on(&self, annotator: &str, day: NaiveDate) -> u32 {
        self.submitted_per_day
            .get(&(annotator.to_string(), day))
            .copied()
            .unwrap_or(0)
    }

    /// Samples assigned at `stage`, in assignment order.
    pub fn stage_samples(&self, stage: Stage) -> Vec<&str> {
        self.batches
            .iter()
            .filter(|b| b.stage == stage)
            .flat_map(|b| b.assignments.iter().map(|a| a.sample.as_str()))
            .collect()
    }

    /// Labels recorded for one sample at one stage, in annotator-id order.
    pub fn labels_for(&self, stage: Stage, sample: &str) -> Vec<&str> {
        self.annotations
            .range((stage, sample.to_string(), String::new())..)
            .take_while(|((st, s, _), _)| *st == stage && s == sample)
            .map(|(_, r)| r.label.as_str())
            .collect()
    }

    pub fn stage_final_label(&self, stage: Stage, sample: &str) -> Option<&str> {
        self.finalized
            .get(&stage)
            .and_then(|f| f.labels.get(sample))
            .map(String::as_str)
    }
}
