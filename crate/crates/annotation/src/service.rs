use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock, RwLockReadGuard};

use chrono::{DateTime, FixedOffset, NaiveDate};
use serde::{Deserialize, Serialize};

use memeguard::corpus::{Corpus, PostRecord};
use memeguard::labels::{self, Stage, Stage1Label, Stage2Label};
use memeguard::metrics::{agreement_from_labels, majority_vote, AgreementReport};

use crate::clock::Clock;
use crate::error::ServiceError;
use crate::journal::Journal;
use crate::model::{
    AnnotationRecord, AnnotatorProfile, Assignment, Batch, Event, Finalization, RatingRecord, State,
    DEFAULT_DAILY_CAP, RATERS_PER_SAMPLE,
};

type Result<T> = std::result::Result<T, ServiceError>;

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    /// Cap given to annotators that are registered implicitly by a batch.
    pub default_daily_cap: u32,
    /// Offset whose midnight starts a new annotation day.
    pub utc_offset: FixedOffset,
    /// Samples that have a ground-truth summary and may be rated. `None` allows any sample.
    pub rateable: Option<BTreeSet<String>>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            default_daily_cap: DEFAULT_DAILY_CAP,
            utc_offset: FixedOffset::east_opt(0).expect("zero offset"),
            rateable: None,
        }
    }
}

/// What an annotator sees for one task. Carries no platform URL or user handle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskPayload {
    pub sample: String,
    pub stage: Stage,
    pub image_url: String,
    pub title: String,
    pub tags: Vec<String>,
    pub ocr_text: String,
    pub allowed_labels: Vec<String>,
    pub definitions: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTask {
    pub task: Option<TaskPayload>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub annotator: String,
    pub submitted_today: u32,
    pub cap: u32,
    pub remaining_total: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct AnnotationInput {
    pub annotator: String,
    pub sample: String,
    pub stage: Stage,
    pub label: String,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RatingInput {
    pub annotator: String,
    pub sample: String,
    pub completeness: i64,
    pub fluency: i64,
    pub grammar: i64,
}

/// Either explicit triples or a sample list spread over an annotator pool.
#[derive(Debug, Clone, Deserialize)]
pub struct BatchRequest {
    pub stage: Stage,
    #[serde(default)]
    pub assignments: Vec<Assignment>,
    #[serde(default)]
    pub samples: Vec<String>,
    #[serde(default)]
    pub annotators: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchReceipt {
    pub batch_id: u64,
    pub stage: Stage,
    pub samples: usize,
    pub tasks_per_annotator: BTreeMap<String, usize>,
    /// max − min tasks per annotator within this batch.
    pub load_spread: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingReport {
    pub n_ratings: usize,
    pub n_samples: usize,
    pub completeness: f64,
    pub fluency: f64,
    pub grammar: f64,
}

/// Spread samples over a pool so every sample gets three distinct annotators and per-person
/// load differs by at most one.
pub fn round_robin(samples: &[String], pool: &[String]) -> Result<Vec<Assignment>> {
    let distinct: HashSet<&String> = pool.iter().collect();
    if distinct.len() != pool.len() {
        return Err(ServiceError::BadRequest("annotator pool lists someone twice".into()));
    }
    if pool.len() < RATERS_PER_SAMPLE {
        return Err(ServiceError::BadRequest(format!(
            "need at least {RATERS_PER_SAMPLE} annotators, got {}",
            pool.len()
        )));
    }
    Ok(samples
        .iter()
        .enumerate()
        .map(|(i, s)| Assignment {
            sample: s.clone(),
            annotators: (0..RATERS_PER_SAMPLE)
                .map(|j| pool[(i * RATERS_PER_SAMPLE + j) % pool.len()].clone())
                .collect(),
        })
        .collect())
}

/// The annotation service core: validated commands go to the journal first, then into the
/// in-memory state. One writer at a time; readers share a snapshot lock.
pub struct Service {
    corpus: Corpus,
    config: ServiceConfig,
    clock: Arc<dyn Clock>,
    state: RwLock<State>,
    journal: Mutex<Journal>,
}

impl Service {
    pub fn new(corpus: Corpus, config: ServiceConfig, clock: Arc<dyn Clock>, journal: Journal, history: Vec<Event>) -> Self {
        Self {
            corpus,
            config,
            clock,
            state: RwLock::new(State::replay(history)),
            journal: Mutex::new(journal),
        }
    }

    /// Open the journal at `path`, replay it and serve from there.
    pub fn open(corpus: Corpus, config: ServiceConfig, clock: Arc<dyn Clock>, path: PathBuf) -> Result<Self> {
        let (journal, history) = Journal::open(&path)?;
        Ok(Self::new(corpus, config, clock, journal, history))
    }

    pub fn in_memory(corpus: Corpus, config: ServiceConfig, clock: Arc<dyn Clock>) -> Self {
        Self::new(corpus, config, clock, Journal::in_memory(), Vec::new())
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    fn read(&self) -> RwLockReadGuard<'_, State> {
        self.state.read().expect("state poisoned")
    }

    fn now(&self) -> DateTime<FixedOffset> {
        self.clock.now().with_timezone(&self.config.utc_offset)
    }

    fn today(&self) -> NaiveDate {
        self.now().date_naive()
    }

    /// Validate against the current state and commit the resulting events atomically.
    fn commit<T>(&self, build: impl FnOnce(&State) -> Result<(Vec<Event>, T)>) -> Result<T> {
        let mut state = self.state.write().expect("state poisoned");
        let (events, out) = build(&state)?;
        let mut journal = self.journal.lock().expect("journal poisoned");
        for e in events {
            journal.append(&e)?;
            state.apply(e);
        }
        Ok(out)
    }

    fn post(&self, sample: &str) -> Result<&PostRecord> {
        self.corpus
            .get(sample)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown sample '{sample}'")))
    }

    fn annotator<'s>(state: &'s State, id: &str) -> Result<&'s AnnotatorProfile> {
        state
            .annotators
            .get(id)
            .ok_or_else(|| ServiceError::NotFound(format!("unknown annotator '{id}'")))
    }

    pub fn register_annotator(&self, profile: AnnotatorProfile) -> Result<AnnotatorProfile> {
        profile.validate().map_err(ServiceError::BadRequest)?;
        self.commit(|_| Ok((vec![Event::AnnotatorRegistered(profile.clone())], profile)))
    }

    pub fn annotators(&self) -> Vec<AnnotatorProfile> {
        self.read().annotators.values().cloned().collect()
    }

    /// Stage I toxic as far as stage II eligibility is concerned: the service's own stage I
    /// result when it has one for the sample, otherwise the label the corpus was loaded with.
    fn is_stage1_toxic(&self, state: &State, sample: &str) -> bool {
        match state.stage_final_label(Stage::One, sample) {
            Some(l) => l == Stage1Label::Toxic.as_str(),
            None => self
                .corpus
                .get(sample)
                .is_some_and(|p| p.stage1_label == Some(Stage1Label::Toxic)),
        }
    }

    pub fn create_batch(&self, request: BatchRequest) -> Result<BatchReceipt> {
        let stage = request.stage;
        let assignments = match (request.assignments.is_empty(), request.samples.is_empty()) {
            (false, true) => request.assignments,
            (true, false) => round_robin(&request.samples, &request.annotators)?,
            (true, true) => return Err(ServiceError::BadRequest("batch has no samples".into())),
            (false, false) => {
                return Err(ServiceError::BadRequest(
                    "give either explicit assignments or samples + annotators, not both".into(),
                ))
            }
        };
        let mut seen = HashSet::new();
        for a in &assignments {
            self.post(&a.sample)?;
            if !seen.insert(a.sample.as_str()) {
                return Err(ServiceError::BadRequest(format!("sample '{}' listed twice", a.sample)));
            }
            if a.annotators.len() != RATERS_PER_SAMPLE {
                return Err(ServiceError::BadRequest(format!(
                    "sample '{}' needs exactly {RATERS_PER_SAMPLE} annotators, got {}",
                    a.sample,
                    a.annotators.len()
                )));
            }
            let distinct: HashSet<&String> = a.annotators.iter().collect();
            if distinct.len() != a.annotators.len() {
                return Err(ServiceError::BadRequest(format!(
                    "sample '{}' is assigned twice to the same annotator",
                    a.sample
                )));
            }
        }
        let created_at = self.now();
        let default_cap = self.config.default_daily_cap;

        self.commit(|state| {
            for a in &assignments {
                if state.assigned.contains_key(&(stage, a.sample.clone())) {
                    return Err(ServiceError::Conflict(format!(
                        "sample '{}' already has a stage {stage} assignment",
                        a.sample
                    )));
                }
                if stage == Stage::Two && !self.is_stage1_toxic(state, &a.sample) {
                    return Err(ServiceError::BadRequest(format!(
                        "sample '{}' is not finalized toxic at stage I",
                        a.sample
                    )));
                }
            }
            let mut events = Vec::new();
            let mut load: BTreeMap<String, usize> = BTreeMap::new();
            for who in assignments.iter().flat_map(|a| &a.annotators) {
                *load.entry(who.clone()).or_default() += 1;
            }
            for who in load.keys() {
                if !state.annotators.contains_key(who) {
                    let profile = AnnotatorProfile::new(who.clone(), default_cap);
                    profile.validate().map_err(ServiceError::BadRequest)?;
                    events.push(Event::AnnotatorRegistered(profile));
                }
            }
            let id = state.batches.len() as u64 + 1;
            let spread = load.values().max().copied().unwrap_or(0) - load.values().min().copied().unwrap_or(0);
            let receipt = BatchReceipt {
                batch_id: id,
                stage,
                samples: assignments.len(),
                tasks_per_annotator: load,
                load_spread: spread,
            };
            events.push(Event::BatchCreated(Batch {
                id,
                stage,
                assignments,
                created_at,
            }));
            Ok((events, receipt))
        })
    }

    fn payload(&self, stage: Stage, sample: &str) -> Result<TaskPayload> {
        let post = self.post(sample)?;
        let space = labels::LabelSpace::for_stage(stage);
        Ok(TaskPayload {
            sample: sample.to_string(),
            stage,
            image_url: format!("/api/samples/{sample}/media"),
            title: post.title.clone(),
            tags: post.tags.clone(),
            ocr_text: post.ocr_text.clone(),
            allowed_labels: stage.assignable_labels().iter().map(|s| s.to_string()).collect(),
            definitions: space.definitions.into_iter().collect(),
        })
    }

    fn pending<'s>(state: &'s State, annotator: &str) -> impl Iterator<Item = &'s (Stage, String)> + 's {
        let who = annotator.to_string();
        state
            .queues
            .get(annotator)
            .into_iter()
            .flatten()
            .filter(move |(stage, sample)| !state.annotations.contains_key(&(*stage, sample.clone(), who.clone())))
    }

    pub fn next_task(&self, annotator: &str) -> Result<NextTask> {
        let state = self.read();
        let profile = Self::annotator(&state, annotator)?;
        if !profile.active {
            return Err(ServiceError::Forbidden(format!("annotator '{annotator}' is inactive")));
        }
        if state.submitted_on(annotator, self.today()) >= profile.daily_cap {
            return Ok(NextTask {
                task: None,
                reason: Some("cap reached".into()),
            });
        }
        let next = Self::pending(&state, annotator).next().cloned();
        match next {
            Some((stage, sample)) => Ok(NextTask {
                task: Some(self.payload(stage, &sample)?),
                reason: None,
            }),
            None => Ok(NextTask {
                task: None,
                reason: Some("no pending tasks".into()),
            }),
        }
    }

    pub fn progress(&self, annotator: &str) -> Result<Progress> {
        let state = self.read();
        let profile = Self::annotator(&state, annotator)?;
        Ok(Progress {
            annotator: annotator.to_string(),
            submitted_today: state.submitted_on(annotator, self.today()),
            cap: profile.daily_cap,
            remaining_total: Self::pending(&state, annotator).count(),
        })
    }

    pub fn submit_annotation(&self, input: AnnotationInput) -> Result<AnnotationRecord> {
        if input.label == labels::UNDECIDED {
            return Err(ServiceError::BadRequest(
                "'undecided' is assigned by finalization, not by annotators".into(),
            ));
        }
        if !input.stage.is_assignable(&input.label) {
            return Err(ServiceError::BadRequest(format!(
                "'{}' is not a stage {} label (expected one of {:?})",
                input.label,
                input.stage,
                input.stage.assignable_labels()
            )));
        }
        self.post(&input.sample)?;
        let now = self.now();
        self.commit(|state| {
            let profile = Self::annotator(state, &input.annotator)?;
            if !profile.active {
                return Err(ServiceError::Forbidden(format!("annotator '{}' is inactive", input.annotator)));
            }
            let assigned = state
                .assigned
                .get(&(input.stage, input.sample.clone()))
                .is_some_and(|who| who.contains(&input.annotator));
            if !assigned {
                return Err(ServiceError::BadRequest(format!(
                    "sample '{}' is not assigned to '{}' at stage {}",
                    input.sample, input.annotator, input.stage
                )));
            }
            let key = (input.stage, input.sample.clone(), input.annotator.clone());
            if state.annotations.contains_key(&key) {
                return Err(ServiceError::Conflict(format!(
                    "'{}' already annotated '{}' at stage {}",
                    input.annotator, input.sample, input.stage
                )));
            }
            if state.submitted_on(&input.annotator, now.date_naive()) >= profile.daily_cap {
                return Err(ServiceError::CapReached { cap: profile.daily_cap });
            }
            let record = AnnotationRecord {
                sample: input.sample.clone(),
                annotator: input.annotator.clone(),
                stage: input.stage,
                label: input.label.clone(),
                submitted_at: now,
            };
            Ok((vec![Event::Annotated(record.clone())], record))
        })
    }

    pub fn submit_rating(&self, input: RatingInput) -> Result<RatingRecord> {
        let score = |name: &str, v: i64| -> Result<u8> {
            if (1..=10).contains(&v) {
                Ok(v as u8)
            } else {
                Err(ServiceError::BadRequest(format!("{name} must be within 1..=10, got {v}")))
            }
        };
        let (completeness, fluency, grammar) = (
            score("completeness", input.completeness)?,
            score("fluency", input.fluency)?,
            score("grammar", input.grammar)?,
        );
        self.post(&input.sample)?;
        if let Some(allowed) = &self.config.rateable {
            if !allowed.contains(&input.sample) {
                return Err(ServiceError::BadRequest(format!(
                    "sample '{}' has no ground-truth summary to rate",
                    input.sample
                )));
            }
        }
        let now = self.now();
        self.commit(|state| {
            Self::annotator(state, &input.annotator)?;
            let key = (input.sample.clone(), input.annotator.clone());
            if state.ratings.contains_key(&key) {
                return Err(ServiceError::Conflict(format!(
                    "'{}' already rated '{}'",
                    input.annotator, input.sample
                )));
            }
            let record = RatingRecord {
                sample: input.sample.clone(),
                annotator: input.annotator.clone(),
                completeness,
                fluency,
                grammar,
                submitted_at: now,
            };
            Ok((vec![Event::Rated(record.clone())], record))
        })
    }

    pub fn rating_report(&self) -> RatingReport {
        let state = self.read();
        rating_report(state.ratings.values())
    }

    fn incomplete(state: &State, stage: Stage) -> Vec<String> {
        state
            .stage_samples(stage)
            .into_iter()
            .filter(|s| state.labels_for(stage, s).len() != RATERS_PER_SAMPLE)
            .map(str::to_string)
            .collect()
    }

    fn compute_finalization(state: &State, stage: Stage) -> Result<Finalization> {
        let samples = state.stage_samples(stage);
        if samples.is_empty() {
            return Err(ServiceError::Conflict(format!("no stage {stage} samples to finalize")));
        }
        let incomplete = Self::incomplete(state, stage);
        if !incomplete.is_empty() {
            return Err(ServiceError::Incomplete(incomplete));
        }
        let mut result = Finalization::default();
        for s in samples {
            let label = majority_vote(stage, &state.labels_for(stage, s))
                .map_err(|e| ServiceError::Internal(e.to_string()))?;
            if label == labels::UNDECIDED {
                result.undecided.push(s.to_string());
            }
            result.labels.insert(s.to_string(), label);
        }
        result.undecided.sort();
        Ok(result)
    }

    /// Majority-vote every sample of `stage`. Re-finalizing an unchanged stage is a no-op.
    pub fn finalize(&self, stage: Stage) -> Result<Finalization> {
        self.commit(|state| {
            let result = Self::compute_finalization(state, stage)?;
            let events = if state.finalized.get(&stage) == Some(&result) {
                Vec::new()
            } else {
                vec![Event::Finalized {
                    stage,
                    result: result.clone(),
                }]
            };
            Ok((events, result))
        })
    }

    pub fn agreement(&self, stage: Stage) -> Result<AgreementReport> {
        let state = self.read();
        stage_agreement(&state, stage)
    }

    /// The corpus with every finalized stage label written in.
    pub fn labeled_corpus(&self) -> Corpus {
        apply_finalizations(&self.corpus, &self.read())
    }

    pub fn records(&self) -> Vec<AnnotationRecord> {
        self.read().annotations.values().cloned().collect()
    }

    /// Read the image of a sample: its bytes and a content type guessed from the extension.
    pub fn media(&self, sample: &str) -> Result<(Vec<u8>, &'static str)> {
        let post = self.post(sample)?;
        let path = self.corpus.resolve_image(post);
        let bytes = std::fs::read(&path)
            .map_err(|_| ServiceError::NotFound(format!("image for sample '{sample}' is missing")))?;
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        let mime = match ext.as_str() {
            "png" => "image/png",
            "jpg" | "jpeg" => "image/jpeg",
            "gif" => "image/gif",
            "webp" => "image/webp",
            "bmp" => "image/bmp",
            _ => "application/octet-stream",
        };
        Ok((bytes, mime))
    }
}

pub fn rating_report<'a>(ratings: impl IntoIterator<Item = &'a RatingRecord>) -> RatingReport {
    let mut n = 0usize;
    let mut samples = BTreeSet::new();
    let (mut c, mut f, mut g) = (0.0, 0.0, 0.0);
    for r in ratings {
        n += 1;
        samples.insert(r.sample.as_str());
        c += f64::from(r.completeness);
        f += f64::from(r.fluency);
        g += f64::from(r.grammar);
    }
    let mean = |x: f64| if n == 0 { 0.0 } else { x / n as f64 };
    RatingReport {
        n_ratings: n,
        n_samples: samples.len(),
        completeness: mean(c),
        fluency: mean(f),
        grammar: mean(g),
    }
}

/// Fleiss' κ over every sample of the stage; all samples need their three labels.
pub fn stage_agreement(state: &State, stage: Stage) -> Result<AgreementReport> {
    let incomplete = Service::incomplete(state, stage);
    if !incomplete.is_empty() {
        return Err(ServiceError::Incomplete(incomplete));
    }
    let items: Vec<Vec<&str>> = state
        .stage_samples(stage)
        .into_iter()
        .map(|s| state.labels_for(stage, s))
        .collect();
    if items.is_empty() {
        return Err(ServiceError::Conflict(format!("no stage {stage} annotations yet")));
    }
    agreement_from_labels(&items, stage.assignable_labels()).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

pub fn apply_finalizations(corpus: &Corpus, state: &State) -> Corpus {
    let mut records = corpus.records.clone();
    for post in &mut records {
        if let Some(l) = state.stage_final_label(Stage::One, &post.id) {
            post.stage1_label = l.parse().ok();
            if post.stage1_label != Some(Stage1Label::Toxic) {
                post.stage2_label = None;
            }
        }
        if let Some(l) = state.stage_final_label(Stage::Two, &post.id) {
            if post.stage1_label == Some(Stage1Label::Toxic) {
                post.stage2_label = l.parse::<Stage2Label>().ok();
            }
        }
    }
    corpus.with_records(records)
}
