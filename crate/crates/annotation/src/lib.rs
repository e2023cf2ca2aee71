//! Two-stage annotation service: batches of triple assignments, per-day submission caps,
//! immutable annotation records, majority-vote finalization, agreement and summary ratings.
//!
//! All state lives in an append-only JSONL journal that is replayed at startup.

pub mod api;
pub mod clock;
pub mod error;
pub mod journal;
pub mod model;
pub mod service;

pub use api::{router, serve, ADMIN_TOKEN_ENV};
pub use clock::{Clock, ManualClock, SystemClock};
pub use error::ServiceError;
pub use journal::Journal;
pub use model::{AnnotationRecord, AnnotatorProfile, Assignment, Event, Finalization, RatingRecord, State};
pub use service::{
    apply_finalizations, rating_report, round_robin, stage_agreement, BatchReceipt, BatchRequest, NextTask,
    Progress, RatingReport, Service, ServiceConfig, TaskPayload,
};
