//! Toolkit for building and evaluating toxic meme moderation pipelines around hosted
//! vision-language and embedding models.

pub mod corpus;
pub mod detect;
pub mod exemplar;
pub mod error;
pub mod gateway;
pub mod jsonl;
pub mod labels;
pub mod metrics;
pub mod par;
pub mod tagging;
pub mod templates;

pub use error::{Error, Result};
