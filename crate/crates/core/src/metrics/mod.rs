//! Measurement machinery: classification scores, agreement, text-generation metrics,
//! tag similarity and corpus analyses.

mod agreement;
mod analysis;
mod classification;
mod tags;
mod text;

pub use agreement::{agreement_from_labels, fleiss_kappa, majority_vote, AgreementReport};
pub use analysis::{cooccurrence, has_class, lemmatize, top_tags, word_frequencies, Ranked, TagPair};
pub use classification::{macro_f1, ClassScores, MetricReport};
pub use tags::{mean_of_max, tag_similarity, TagScorer, TagSimMethod, TagSimReport};
pub use text::{bleu, bleu_tokens, chrf, meteor_lite, rouge_l, sbert_cosine, tokenize, BLEU_EPSILON};
