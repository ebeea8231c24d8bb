//! Tokenization and the ten surface features embedded in scoring prompts.

mod correlation;
mod features;
mod resources;
mod tagger;
mod tokenize;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use correlation::{pearson, rank_features, FeatureCorrelation};
pub use features::{
    count_dale_chall_difficult, extract_features, FeatureName, LinguisticFeatureVector,
};
pub use resources::{Resources, RESOURCE_FILES};
pub use tokenize::{is_punctuation, tokenize, Token, TokenizedText};

#[derive(Debug, Error)]
pub enum TextStatsError {
    #[error("Dale-Chall resource missing")]
    DaleChallMissing,
    #[error("undefined correlation")]
    UndefinedCorrelation,
    #[error("vectors differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("resource {name}: {detail}")]
    Resource { name: String, detail: String },
}

/// Coarse part-of-speech tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Pos {
    Noun,
    Verb,
    Adj,
    Adv,
    Pron,
    Det,
    Adp,
    Num,
    Punct,
    Other,
}
