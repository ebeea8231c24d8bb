use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::resources::Resources;
use super::tokenize::{is_punctuation, TokenizedText};
use super::TextStatsError;

/// The ten features, in canonical order. The order (and the descriptions)
/// follow the feature list shown to the scoring model; long-word count,
/// which that list omits, comes last.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureName {
    UniqueWordCount,
    WordCount,
    SentenceCount,
    EssayCharLength,
    LemmaCount,
    NounCount,
    StopwordCount,
    DaleChallDifficultCount,
    TotalCharCount,
    LongWordCount,
}

impl FeatureName {
    pub const ALL: [FeatureName; 10] = [
        FeatureName::UniqueWordCount,
        FeatureName::WordCount,
        FeatureName::SentenceCount,
        FeatureName::EssayCharLength,
        FeatureName::LemmaCount,
        FeatureName::NounCount,
        FeatureName::StopwordCount,
        FeatureName::DaleChallDifficultCount,
        FeatureName::TotalCharCount,
        FeatureName::LongWordCount,
    ];

    pub fn key(self) -> &'static str {
        match self {
            FeatureName::UniqueWordCount => "unique_word_count",
            FeatureName::WordCount => "word_count",
            FeatureName::SentenceCount => "sentence_count",
            FeatureName::EssayCharLength => "essay_char_length",
            FeatureName::LemmaCount => "lemma_count",
            FeatureName::NounCount => "noun_count",
            FeatureName::StopwordCount => "stopword_count",
            FeatureName::DaleChallDifficultCount => "dale_chall_difficult_count",
            FeatureName::TotalCharCount => "total_char_count",
            FeatureName::LongWordCount => "long_word_count",
        }
    }

    /// Text used for this feature in the prompt's feature list.
    pub fn description(self) -> &'static str {
        match self {
            FeatureName::UniqueWordCount => "total number of unique words in the essay",
            FeatureName::WordCount => "total number of words in the essay.",
            FeatureName::SentenceCount => "total number of sentences present",
            FeatureName::EssayCharLength => "total number of characters",
            FeatureName::LemmaCount => "total number of lemma",
            FeatureName::NounCount => "total number of nouns",
            FeatureName::StopwordCount => "total number of stopwords",
            FeatureName::DaleChallDifficultCount => {
                "total number of words that are not in the Dale-Chall word list of 3000 words recognized by 80% of fifth graders"
            }
            FeatureName::TotalCharCount => "total number of characters",
            FeatureName::LongWordCount => "total number of long words",
        }
    }
}

impl fmt::Display for FeatureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for FeatureName {
    type Err = TextStatsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        FeatureName::ALL
            .into_iter()
            .find(|f| f.key() == s)
            .ok_or_else(|| TextStatsError::UnknownFeature(s.to_string()))
    }
}

/// Surface statistics of one essay. Field order is the canonical order.
///
/// Counting conventions:
/// - `unique_word_count`: word forms (case-sensitive surface) that occur once.
/// - `essay_char_length`: non-space, non-punctuation characters of the raw text.
/// - `lemma_count`: distinct lemmas.
/// - `noun_count` / `stopword_count`: distinct surface forms tagged as nouns /
///   found in the stopword list.
/// - `dale_chall_difficult_count`: word tokens whose lowercase alphanumeric
///   form is not on the familiar-word list (numerals excluded).
/// - `total_char_count`: letters and digits inside word tokens.
/// - `long_word_count`: word tokens with at least 7 letters or digits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LinguisticFeatureVector {
    pub unique_word_count: u64,
    pub word_count: u64,
    pub sentence_count: u64,
    pub essay_char_length: u64,
    pub lemma_count: u64,
    pub noun_count: u64,
    pub stopword_count: u64,
    pub dale_chall_difficult_count: u64,
    pub total_char_count: u64,
    pub long_word_count: u64,
}

impl LinguisticFeatureVector {
    pub fn get(&self, name: FeatureName) -> u64 {
        match name {
            FeatureName::UniqueWordCount => self.unique_word_count,
            FeatureName::WordCount => self.word_count,
            FeatureName::SentenceCount => self.sentence_count,
            FeatureName::EssayCharLength => self.essay_char_length,
            FeatureName::LemmaCount => self.lemma_count,
            FeatureName::NounCount => self.noun_count,
            FeatureName::StopwordCount => self.stopword_count,
            FeatureName::DaleChallDifficultCount => self.dale_chall_difficult_count,
            FeatureName::TotalCharCount => self.total_char_count,
            FeatureName::LongWordCount => self.long_word_count,
        }
    }

    pub fn values(&self) -> [u64; 10] {
        FeatureName::ALL.map(|f| self.get(f))
    }

    /// Tab-separated header: `essay_id` followed by the ten feature keys.
    pub fn tsv_header() -> String {
        std::iter::once("essay_id")
            .chain(FeatureName::ALL.iter().map(|f| f.key()))
            .collect::<Vec<_>>()
            .join("\t")
    }

    pub fn tsv_row(&self, essay_id: &str) -> String {
        let mut row = essay_id.replace(['\t', '\n'], " ");
        for v in self.values() {
            row.push('\t');
            row.push_str(&v.to_string());
        }
        row
    }
}

fn alnum_len(s: &str) -> usize {
    s.chars().filter(|c| c.is_alphanumeric()).count()
}

/// Lowercase letters and digits only; the form looked up in the familiar-word
/// list.
fn familiar_key(normalized: &str) -> String {
    normalized.chars().filter(|c| c.is_alphanumeric()).collect()
}

pub fn count_dale_chall_difficult(
    tokens: &TokenizedText,
    word_list: &HashSet<String>,
) -> Result<u64, TextStatsError> {
    if word_list.is_empty() {
        return Err(TextStatsError::DaleChallMissing);
    }
    Ok(tokens
        .words()
        .map(|t| familiar_key(&t.normalized))
        .filter(|key| {
            !key.is_empty() && !key.chars().all(char::is_numeric) && !word_list.contains(key)
        })
        .count() as u64)
}

impl Resources {
    pub fn extract_features(&self, text: &str) -> LinguisticFeatureVector {
        let tokenized = self.tokenize(text);
        self.features_of(text, &tokenized)
    }

    pub fn features_of(&self, text: &str, tokenized: &TokenizedText) -> LinguisticFeatureVector {
        let mut frequency: HashMap<&str, u64> = HashMap::new();
        let mut lemmas = HashSet::new();
        let mut nouns = HashSet::new();
        let mut stops = HashSet::new();
        let mut word_count = 0;
        let mut total_chars = 0;
        let mut long_words = 0;
        for token in tokenized.words() {
            word_count += 1;
            *frequency.entry(token.surface.as_str()).or_default() += 1;
            lemmas.insert(token.lemma.as_str());
            if token.pos == super::Pos::Noun {
                nouns.insert(token.surface.as_str());
            }
            if token.is_stopword {
                stops.insert(token.surface.as_str());
            }
            let len = alnum_len(&token.surface) as u64;
            total_chars += len;
            if len >= 7 {
                long_words += 1;
            }
        }
        let dale_chall = if self.dale_chall.is_empty() {
            0
        } else {
            count_dale_chall_difficult(tokenized, &self.dale_chall).unwrap_or(0)
        };
        LinguisticFeatureVector {
            unique_word_count: frequency.values().filter(|&&n| n == 1).count() as u64,
            word_count,
            sentence_count: tokenized.sentence_count() as u64,
            essay_char_length: text
                .chars()
                .filter(|&c| !c.is_whitespace() && !is_punctuation(c))
                .count() as u64,
            lemma_count: lemmas.len() as u64,
            noun_count: nouns.len() as u64,
            stopword_count: stops.len() as u64,
            dale_chall_difficult_count: dale_chall,
            total_char_count: total_chars,
            long_word_count: long_words,
        }
    }
}

/// Extracts features with the bundled resources.
pub fn extract_features(text: &str) -> LinguisticFeatureVector {
    Resources::bundled().extract_features(text)
}
