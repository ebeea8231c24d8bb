use std::collections::{HashMap, HashSet};
use std::fs;
use std::path::Path;

use once_cell::sync::Lazy;

use super::tagger::FineTag;
use super::TextStatsError;

const DALE_CHALL: &str = include_str!("../../resources/dale_chall.txt");
const STOPWORDS: &str = include_str!("../../resources/stopwords.txt");
const LEMMA_EXCEPTIONS: &str = include_str!("../../resources/lemma_exceptions.tsv");
const POS_LEXICON: &str = include_str!("../../resources/pos_lexicon.tsv");
const ABBREVIATIONS: &str = include_str!("../../resources/abbreviations.txt");

pub const RESOURCE_FILES: [&str; 5] = [
    "dale_chall.txt",
    "stopwords.txt",
    "lemma_exceptions.tsv",
    "pos_lexicon.tsv",
    "abbreviations.txt",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub(crate) enum LemmaClass {
    Noun,
    Verb,
    Adj,
    Adv,
}

impl LemmaClass {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "noun" => Some(LemmaClass::Noun),
            "verb" => Some(LemmaClass::Verb),
            "adj" => Some(LemmaClass::Adj),
            "adv" => Some(LemmaClass::Adv),
            _ => None,
        }
    }
}

/// Word lists and lexicons used by the tokenizer and feature extractor.
/// Immutable after construction.
#[derive(Debug, Clone)]
pub struct Resources {
    pub(crate) dale_chall: HashSet<String>,
    pub(crate) stopwords: HashSet<String>,
    pub(crate) lemma_exceptions: HashMap<(LemmaClass, String), String>,
    pub(crate) lexicon: HashMap<String, FineTag>,
    pub(crate) abbreviations: HashSet<String>,
}

static BUNDLED: Lazy<Resources> = Lazy::new(|| {
    Resources::from_sources(
        DALE_CHALL,
        STOPWORDS,
        LEMMA_EXCEPTIONS,
        POS_LEXICON,
        ABBREVIATIONS,
    )
    .expect("bundled resources are well-formed")
});

fn word_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
}

impl Resources {
    /// The resource files compiled into the crate.
    pub fn bundled() -> &'static Resources {
        &BUNDLED
    }

    /// Loads the five resource files from a directory.
    pub fn from_dir(dir: &Path) -> Result<Self, TextStatsError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| TextStatsError::Resource {
                name: path.display().to_string(),
                detail: source.to_string(),
            })
        };
        Self::from_sources(
            &read(RESOURCE_FILES[0])?,
            &read(RESOURCE_FILES[1])?,
            &read(RESOURCE_FILES[2])?,
            &read(RESOURCE_FILES[3])?,
            &read(RESOURCE_FILES[4])?,
        )
    }

    pub fn from_sources(
        dale_chall: &str,
        stopwords: &str,
        lemma_exceptions: &str,
        pos_lexicon: &str,
        abbreviations: &str,
    ) -> Result<Self, TextStatsError> {
        let bad = |name: &str, line: usize, detail: &str| TextStatsError::Resource {
            name: name.to_string(),
            detail: format!("line {line}: {detail}"),
        };
        let mut exceptions = HashMap::new();
        for (idx, line) in lemma_exceptions.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split('\t');
            let (Some(form), Some(class), Some(lemma)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad(
                    "lemma_exceptions.tsv",
                    idx + 1,
                    "expected form<TAB>pos<TAB>lemma",
                ));
            };
            let class = LemmaClass::parse(class)
                .ok_or_else(|| bad("lemma_exceptions.tsv", idx + 1, "unknown part of speech"))?;
            exceptions
                .entry((class, form.to_string()))
                .or_insert_with(|| lemma.to_string());
        }
        let mut lexicon = HashMap::new();
        for (idx, line) in pos_lexicon.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (word, tag) = line
                .split_once('\t')
                .ok_or_else(|| bad("pos_lexicon.tsv", idx + 1, "expected word<TAB>tag"))?;
            lexicon
                .entry(word.to_lowercase())
                .or_insert_with(|| FineTag::from_penn(tag.trim()));
        }
        Ok(Resources {
            dale_chall: word_lines(dale_chall).map(str::to_lowercase).collect(),
            stopwords: word_lines(stopwords).map(str::to_lowercase).collect(),
            lemma_exceptions: exceptions,
            lexicon,
            abbreviations: word_lines(abbreviations)
                .map(|w| w.trim_end_matches('.').to_lowercase())
                .collect(),
        })
    }

    pub fn dale_chall_words(&self) -> &HashSet<String> {
        &self.dale_chall
    }

    pub fn is_stopword(&self, lowercase: &str) -> bool {
        self.stopwords.contains(lowercase)
    }
}
