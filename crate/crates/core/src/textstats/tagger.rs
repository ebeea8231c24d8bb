//! Lexicon-first part-of-speech tagging and rule-based lemmatization.

use super::resources::{LemmaClass, Resources};
use super::Pos;

/// The Penn Treebank distinctions the lemmatizer needs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum FineTag {
    Noun,
    NounPlural,
    ProperNoun,
    ProperNounPlural,
    VerbBase,
    VerbPresent,
    Verb3rdSing,
    VerbPast,
    VerbParticiple,
    VerbGerund,
    Modal,
    Adj,
    AdjComparative,
    AdjSuperlative,
    Adv,
    AdvComparative,
    AdvSuperlative,
    Pronoun,
    Determiner,
    Adposition,
    Number,
    Other,
}

impl FineTag {
    pub(crate) fn from_penn(tag: &str) -> Self {
        match tag {
            "NN" => FineTag::Noun,
            "NNS" => FineTag::NounPlural,
            "NNP" => FineTag::ProperNoun,
            "NNPS" => FineTag::ProperNounPlural,
            "VB" => FineTag::VerbBase,
            "VBP" => FineTag::VerbPresent,
            "VBZ" => FineTag::Verb3rdSing,
            "VBD" => FineTag::VerbPast,
            "VBN" => FineTag::VerbParticiple,
            "VBG" => FineTag::VerbGerund,
            "MD" => FineTag::Modal,
            "JJ" => FineTag::Adj,
            "JJR" => FineTag::AdjComparative,
            "JJS" => FineTag::AdjSuperlative,
            "RB" | "WRB" => FineTag::Adv,
            "RBR" => FineTag::AdvComparative,
            "RBS" => FineTag::AdvSuperlative,
            "PRP" | "PRP$" | "WP" | "WP$" | "EX" => FineTag::Pronoun,
            "DT" | "PDT" | "WDT" => FineTag::Determiner,
            "IN" | "TO" | "RP" => FineTag::Adposition,
            "CD" => FineTag::Number,
            _ => FineTag::Other,
        }
    }

    pub(crate) fn coarse(self) -> Pos {
        use FineTag::*;
        match self {
            Noun | NounPlural | ProperNoun | ProperNounPlural => Pos::Noun,
            VerbBase | VerbPresent | Verb3rdSing | VerbPast | VerbParticiple | VerbGerund
            | Modal => Pos::Verb,
            Adj | AdjComparative | AdjSuperlative => Pos::Adj,
            Adv | AdvComparative | AdvSuperlative => Pos::Adv,
            Pronoun => Pos::Pron,
            Determiner => Pos::Det,
            Adposition => Pos::Adp,
            Number => Pos::Num,
            Other => Pos::Other,
        }
    }

    fn lemma_class(self) -> Option<LemmaClass> {
        use FineTag::*;
        match self {
            Noun | NounPlural | ProperNoun | ProperNounPlural => Some(LemmaClass::Noun),
            VerbBase | VerbPresent | Verb3rdSing | VerbPast | VerbParticiple | VerbGerund
            | Modal => Some(LemmaClass::Verb),
            Adj | AdjComparative | AdjSuperlative => Some(LemmaClass::Adj),
            Adv | AdvComparative | AdvSuperlative => Some(LemmaClass::Adv),
            _ => None,
        }
    }

    fn is_inflected(self) -> bool {
        use FineTag::*;
        matches!(
            self,
            NounPlural
                | ProperNounPlural
                | Verb3rdSing
                | VerbPast
                | VerbParticiple
                | VerbGerund
                | AdjComparative
                | AdjSuperlative
                | AdvComparative
                | AdvSuperlative
        )
    }
}

const NOUN_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ses", "s"),
    ("ves", "f"),
    ("xes", "x"),
    ("zes", "z"),
    ("ches", "ch"),
    ("shes", "sh"),
    ("men", "man"),
    ("ies", "y"),
];

const VERB_RULES: &[(&str, &str)] = &[
    ("s", ""),
    ("ies", "y"),
    ("es", "e"),
    ("es", ""),
    ("ed", "e"),
    ("ed", ""),
    ("ing", "e"),
    ("ing", ""),
];

const ADJ_RULES: &[(&str, &str)] = &[("er", ""), ("est", ""), ("er", "e"), ("est", "e")];

fn rules_for(class: LemmaClass) -> &'static [(&'static str, &'static str)] {
    match class {
        LemmaClass::Noun => NOUN_RULES,
        LemmaClass::Verb => VERB_RULES,
        LemmaClass::Adj => ADJ_RULES,
        LemmaClass::Adv => &[],
    }
}

/// Part before a clitic: "don't" -> "do", "it's" -> "it", "we're" -> "we".
fn contraction_head(word: &str) -> Option<&str> {
    if let Some(head) = word.strip_suffix("n't") {
        return Some(match head {
            "ca" => "can",
            "wo" => "will",
            "sha" => "shall",
            _ => head,
        });
    }
    for clitic in ["'s", "'re", "'ve", "'ll", "'d", "'m"] {
        if let Some(head) = word.strip_suffix(clitic) {
            return Some(head);
        }
    }
    None
}

fn suffix_guess(surface: &str, lower: &str) -> FineTag {
    let first_upper = surface.chars().next().is_some_and(char::is_uppercase);
    if first_upper {
        return if lower.ends_with('s') && !lower.ends_with("ss") {
            FineTag::ProperNounPlural
        } else {
            FineTag::ProperNoun
        };
    }
    const ADJ_SUFFIXES: [&str; 9] = [
        "ous", "ful", "able", "ible", "ive", "less", "ic", "ish", "al",
    ];
    if lower.ends_with("ly") {
        FineTag::Adv
    } else if lower.ends_with("ing") && lower.len() > 4 {
        FineTag::VerbGerund
    } else if lower.ends_with("ed") && lower.len() > 3 {
        FineTag::VerbPast
    } else if ADJ_SUFFIXES.iter().any(|s| lower.ends_with(s)) {
        FineTag::Adj
    } else if lower.ends_with('s')
        && !lower.ends_with("ss")
        && !lower.ends_with("us")
        && !lower.ends_with("is")
    {
        FineTag::NounPlural
    } else {
        FineTag::Noun
    }
}

/// Tags a word token. `lower` is the lowercase surface with typographic
/// apostrophes folded to ASCII.
pub(crate) fn tag_word(res: &Resources, surface: &str, lower: &str) -> FineTag {
    if lower
        .chars()
        .all(|c| c.is_numeric() || c == '.' || c == ',')
    {
        return FineTag::Number;
    }
    if let Some(&tag) = res.lexicon.get(lower) {
        return tag;
    }
    if let Some(head) = contraction_head(lower) {
        if let Some(&tag) = res.lexicon.get(head) {
            return tag;
        }
    }
    if let Some((_, last)) = lower.rsplit_once('-') {
        if let Some(&tag) = res.lexicon.get(last) {
            return tag;
        }
    }
    suffix_guess(surface, lower)
}

fn strip_doubled(stem: &str) -> Option<&str> {
    let bytes = stem.as_bytes();
    let n = bytes.len();
    if n >= 3 && bytes[n - 1] == bytes[n - 2] && b"bdgklmnprtz".contains(&bytes[n - 1]) {
        Some(&stem[..n - 1])
    } else {
        None
    }
}

/// Lemma of a word token given its tag.
pub(crate) fn lemmatize(res: &Resources, lower: &str, tag: FineTag) -> String {
    if let Some(head) = contraction_head(lower) {
        if let Some(&head_tag) = res.lexicon.get(head) {
            return lemmatize(res, head, head_tag);
        }
    }
    let Some(class) = tag.lemma_class() else {
        return lower.to_string();
    };
    if let Some(lemma) = res.lemma_exceptions.get(&(class, lower.to_string())) {
        return lemma.clone();
    }
    if !tag.is_inflected() {
        return lower.to_string();
    }

    let mut first_known: Option<String> = None;
    let mut first_any: Option<String> = None;
    for &(suffix, replacement) in rules_for(class) {
        let Some(stem) = lower.strip_suffix(suffix) else {
            continue;
        };
        if stem.is_empty() {
            continue;
        }
        let mut candidates = vec![format!("{stem}{replacement}")];
        if replacement.is_empty() {
            if let Some(undoubled) = strip_doubled(stem) {
                candidates.push(undoubled.to_string());
            }
        }
        for candidate in candidates {
            match res.lexicon.get(&candidate) {
                Some(found) if found.lemma_class() == Some(class) && !found.is_inflected() => {
                    return candidate
                }
                Some(_) if first_known.is_none() => first_known = Some(candidate),
                None if first_any.is_none() => first_any = Some(candidate),
                _ => {}
            }
        }
    }
    first_known
        .or_else(|| {
            (!res.lexicon.contains_key(lower))
                .then_some(first_any)
                .flatten()
        })
        .unwrap_or_else(|| lower.to_string())
}
