//! Rule-based word and sentence segmentation.
//!
//! A word token is a maximal run of letters, digits, apostrophes and hyphens
//! (apostrophes and hyphens trimmed from both ends), with `.`/`,` allowed
//! between two digits. ASAP anonymization markers (`@CAPS1`, `@ORGANIZATION1`)
//! are single word tokens. Every other non-space character is its own token.
//!
//! A sentence ends at `.`, `!`, `?` or `…` (plus any directly following
//! terminators and closing quotes or brackets) when the next token starts
//! with an uppercase letter after whitespace, when a blank line follows, or
//! at end of text. A period
//! after a listed abbreviation does not end a sentence.

use serde::{Deserialize, Serialize};

use super::resources::Resources;
use super::tagger::{lemmatize, tag_word};
use super::Pos;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub normalized: String,
    pub lemma: String,
    pub pos: Pos,
    pub is_stopword: bool,
    pub is_word: bool,
    pub is_anonymized: bool,
    /// Byte offsets into the source text.
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub tokens: Vec<Token>,
    /// Half-open `[start, end)` token index ranges, one per sentence.
    pub sentence_spans: Vec<(usize, usize)>,
}

impl TokenizedText {
    pub fn words(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| t.is_word)
    }

    pub fn sentence_count(&self) -> usize {
        self.sentence_spans.len()
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{02bc}')
}

fn is_joiner(c: char) -> bool {
    is_apostrophe(c) || c == '-'
}

/// ASCII punctuation plus the common Unicode punctuation blocks.
pub fn is_punctuation(c: char) -> bool {
    c.is_ascii_punctuation()
        || matches!(c,
            '\u{00a1}' | '\u{00a7}' | '\u{00ab}' | '\u{00b6}' | '\u{00b7}' | '\u{00bb}' | '\u{00bf}'
            | '\u{02bc}'
            | '\u{2010}'..='\u{2027}'
            | '\u{2030}'..='\u{205e}'
            | '\u{3001}'..='\u{3003}'
            | '\u{3008}'..='\u{3011}'
            | '\u{ff01}'..='\u{ff0f}'
            | '\u{ff1a}'..='\u{ff1f}')
}

/// Lowercase with typographic apostrophes folded to `'`.
pub(crate) fn fold(surface: &str) -> String {
    surface
        .chars()
        .map(|c| if is_apostrophe(c) { '\'' } else { c })
        .flat_map(char::to_lowercase)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Word,
    Anonymized,
    Symbol,
}

fn anonymization_len(rest: &str) -> Option<usize> {
    let mut chars = rest.char_indices();
    chars.next().filter(|&(_, c)| c == '@')?;
    let mut end = 1;
    let mut letters = 0;
    let mut in_digits = false;
    for (i, c) in chars {
        if c.is_ascii_alphabetic() && !in_digits {
            letters += 1;
        } else if c.is_ascii_digit() && letters > 0 {
            in_digits = true;
        } else {
            break;
        }
        end = i + c.len_utf8();
    }
    (letters > 0).then_some(end)
}

fn segment(text: &str) -> Vec<(usize, usize, Kind)> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut i = 0;
    while i < chars.len() {
        let (start, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        if c == '@' {
            if let Some(len) = anonymization_len(&text[start..]) {
                out.push((start, start + len, Kind::Anonymized));
                while i < chars.len() && chars[i].0 < start + len {
                    i += 1;
                }
                continue;
            }
        }
        if c.is_alphanumeric() || is_joiner(c) {
            let mut j = i;
            while j < chars.len() {
                let cj = chars[j].1;
                let digit_sep = (cj == '.' || cj == ',')
                    && j > i
                    && chars[j - 1].1.is_numeric()
                    && chars.get(j + 1).is_some_and(|&(_, n)| n.is_numeric());
                if cj.is_alphanumeric() || is_joiner(cj) || digit_sep {
                    j += 1;
                } else {
                    break;
                }
            }
            let mut lo = i;
            let mut hi = j;
            while lo < hi && is_joiner(chars[lo].1) {
                lo += 1;
            }
            while hi > lo && is_joiner(chars[hi - 1].1) {
                hi -= 1;
            }
            for k in i..lo {
                out.push((byte_at(k), byte_at(k + 1), Kind::Symbol));
            }
            if lo < hi {
                out.push((byte_at(lo), byte_at(hi), Kind::Word));
            }
            for k in hi..j {
                out.push((byte_at(k), byte_at(k + 1), Kind::Symbol));
            }
            i = j;
            continue;
        }
        out.push((start, byte_at(i + 1), Kind::Symbol));
        i += 1;
    }
    out
}

fn is_terminator(surface: &str) -> bool {
    matches!(surface, "." | "!" | "?" | "\u{2026}")
}

fn is_closer(surface: &str) -> bool {
    matches!(
        surface,
        "\"" | "'" | ")" | "]" | "}" | "\u{2019}" | "\u{201d}" | "\u{00bb}"
    )
}

fn starts_sentence(token: &Token) -> bool {
    token.is_anonymized
        || token
            .surface
            .chars()
            .find(|c| c.is_alphanumeric())
            .is_some_and(char::is_uppercase)
            && token
                .surface
                .chars()
                .next()
                .is_some_and(|c| !c.is_numeric())
}

/// The whitespace-delimited chunk ending right before byte `end`, lowercased
/// and stripped of leading punctuation: `(e.g` for "(e.g." etc.
fn chunk_before(text: &str, end: usize) -> String {
    let head = &text[..end];
    let start = head
        .char_indices()
        .rev()
        .find(|(_, c)| c.is_whitespace())
        .map_or(0, |(i, c)| i + c.len_utf8());
    head[start..]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase()
}

fn split_sentences(text: &str, tokens: &[Token], res: &Resources) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = 0;
    let mut i = 0;
    while i < tokens.len() {
        if !is_terminator(&tokens[i].surface) {
            i += 1;
            continue;
        }
        if tokens[i].surface == "."
            && res
                .abbreviations
                .contains(&chunk_before(text, tokens[i].start))
        {
            i += 1;
            continue;
        }
        let mut j = i + 1;
        while j < tokens.len()
            && tokens[j].start == tokens[j - 1].end
            && (is_terminator(&tokens[j].surface) || is_closer(&tokens[j].surface))
        {
            j += 1;
        }
        let boundary = j == tokens.len() || {
            let gap = &text[tokens[j - 1].end..tokens[j].start];
            let paragraph_break = gap.chars().filter(|&c| c == '\n').count() >= 2;
            !gap.is_empty()
                && gap.chars().all(char::is_whitespace)
                && (paragraph_break || starts_sentence(&tokens[j]))
        };
        if boundary {
            spans.push((start, j));
            start = j;
        }
        i = j;
    }
    if start < tokens.len() {
        spans.push((start, tokens.len()));
    }
    spans
}

impl Resources {
    pub fn tokenize(&self, text: &str) -> TokenizedText {
        let tokens: Vec<Token> = segment(text)
            .into_iter()
            .map(|(start, end, kind)| {
                let surface = &text[start..end];
                let normalized = fold(surface);
                match kind {
                    Kind::Word => {
                        let tag = tag_word(self, surface, &normalized);
                        let lemma = lemmatize(self, &normalized, tag);
                        Token {
                            surface: surface.to_string(),
                            is_stopword: self.is_stopword(&normalized),
                            lemma: if lemma.is_empty() {
                                normalized.clone()
                            } else {
                                lemma
                            },
                            normalized,
                            pos: tag.coarse(),
                            is_word: true,
                            is_anonymized: false,
                            start,
                            end,
                        }
                    }
                    Kind::Anonymized => Token {
                        surface: surface.to_string(),
                        lemma: normalized.clone(),
                        normalized,
                        pos: Pos::Noun,
                        is_stopword: false,
                        is_word: true,
                        is_anonymized: true,
                        start,
                        end,
                    },
                    Kind::Symbol => Token {
                        surface: surface.to_string(),
                        lemma: surface.to_string(),
                        normalized,
                        pos: if surface.chars().all(is_punctuation) {
                            Pos::Punct
                        } else {
                            Pos::Other
                        },
                        is_stopword: false,
                        is_word: false,
                        is_anonymized: false,
                        start,
                        end,
                    },
                }
            })
            .collect();
        let sentence_spans = split_sentences(text, &tokens, self);
        TokenizedText {
            tokens,
            sentence_spans,
        }
    }
}

/// Tokenizes with the bundled resources.
pub fn tokenize(text: &str) -> TokenizedText {
    Resources::bundled().tokenize(text)
}
