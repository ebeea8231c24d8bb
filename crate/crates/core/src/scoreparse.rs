//! Score recovery from free-form model output: a deterministic section
//! scanner first, then the few-shot JSON-conversion prompt as fallback.

use std::collections::BTreeMap;
use std::fmt;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::corpus::{normalize_trait, EssaySetMeta};
use crate::llm::{LlmClient, LlmRequest, DEFAULT_MAX_TOKENS};
use crate::promptkit::build_parsing_prompt;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseSource {
    Deterministic,
    LlmFallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureReason {
    NoScoreFound,
    NonNumeric,
    InvalidJson,
    TraitMismatch,
    LlmError,
    /// Score outside the set's range with the reject policy.
    OutOfRange,
}

impl fmt::Display for FailureReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FailureReason::NoScoreFound => "no_score_found",
            FailureReason::NonNumeric => "non_numeric",
            FailureReason::InvalidJson => "invalid_json",
            FailureReason::TraitMismatch => "trait_mismatch",
            FailureReason::LlmError => "llm_error",
            FailureReason::OutOfRange => "out_of_range",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub reason: FailureReason,
    pub detail: String,
    pub raw: String,
}

impl fmt::Display for ParseFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.reason, self.detail)
    }
}

impl std::error::Error for ParseFailure {}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedScore {
    /// Scores of the set's declared traits, keyed by the declared name.
    /// Always contains the evaluated trait.
    pub scores: BTreeMap<String, f64>,
    /// Traits the output mentions that the set does not declare.
    pub extra_scores: BTreeMap<String, f64>,
    pub explanation: Option<String>,
    pub feedback: Option<String>,
    pub source: ParseSource,
    /// Some score was moved into the declared range.
    pub clamped: bool,
    pub raw: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParserMode {
    /// Deterministic scanner, model fallback on failure.
    #[default]
    Hybrid,
    /// Always use the model.
    LlmOnly,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangePolicy {
    #[default]
    Clamp,
    Reject,
}

/// Settings for the model-backed path.
#[derive(Debug, Clone, PartialEq)]
pub struct ParseOptions {
    pub mode: ParserMode,
    pub range: RangePolicy,
    pub model: String,
    pub max_tokens: u32,
}

impl ParseOptions {
    pub fn new(model: impl Into<String>) -> Self {
        ParseOptions {
            mode: ParserMode::Hybrid,
            range: RangePolicy::Clamp,
            model: model.into(),
            max_tokens: DEFAULT_MAX_TOKENS,
        }
    }
}

fn failure(reason: FailureReason, detail: impl Into<String>, raw: &str) -> ParseFailure {
    ParseFailure {
        reason,
        detail: detail.into(),
        raw: raw.to_string(),
    }
}

/// Nearest grid point, ties away from the lower neighbour.
pub fn snap_to_grid(value: f64, origin: f64, step: f64) -> f64 {
    let steps = (value - origin) / step;
    let snapped = (steps + 0.5 + GRID_EPS).floor();
    origin + snapped * step
}

/// Candidate trait scores in order of appearance.
type Found = Vec<(String, f64)>;

fn trait_key(name: &str) -> String {
    let norm = normalize_trait(name);
    norm.strip_suffix(" score")
        .map(str::to_string)
        .unwrap_or(norm)
}

fn declared_name<'m>(meta: &'m EssaySetMeta, name: &str) -> Option<&'m str> {
    let key = trait_key(name);
    meta.trait_names
        .iter()
        .find(|t| normalize_trait(t) == key)
        .map(String::as_str)
}

/// Turns candidate scores into a `ParsedScore`: maps names onto declared
/// traits, snaps to the score grid, then clamps or rejects.
fn finalize(
    found: Found,
    meta: &EssaySetMeta,
    policy: RangePolicy,
    source: ParseSource,
    explanation: Option<String>,
    feedback: Option<String>,
    raw: &str,
) -> Result<ParsedScore, ParseFailure> {
    let mut scores = BTreeMap::new();
    let mut extra_scores = BTreeMap::new();
    let mut clamped = false;
    for (name, value) in found {
        if !value.is_finite() {
            return Err(failure(
                FailureReason::NonNumeric,
                format!("score for `{name}` is not finite"),
                raw,
            ));
        }
        let Some(declared) = declared_name(meta, &name) else {
            extra_scores.entry(name.trim().to_string()).or_insert(value);
            continue;
        };
        if scores.contains_key(declared) {
            continue;
        }
        let (lo, hi) = meta.trait_range(declared);
        let snapped = snap_to_grid(value, lo as f64, meta.score_step);
        let bounded = snapped.clamp(lo as f64, hi as f64);
        if (bounded - snapped).abs() > GRID_EPS {
            if policy == RangePolicy::Reject {
                return Err(failure(
                    FailureReason::OutOfRange,
                    format!("`{declared}` = {value} outside {lo}..{hi}"),
                    raw,
                ));
            }
            log::info!("clamped `{declared}` from {value} to {bounded}");
            clamped = true;
        }
        scores.insert(declared.to_string(), bounded);
    }
    let target = meta.target_trait();
    if !scores.contains_key(target) {
        let detail = if scores.is_empty() && extra_scores.is_empty() {
            format!("no score for `{target}`")
        } else {
            let seen: Vec<&str> = scores
                .keys()
                .chain(extra_scores.keys())
                .map(String::as_str)
                .collect();
            format!("expected `{target}`, found {}", seen.join(", "))
        };
        return Err(failure(FailureReason::TraitMismatch, detail, raw));
    }
    Ok(ParsedScore {
        scores,
        extra_scores,
        explanation,
        feedback,
        source,
        clamped,
        raw: raw.to_string(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Preamble,
    Score,
    Explanation,
    Feedback,
    Other,
}

struct Label<'a> {
    name: String,
    rest: &'a str,
    hashed: bool,
    bulleted: bool,
}

static NUMBER: Lazy<Regex> = Lazy::new(|| Regex::new(r"^[\s\[(*_]*([+-]?\d+(?:\.\d+)?)").unwrap());

/// `[#..] [- ] [**]Name[**]: rest` on one line.
fn label(line: &str) -> Option<Label<'_>> {
    let mut s = line.trim_start();
    let hashed = s.starts_with('#');
    s = s.trim_start_matches('#').trim_start();
    let mut bulleted = false;
    for bullet in ["- ", "* ", "• ", "+ "] {
        if let Some(rest) = s.strip_prefix(bullet) {
            s = rest.trim_start();
            bulleted = true;
            break;
        }
    }
    let colon = s.find(':')?;
    let name: String = s[..colon].replace(['*', '_'], "");
    let name = name.trim();
    if name.is_empty()
        || name.chars().count() > 60
        || !name.chars().next().is_some_and(char::is_alphabetic)
        || !name
            .chars()
            .all(|c| c.is_alphanumeric() || " '&/-()".contains(c))
    {
        return None;
    }
    let rest = s[colon + 1..].trim().trim_start_matches(['*', '_']).trim();
    Some(Label {
        name: name.to_string(),
        rest,
        hashed,
        bulleted,
    })
}

fn section_of(name: &str) -> Option<Section> {
    match normalize_trait(name).as_str() {
        "score" | "scores" | "final score" | "final scores" | "grade" | "grades"
        | "final grade" => Some(Section::Score),
        "explanation" | "explanations" | "reasoning" | "rationale" | "justification" => {
            Some(Section::Explanation)
        }
        "feedback" | "feedbacks" | "comments" => Some(Section::Feedback),
        _ => None,
    }
}

fn leading_number(text: &str) -> Option<f64> {
    NUMBER.captures(text)?.get(1)?.as_str().parse().ok()
}

fn join_trimmed(lines: &[&str]) -> Option<String> {
    let text = lines.join("\n");
    let text = text.trim();
    (!text.is_empty()).then(|| text.to_string())
}

/// Deterministic extraction. Never panics; pure.
pub fn parse_deterministic(
    raw: &str,
    meta: &EssaySetMeta,
    policy: RangePolicy,
) -> Result<ParsedScore, ParseFailure> {
    let mut section = Section::Preamble;
    let mut saw_score_header = false;
    let mut inline_score: Option<f64> = None;
    let mut block: Found = Vec::new();
    let mut anywhere: Found = Vec::new();
    let mut non_numeric: Vec<String> = Vec::new();
    let mut explanation: Vec<&str> = Vec::new();
    let mut feedback: Vec<&str> = Vec::new();

    for line in raw.lines() {
        let parsed = label(line);
        if let Some(l) = &parsed {
            let known = section_of(&l.name);
            if let (Some(next), false) = (known, l.bulleted) {
                section = next;
                match next {
                    Section::Score => {
                        saw_score_header = true;
                        if inline_score.is_none() {
                            inline_score = leading_number(l.rest);
                        }
                    }
                    Section::Explanation => explanation.push(l.rest),
                    Section::Feedback => feedback.push(l.rest),
                    _ => {}
                }
                continue;
            }
            if l.hashed {
                section = Section::Other;
                continue;
            }
            match leading_number(l.rest) {
                Some(value) => {
                    if section == Section::Score {
                        block.push((l.name.clone(), value));
                    }
                    if declared_name(meta, &l.name).is_some() {
                        anywhere.push((l.name.clone(), value));
                    }
                }
                None => {
                    if declared_name(meta, &l.name).is_some()
                        && (section == Section::Score || l.bulleted)
                    {
                        non_numeric.push(format!("{}: {}", l.name, l.rest));
                    }
                }
            }
        } else if line.trim_start().starts_with('#') {
            section = Section::Other;
            continue;
        }
        match section {
            Section::Explanation if parsed.is_none() => explanation.push(line),
            Section::Feedback if parsed.is_none() => feedback.push(line),
            _ => {}
        }
    }

    let explanation = join_trimmed(&explanation);
    let feedback = join_trimmed(&feedback);
    let target = meta.target_trait().to_string();
    let has_target = |found: &Found| {
        found
            .iter()
            .any(|(n, _)| declared_name(meta, n) == Some(target.as_str()))
    };

    let chosen = if has_target(&block) {
        block
    } else if has_target(&anywhere) {
        anywhere
    } else if let (Some(value), [_single]) = (inline_score, meta.trait_names.as_slice()) {
        vec![(target.clone(), value)]
    } else if !non_numeric.is_empty() {
        return Err(failure(
            FailureReason::NonNumeric,
            non_numeric.join("; "),
            raw,
        ));
    } else if !block.is_empty() {
        let names: Vec<&str> = block.iter().map(|(n, _)| n.as_str()).collect();
        return Err(failure(
            FailureReason::TraitMismatch,
            format!("expected `{target}`, found {}", names.join(", ")),
            raw,
        ));
    } else {
        let detail = if saw_score_header {
            "score section has no trait scores"
        } else {
            "no score section"
        };
        return Err(failure(FailureReason::NoScoreFound, detail, raw));
    };
    finalize(
        chosen,
        meta,
        policy,
        ParseSource::Deterministic,
        explanation,
        feedback,
        raw,
    )
}

/// Removes a Markdown code fence around the payload, if any.
fn strip_code_fences(text: &str) -> &str {
    let Some(open) = text.find("```") else {
        return text.trim();
    };
    let after = &text[open + 3..];
    let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
    let body = &after[body_start..];
    match body.find("```") {
        Some(close) => body[..close].trim(),
        None => body.trim(),
    }
}

fn parse_json_reply(reply: &str) -> Result<Value, String> {
    let body = strip_code_fences(reply);
    match serde_json::from_str::<Value>(body) {
        Ok(v) => Ok(v),
        Err(first) => {
            let (Some(start), Some(end)) = (body.find('{'), body.rfind('}')) else {
                return Err(first.to_string());
            };
            if end <= start {
                return Err(first.to_string());
            }
            serde_json::from_str::<Value>(&body[start..=end]).map_err(|e| e.to_string())
        }
    }
}

fn json_number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
}

fn json_text(object: &serde_json::Map<String, Value>, keys: &[&str]) -> Option<String> {
    object.iter().find_map(|(k, v)| {
        if !keys.contains(&normalize_trait(k).as_str()) {
            return None;
        }
        match v {
            Value::String(s) => Some(s.trim().to_string()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
        .filter(|s| !s.is_empty())
    })
}

/// Interprets the fallback model's JSON reply.
pub fn interpret_fallback_reply(
    reply: &str,
    raw: &str,
    meta: &EssaySetMeta,
    policy: RangePolicy,
) -> Result<ParsedScore, ParseFailure> {
    let value = parse_json_reply(reply).map_err(|e| failure(FailureReason::InvalidJson, e, raw))?;
    let Value::Object(object) = value else {
        return Err(failure(
            FailureReason::InvalidJson,
            "reply is not a JSON object",
            raw,
        ));
    };
    let score = object
        .iter()
        .find(|(k, _)| matches!(normalize_trait(k).as_str(), "score" | "scores"))
        .map(|(_, v)| v)
        .ok_or_else(|| failure(FailureReason::NoScoreFound, "no `Score` key", raw))?;
    let found: Found = match score {
        Value::Object(traits) => {
            let mut found = Vec::new();
            for (name, v) in traits {
                match json_number(v) {
                    Some(n) => found.push((name.clone(), n)),
                    None if declared_name(meta, name).is_some() => {
                        return Err(failure(
                            FailureReason::NonNumeric,
                            format!("`{name}` = {v}"),
                            raw,
                        ));
                    }
                    None => {}
                }
            }
            found
        }
        v if meta.trait_names.len() == 1 => match json_number(v) {
            Some(n) => vec![(meta.target_trait().to_string(), n)],
            None => {
                return Err(failure(
                    FailureReason::NonNumeric,
                    format!("`Score` = {v}"),
                    raw,
                ))
            }
        },
        v => {
            return Err(failure(
                FailureReason::NonNumeric,
                format!("`Score` = {v}"),
                raw,
            ))
        }
    };
    let explanation = json_text(&object, &["explanation", "explanations"]);
    let feedback = json_text(&object, &["feedback", "feedbacks"]);
    finalize(
        found,
        meta,
        policy,
        ParseSource::LlmFallback,
        explanation,
        feedback,
        raw,
    )
}

/// Asks the model to convert `raw` to JSON, then interprets the reply.
pub fn parse_with_llm(
    raw: &str,
    meta: &EssaySetMeta,
    client: &LlmClient,
    options: &ParseOptions,
) -> Result<ParsedScore, ParseFailure> {
    let prompt = build_parsing_prompt(raw)
        .map_err(|e| failure(FailureReason::NoScoreFound, e.to_string(), raw))?;
    let request = LlmRequest {
        max_tokens: options.max_tokens,
        ..LlmRequest::new(options.model.clone(), prompt)
    };
    let reply = client
        .complete(&request)
        .map_err(|e| failure(FailureReason::LlmError, e.to_string(), raw))?;
    interpret_fallback_reply(&reply.text, raw, meta, options.range)
}

/// Full parser. Without a client, hybrid mode runs the deterministic path
/// only and llm-only mode fails.
pub fn parse(
    raw: &str,
    meta: &EssaySetMeta,
    client: Option<&LlmClient>,
    options: &ParseOptions,
) -> Result<ParsedScore, ParseFailure> {
    let deterministic = match options.mode {
        ParserMode::Hybrid => match parse_deterministic(raw, meta, options.range) {
            Ok(parsed) => return Ok(parsed),
            // Range rejection is final; the fallback would read the same number.
            Err(f) if f.reason == FailureReason::OutOfRange => return Err(f),
            Err(f) => Some(f),
        },
        ParserMode::LlmOnly => None,
    };
    let Some(client) = client else {
        return Err(deterministic.unwrap_or_else(|| {
            failure(FailureReason::LlmError, "no parsing model configured", raw)
        }));
    };
    parse_with_llm(raw, meta, client, options).map_err(|mut f| {
        if let Some(d) = deterministic {
            f.detail = format!("{} (deterministic: {})", f.detail, d);
        }
        f
    })
}

/// Hex SHA-256 of a raw output.
pub fn raw_digest(raw: &str) -> String {
    hex::encode(Sha256::digest(raw.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureInfo {
    pub reason: FailureReason,
    pub detail: String,
}

/// One line of `parsed.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseRecord {
    pub essay_id: String,
    pub essay_set_id: String,
    pub status: ParseStatus,
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub extra_scores: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub source: Option<ParseSource>,
    pub clamped: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feedback: Option<String>,
    pub raw_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureInfo>,
}

impl ParseRecord {
    pub fn new(
        essay_id: &str,
        essay_set_id: &str,
        raw: &str,
        outcome: &Result<ParsedScore, ParseFailure>,
    ) -> Self {
        let base = ParseRecord {
            essay_id: essay_id.to_string(),
            essay_set_id: essay_set_id.to_string(),
            status: ParseStatus::Ok,
            scores: BTreeMap::new(),
            extra_scores: BTreeMap::new(),
            source: None,
            clamped: false,
            explanation: None,
            feedback: None,
            raw_digest: raw_digest(raw),
            failure: None,
        };
        match outcome {
            Ok(p) => ParseRecord {
                scores: p.scores.clone(),
                extra_scores: p.extra_scores.clone(),
                source: Some(p.source),
                clamped: p.clamped,
                explanation: p.explanation.clone(),
                feedback: p.feedback.clone(),
                ..base
            },
            Err(f) => ParseRecord {
                status: ParseStatus::Failed,
                failure: Some(FailureInfo {
                    reason: f.reason,
                    detail: f.detail.clone(),
                }),
                ..base
            },
        }
    }

    /// Score of the given trait when parsing succeeded.
    pub fn score(&self, trait_name: &str) -> Option<f64> {
        match self.status {
            ParseStatus::Ok => self.scores.get(trait_name).copied(),
            ParseStatus::Failed => None,
        }
    }
}
