//! Essay corpora: ASAP-style TSV and ELLIPSE-style CSV ingestion, essay-set
//! metadata, and deterministic stratified fold splits.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, Read, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

const GRID_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("malformed delimited input: {0}")]
    Csv(#[from] csv::Error),
    #[error("invalid essay-set metadata: {0}")]
    InvalidMeta(String),
    #[error("malformed normalized essay record on line {line}: {detail}")]
    Normalized { line: usize, detail: String },
    #[error("k must be at least 2, got {0}")]
    InvalidK(usize),
    #[error("no essays to split")]
    NoEssays,
    #[error("duplicate essay id `{0}`")]
    DuplicateId(String),
    #[error("k = {k} exceeds the size of essay set `{set}` ({size} essays)")]
    SetTooSmall { set: String, size: usize, k: usize },
    #[error("the train/dev/test role template needs k = 5, got k = {0}")]
    RoleTemplate(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EssayType {
    Argumentative,
    SourceDependent,
    Narrative,
    #[default]
    Unknown,
}

/// Scoring rubric of one essay set (one writing task).
///
/// The first entry of `trait_names` is the evaluated trait: its range is
/// `score_min..=score_max` and it is compared against `Essay::gold_overall`.
/// Other traits may declare their own integer range in `trait_ranges`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EssaySetMeta {
    pub essay_set_id: String,
    pub prompt_text: String,
    pub score_min: i64,
    pub score_max: i64,
    pub score_step: f64,
    pub trait_names: Vec<String>,
    #[serde(default)]
    pub trait_ranges: BTreeMap<String, (i64, i64)>,
    #[serde(default)]
    pub essay_type: EssayType,
    /// Column holding the gold score for this set, overriding the loader's
    /// default score column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score_column: Option<String>,
}

impl EssaySetMeta {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let bad = |msg: String| {
            Err(CorpusError::InvalidMeta(format!(
                "set `{}`: {msg}",
                self.essay_set_id
            )))
        };
        if self.essay_set_id.trim().is_empty() {
            return Err(CorpusError::InvalidMeta("empty essay set id".into()));
        }
        if self.score_min == self.score_max {
            return bad("degenerate score range".into());
        }
        if self.score_min > self.score_max {
            return bad(format!(
                "score_min {} > score_max {}",
                self.score_min, self.score_max
            ));
        }
        if self.score_step <= 0.0 || !self.score_step.is_finite() {
            return bad(format!(
                "score_step must be positive, got {}",
                self.score_step
            ));
        }
        let steps = (self.score_max - self.score_min) as f64 / self.score_step;
        if (steps - steps.round()).abs() > GRID_EPS {
            return bad(format!(
                "score_step {} does not divide the range {}..{}",
                self.score_step, self.score_min, self.score_max
            ));
        }
        if self.trait_names.is_empty() {
            return bad("at least one trait name is required".into());
        }
        let mut seen = BTreeSet::new();
        for name in &self.trait_names {
            if name.trim().is_empty() {
                return bad("empty trait name".into());
            }
            if !seen.insert(normalize_trait(name)) {
                return bad(format!("duplicate trait `{name}`"));
            }
        }
        for (name, &(lo, hi)) in &self.trait_ranges {
            if !self.trait_names.iter().any(|t| t == name) {
                return bad(format!("range given for unknown trait `{name}`"));
            }
            if lo >= hi {
                return bad(format!("degenerate score range for trait `{name}`"));
            }
        }
        if let Some(&(lo, hi)) = self.trait_ranges.get(self.target_trait()) {
            if (lo, hi) != (self.score_min, self.score_max) {
                return bad("the evaluated trait's range must equal score_min..score_max".into());
            }
        }
        Ok(())
    }

    pub fn target_trait(&self) -> &str {
        &self.trait_names[0]
    }

    pub fn trait_range(&self, name: &str) -> (i64, i64) {
        self.trait_ranges
            .get(name)
            .copied()
            .unwrap_or((self.score_min, self.score_max))
    }

    /// Number of grid points between `score_min` and `score_max` inclusive.
    pub fn num_bins(&self) -> usize {
        ((self.score_max - self.score_min) as f64 / self.score_step).round() as usize + 1
    }

    pub fn on_grid(&self, score: f64) -> bool {
        let steps = (score - self.score_min as f64) / self.score_step;
        score.is_finite() && (steps - steps.round()).abs() <= GRID_EPS
    }

    pub fn in_range(&self, score: f64) -> bool {
        score >= self.score_min as f64 - GRID_EPS && score <= self.score_max as f64 + GRID_EPS
    }

    /// Default metadata for an ELLIPSE prompt: overall score 1-5 in half points.
    pub fn ellipse_default(set_id: &str) -> Self {
        EssaySetMeta {
            essay_set_id: set_id.to_string(),
            prompt_text: set_id.to_string(),
            score_min: 1,
            score_max: 5,
            score_step: 0.5,
            trait_names: vec!["Overall".to_string()],
            trait_ranges: BTreeMap::new(),
            essay_type: EssayType::Argumentative,
            score_column: None,
        }
    }
}

/// Lowercases and collapses internal whitespace; used for trait-name matching.
pub fn normalize_trait(name: &str) -> String {
    name.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Essay-set metadata keyed by set id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MetaCatalog {
    sets: BTreeMap<String, EssaySetMeta>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    #[serde(default)]
    essay_set: Vec<MetaEntry>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaEntry {
    id: String,
    prompt: Option<String>,
    prompt_file: Option<PathBuf>,
    score_min: i64,
    score_max: i64,
    #[serde(default = "one")]
    score_step: f64,
    #[serde(default = "overall")]
    traits: Vec<String>,
    #[serde(default)]
    trait_ranges: BTreeMap<String, (i64, i64)>,
    #[serde(default)]
    essay_type: EssayType,
    score_column: Option<String>,
}

fn one() -> f64 {
    1.0
}

fn overall() -> Vec<String> {
    vec!["Overall".to_string()]
}

impl MetaCatalog {
    pub fn new(sets: impl IntoIterator<Item = EssaySetMeta>) -> Result<Self, CorpusError> {
        let mut catalog = MetaCatalog::default();
        for meta in sets {
            catalog.insert(meta)?;
        }
        Ok(catalog)
    }

    pub fn insert(&mut self, meta: EssaySetMeta) -> Result<(), CorpusError> {
        meta.validate()?;
        if self.sets.contains_key(&meta.essay_set_id) {
            return Err(CorpusError::InvalidMeta(format!(
                "essay set `{}` declared twice",
                meta.essay_set_id
            )));
        }
        self.sets.insert(meta.essay_set_id.clone(), meta);
        Ok(())
    }

    pub fn get(&self, set_id: &str) -> Option<&EssaySetMeta> {
        self.sets.get(set_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &EssaySetMeta> {
        self.sets.values()
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Loads a TOML metadata file. Relative `prompt_file` paths resolve
    /// against the metadata file's directory.
    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        Self::from_toml_str(&text, base)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, CorpusError> {
        let file: MetaFile =
            toml::from_str(text).map_err(|e| CorpusError::InvalidMeta(e.message().to_string()))?;
        let mut catalog = MetaCatalog::default();
        for entry in file.essay_set {
            let prompt_text = match (entry.prompt, entry.prompt_file) {
                (Some(p), None) => p,
                (None, Some(file)) => {
                    let full = base_dir.join(file);
                    fs::read_to_string(&full)
                        .map_err(io_err(&full))?
                        .trim_end()
                        .to_string()
                }
                (Some(_), Some(_)) => {
                    return Err(CorpusError::InvalidMeta(format!(
                        "set `{}`: give either prompt or prompt_file, not both",
                        entry.id
                    )))
                }
                (None, None) => {
                    return Err(CorpusError::InvalidMeta(format!(
                        "set `{}`: prompt or prompt_file is required",
                        entry.id
                    )))
                }
            };
            catalog.insert(EssaySetMeta {
                essay_set_id: entry.id,
                prompt_text,
                score_min: entry.score_min,
                score_max: entry.score_max,
                score_step: entry.score_step,
                trait_names: entry.traits,
                trait_ranges: entry.trait_ranges,
                essay_type: entry.essay_type,
                score_column: entry.score_column,
            })?;
        }
        Ok(catalog)
    }

    /// Adds ELLIPSE defaults for every set referenced by `essays` that has no
    /// entry yet.
    pub fn with_ellipse_defaults(mut self, essays: &[Essay]) -> Self {
        for essay in essays {
            if !self.sets.contains_key(&essay.essay_set_id) {
                let meta = EssaySetMeta::ellipse_default(&essay.essay_set_id);
                self.sets.insert(meta.essay_set_id.clone(), meta);
            }
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Essay {
    pub id: String,
    pub essay_set_id: String,
    pub text: String,
    pub gold_overall: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_traits: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade_band: Option<String>,
}

/// A data row that could not be turned into an essay. `row` is the 1-based
/// data-row index (the header is not counted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reject {
    pub row: usize,
    pub reason: String,
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}\t{}",
            self.row,
            self.reason.replace(['\t', '\n', '\r'], " ")
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadOutcome {
    pub essays: Vec<Essay>,
    pub rejects: Vec<Reject>,
    /// `(row, count)` for rows where invalid UTF-8 was replaced.
    pub replacements: Vec<(usize, usize)>,
    pub rows: usize,
}

impl LoadOutcome {
    /// Writes the reject sidecar: one `<row>\t<reason>` line per reject.
    pub fn write_rejects<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for reject in &self.rejects {
            writeln!(out, "{reject}")?;
        }
        Ok(())
    }
}

/// Column names of an ASAP-style TSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AsapColumns {
    pub id: String,
    pub set: String,
    pub text: String,
    pub score: String,
    /// Trait name → column; values are validated against the trait's range.
    pub traits: BTreeMap<String, String>,
}

impl Default for AsapColumns {
    fn default() -> Self {
        AsapColumns {
            id: "essay_id".into(),
            set: "essay_set".into(),
            text: "essay".into(),
            score: "domain1_score".into(),
            traits: BTreeMap::new(),
        }
    }
}

/// Column names of an ELLIPSE-style CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EllipseColumns {
    pub id: String,
    pub text: String,
    pub overall: String,
    /// Prompt-name column used as the essay set id; when absent from the
    /// header every essay goes into `default_set`.
    pub set: String,
    pub default_set: String,
    pub grade: String,
    pub traits: Vec<String>,
}

impl Default for EllipseColumns {
    fn default() -> Self {
        EllipseColumns {
            id: "text_id".into(),
            text: "full_text".into(),
            overall: "Overall".into(),
            set: "prompt".into(),
            default_set: "ellipse".into(),
            grade: "grade".into(),
            traits: [
                "Cohesion",
                "Syntax",
                "Vocabulary",
                "Phraseology",
                "Grammar",
                "Conventions",
            ]
            .map(String::from)
            .to_vec(),
        }
    }
}

/// Lossy UTF-8 decoding that reports how many replacement characters were
/// inserted.
pub fn decode_lossy(bytes: &[u8]) -> (String, usize) {
    let mut out = String::with_capacity(bytes.len());
    let mut replaced = 0;
    for chunk in bytes.utf8_chunks() {
        out.push_str(chunk.valid());
        if !chunk.invalid().is_empty() {
            out.push(char::REPLACEMENT_CHARACTER);
            replaced += 1;
        }
    }
    (out, replaced)
}

struct Header {
    names: Vec<String>,
}

impl Header {
    fn from_record(record: &csv::ByteRecord) -> Self {
        let names = record
            .iter()
            .map(|f| {
                decode_lossy(f)
                    .0
                    .trim()
                    .trim_start_matches('\u{feff}')
                    .to_string()
            })
            .collect();
        Header { names }
    }

    fn find(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn require(&self, name: &str) -> Result<usize, CorpusError> {
        self.find(name)
            .ok_or_else(|| CorpusError::MissingColumn(name.to_string()))
    }
}

fn field(record: &csv::ByteRecord, idx: usize, replaced: &mut usize) -> Option<String> {
    record.get(idx).map(|bytes| {
        let (text, n) = decode_lossy(bytes);
        *replaced += n;
        text
    })
}

fn parse_score(raw: &str) -> Option<f64> {
    let value: f64 = raw.trim().parse().ok()?;
    value.is_finite().then_some(value)
}

fn check_score(score: f64, lo: i64, hi: i64, step: f64) -> Result<(), String> {
    if score < lo as f64 - GRID_EPS || score > hi as f64 + GRID_EPS {
        return Err("score out of range".into());
    }
    let steps = (score - lo as f64) / step;
    if (steps - steps.round()).abs() > GRID_EPS {
        return Err(format!("score not on {step} grid"));
    }
    Ok(())
}

pub fn load_asap(
    path: &Path,
    metas: &MetaCatalog,
    columns: &AsapColumns,
) -> Result<LoadOutcome, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    load_asap_reader(file, metas, columns)
}

/// Reads an ASAP-style TSV (tab separated, no quoting, header row).
pub fn load_asap_reader<R: Read>(
    reader: R,
    metas: &MetaCatalog,
    columns: &AsapColumns,
) -> Result<LoadOutcome, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .quoting(false)
        .flexible(true)
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.byte_records();
    let header = match records.next() {
        Some(record) => Header::from_record(&record?),
        None => return Err(CorpusError::MissingColumn(columns.id.clone())),
    };
    let id_col = header.require(&columns.id)?;
    let set_col = header.require(&columns.set)?;
    let text_col = header.require(&columns.text)?;
    let score_col = header.require(&columns.score)?;
    let mut trait_cols = Vec::new();
    for (name, col) in &columns.traits {
        trait_cols.push((name.clone(), header.require(col)?));
    }

    let mut outcome = LoadOutcome::default();
    let mut seen_ids = BTreeSet::new();
    for (idx, record) in records.enumerate() {
        let row = idx + 1;
        let record = record?;
        outcome.rows += 1;
        let mut replaced = 0;
        let result = (|| -> Result<Essay, String> {
            let get = |col: usize, name: &str, replaced: &mut usize| {
                field(&record, col, replaced).ok_or_else(|| format!("missing field `{name}`"))
            };
            let id = get(id_col, &columns.id, &mut replaced)?.trim().to_string();
            if id.is_empty() {
                return Err(format!("missing field `{}`", columns.id));
            }
            let set_id = get(set_col, &columns.set, &mut replaced)?
                .trim()
                .to_string();
            let meta = metas
                .get(&set_id)
                .ok_or_else(|| format!("unknown essay set `{set_id}`"))?;
            let text = get(text_col, &columns.text, &mut replaced)?;
            if text.trim().is_empty() {
                return Err("empty essay text".into());
            }
            let (score_idx, score_name) = match &meta.score_column {
                Some(name) => (
                    header
                        .find(name)
                        .ok_or_else(|| format!("missing column `{name}`"))?,
                    name.as_str(),
                ),
                None => (score_col, columns.score.as_str()),
            };
            let raw_score = get(score_idx, score_name, &mut replaced)?;
            let score = parse_score(&raw_score)
                .ok_or_else(|| format!("non-numeric score `{}`", raw_score.trim()))?;
            check_score(score, meta.score_min, meta.score_max, meta.score_step)?;

            let mut traits = BTreeMap::new();
            for (name, col) in &trait_cols {
                let raw = match field(&record, *col, &mut replaced) {
                    Some(raw) if !raw.trim().is_empty() => raw,
                    _ => continue,
                };
                let value = parse_score(&raw).ok_or_else(|| format!("non-numeric {name} score"))?;
                let (lo, hi) = meta.trait_range(name);
                check_score(value, lo, hi, meta.score_step).map_err(|e| format!("{name}: {e}"))?;
                traits.insert(name.clone(), value);
            }
            Ok(Essay {
                id,
                essay_set_id: set_id,
                text,
                gold_overall: score,
                gold_traits: (!traits.is_empty()).then_some(traits),
                grade_band: None,
            })
        })();
        if replaced > 0 {
            outcome.replacements.push((row, replaced));
        }
        match result {
            Ok(essay) if !seen_ids.insert(essay.id.clone()) => outcome.rejects.push(Reject {
                row,
                reason: format!("duplicate essay id `{}`", essay.id),
            }),
            Ok(essay) => outcome.essays.push(essay),
            Err(reason) => outcome.rejects.push(Reject { row, reason }),
        }
    }
    Ok(outcome)
}

pub fn load_ellipse(path: &Path, columns: &EllipseColumns) -> Result<LoadOutcome, CorpusError> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    load_ellipse_reader(file, columns)
}

/// Reads an ELLIPSE-style CSV (RFC 4180 quoting, header row). Scores must be
/// multiples of 0.5 in [1, 5].
pub fn load_ellipse_reader<R: Read>(
    reader: R,
    columns: &EllipseColumns,
) -> Result<LoadOutcome, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_reader(reader);
    let mut records = rdr.byte_records();
    let header = match records.next() {
        Some(record) => Header::from_record(&record?),
        None => return Err(CorpusError::MissingColumn(columns.id.clone())),
    };
    let id_col = header.require(&columns.id)?;
    let text_col = header.require(&columns.text)?;
    let overall_col = header.require(&columns.overall)?;
    let set_col = header.find(&columns.set);
    let grade_col = header.find(&columns.grade);
    let trait_cols: Vec<(String, usize)> = columns
        .traits
        .iter()
        .filter_map(|name| header.find(name).map(|idx| (name.clone(), idx)))
        .collect();

    let mut outcome = LoadOutcome::default();
    let mut seen_ids = BTreeSet::new();
    for (idx, record) in records.enumerate() {
        let row = idx + 1;
        let record = record?;
        outcome.rows += 1;
        let mut replaced = 0;
        let result = (|| -> Result<Essay, String> {
            let id = field(&record, id_col, &mut replaced)
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .ok_or_else(|| format!("missing field `{}`", columns.id))?;
            let text = field(&record, text_col, &mut replaced)
                .ok_or_else(|| format!("missing field `{}`", columns.text))?;
            if text.trim().is_empty() {
                return Err("empty essay text".into());
            }
            let mut traits = BTreeMap::new();
            for (name, col) in &trait_cols {
                let raw = match field(&record, *col, &mut replaced) {
                    Some(raw) if !raw.trim().is_empty() => raw,
                    _ => continue,
                };
                let value = parse_score(&raw).ok_or_else(|| format!("non-numeric {name} score"))?;
                check_score(value, 1, 5, 0.5).map_err(|e| format!("{name}: {e}"))?;
                traits.insert(name.clone(), value);
            }
            let overall_raw = field(&record, overall_col, &mut replaced).unwrap_or_default();
            if overall_raw.trim().is_empty() {
                return Err(if traits.is_empty() {
                    "missing overall score".into()
                } else {
                    "trait present without overall score".into()
                });
            }
            let overall = parse_score(&overall_raw)
                .ok_or_else(|| format!("non-numeric score `{}`", overall_raw.trim()))?;
            check_score(overall, 1, 5, 0.5)?;
            let set_id = set_col
                .and_then(|c| field(&record, c, &mut replaced))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .unwrap_or_else(|| columns.default_set.clone());
            let grade_band = grade_col
                .and_then(|c| field(&record, c, &mut replaced))
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty());
            Ok(Essay {
                id,
                essay_set_id: set_id,
                text,
                gold_overall: overall,
                gold_traits: (!traits.is_empty()).then_some(traits),
                grade_band,
            })
        })();
        if replaced > 0 {
            outcome.replacements.push((row, replaced));
        }
        match result {
            Ok(essay) if !seen_ids.insert(essay.id.clone()) => outcome.rejects.push(Reject {
                row,
                reason: format!("duplicate essay id `{}`", essay.id),
            }),
            Ok(essay) => outcome.essays.push(essay),
            Err(reason) => outcome.rejects.push(Reject { row, reason }),
        }
    }
    Ok(outcome)
}

/// Writes essays as JSON lines, the normalized interchange format.
pub fn write_normalized<W: Write>(essays: &[Essay], mut out: W) -> std::io::Result<()> {
    for essay in essays {
        serde_json::to_writer(&mut out, essay)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_normalized<R: BufRead>(reader: R) -> Result<Vec<Essay>, CorpusError> {
    let mut essays = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CorpusError::Normalized {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let essay = serde_json::from_str(&line).map_err(|e| CorpusError::Normalized {
            line: idx + 1,
            detail: e.to_string(),
        })?;
        essays.push(essay);
    }
    Ok(essays)
}

/// Fold index per essay id, stratified by essay set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub seed: u64,
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldAssignment {
    pub fn fold_of(&self, essay_id: &str) -> Option<usize> {
        self.assignment.get(essay_id).copied()
    }

    /// `essay_id\tfold` lines sorted by essay id.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (id, fold) in &self.assignment {
            out.push_str(id);
            out.push('\t');
            out.push_str(&fold.to_string());
            out.push('\n');
        }
        out
    }

    /// Fold sizes per essay set.
    pub fn sizes_by_set(&self, essays: &[Essay]) -> BTreeMap<String, Vec<usize>> {
        let mut sizes: BTreeMap<String, Vec<usize>> = BTreeMap::new();
        for essay in essays {
            if let Some(fold) = self.fold_of(&essay.id) {
                let entry = sizes
                    .entry(essay.essay_set_id.clone())
                    .or_insert_with(|| vec![0; self.k]);
                entry[fold] += 1;
            }
        }
        sizes
    }
}

/// Seed for one essay set's shuffle: SHA-256 over the global seed and set id,
/// fed to ChaCha8. Each set's folds depend only on its own ids.
fn set_rng(seed: u64, set_id: &str) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(b"essay-scorer/folds/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((set_id.len() as u64).to_le_bytes());
    hasher.update(set_id.as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Splits essays into `k` folds, stratified by essay set. Ids are sorted,
/// shuffled with a per-set ChaCha8 stream, then dealt round-robin, so fold
/// sizes within a set differ by at most one.
pub fn split_folds(essays: &[Essay], k: usize, seed: u64) -> Result<FoldAssignment, CorpusError> {
    if k < 2 {
        return Err(CorpusError::InvalidK(k));
    }
    if essays.is_empty() {
        return Err(CorpusError::NoEssays);
    }
    let mut by_set: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for essay in essays {
        if !seen.insert(essay.id.as_str()) {
            return Err(CorpusError::DuplicateId(essay.id.clone()));
        }
        by_set
            .entry(&essay.essay_set_id)
            .or_default()
            .push(&essay.id);
    }
    if let Some((set, ids)) = by_set.iter().min_by_key(|(_, ids)| ids.len()) {
        if ids.len() < k {
            return Err(CorpusError::SetTooSmall {
                set: set.to_string(),
                size: ids.len(),
                k,
            });
        }
    }
    let mut assignment = BTreeMap::new();
    for (set, mut ids) in by_set {
        ids.sort_unstable();
        ids.shuffle(&mut set_rng(seed, set));
        for (pos, id) in ids.into_iter().enumerate() {
            assignment.insert(id.to_string(), pos % k);
        }
    }
    Ok(FoldAssignment {
        seed,
        k,
        assignment,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Train,
    Dev,
    Test,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Train => "train",
            Role::Dev => "dev",
            Role::Test => "test",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Folds 0-2 train, fold 3 dev, fold 4 test.
pub fn select_roles(folds: &FoldAssignment) -> Result<BTreeMap<String, Role>, CorpusError> {
    if folds.k != 5 {
        return Err(CorpusError::RoleTemplate(folds.k));
    }
    Ok(folds
        .assignment
        .iter()
        .map(|(id, &fold)| {
            let role = match fold {
                0..=2 => Role::Train,
                3 => Role::Dev,
                _ => Role::Test,
            };
            (id.clone(), role)
        })
        .collect())
}
