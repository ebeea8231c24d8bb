//! End-to-end experiment runner: load, split, extract features, build
//! prompts, call the model, parse and evaluate, with every intermediate
//! artifact written to a run directory.
//!
//! Run directory layout:
//!
//! ```text
//! config.resolved.json   resolved config and its digest
//! journal.jsonl          start / completed / skipped / halted events
//! rejects.tsv            unloadable data rows
//! folds.tsv              fold per essay (when a split is configured)
//! essays.jsonl           essays selected for scoring, with gold scores
//! metas.json             metadata of the scored essay sets
//! features.tsv           feature vector per scored essay
//! feature_ranking.json   per-set feature ranking (computed selection)
//! prompts/<id>.txt       scoring prompt
//! raw/<id>.txt           raw model output
//! parsed.jsonl           parse record per scored essay
//! report.json            evaluation report
//! report.txt             the same as a table
//! cache/                 model response cache
//! ```

mod config;

use std::cmp::Ordering as CmpOrdering;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use config::{
    BackendSpec, DatasetConfig, DatasetKind, ModelConfig, Overrides, ParserConfig, ResolvedConfig,
    RunConfig, SelectionConfig, SplitConfig, SubsampleConfig, SubsamplePer,
};

use crate::corpus::{
    load_asap, load_ellipse, read_normalized, select_roles, split_folds, write_normalized,
    CorpusError, Essay, EssaySetMeta, FoldAssignment, LoadOutcome, MetaCatalog, Role,
};
use crate::evalkit::{build_report, EvalError, EvaluationReport};
use crate::llm::{
    network_disabled, ApiKey, Backend, DiskCache, EchoBackend, LlmClient, LlmError, LlmRequest,
    MockBackend, MockScript, OpenAiBackend,
};
use crate::promptkit::{FeatureBlock, PromptError};
use crate::scoreparse::{parse, ParseOptions, ParseRecord, ParseSource, ParseStatus};
use crate::textstats::{
    extract_features, rank_features, FeatureCorrelation, LinguisticFeatureVector, TextStatsError,
};

pub const CONFIG_FILE: &str = "config.resolved.json";
pub const JOURNAL_FILE: &str = "journal.jsonl";
pub const ESSAYS_FILE: &str = "essays.jsonl";
pub const METAS_FILE: &str = "metas.json";
pub const PARSED_FILE: &str = "parsed.jsonl";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";

#[derive(Debug, Error)]
pub enum RunError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Artifact { path: PathBuf, detail: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("feature ranking for essay set `{set}`: {source}")]
    Ranking {
        set: String,
        #[source]
        source: TextStatsError,
    },
    #[error("backend setup: {0}")]
    Backend(#[source] LlmError),
    #[error("model call for essay `{essay_id}` failed: {source}")]
    Llm {
        essay_id: String,
        #[source]
        source: LlmError,
    },
    #[error("config digest mismatch: expected {expected}, found {found}")]
    Tampered { expected: String, found: String },
    #[error("{0} already holds a run; resume it or pick another output directory")]
    RunDirInUse(PathBuf),
    #[error("no essays selected for scoring")]
    NoEssays,
}

impl RunError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        RunError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn artifact(path: &Path, detail: impl ToString) -> Self {
        RunError::Artifact {
            path: path.to_path_buf(),
            detail: detail.to_string(),
        }
    }
}

/// What `config.resolved.json` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredConfig {
    pub config_digest: String,
    pub resolved: ResolvedConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum JournalEvent {
    Start { config_digest: String, resume: bool },
    Completed { essay_id: String, cached: bool },
    Skipped { essay_id: String, reason: String },
    Halted { essay_id: String, error: String },
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ScoreSummary {
    /// Essays selected for scoring.
    pub selected: usize,
    /// Responses obtained in this invocation (model calls plus cache hits).
    pub completed: usize,
    pub cache_hits: usize,
    /// Essays already done by an earlier invocation.
    pub resumed: usize,
    /// Essays beyond the request cap.
    pub skipped: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ParseSummary {
    pub parsed: usize,
    pub failed: usize,
    pub fallback: usize,
}

/// Natural id order: numeric ids numerically, before any other id.
pub fn id_order(a: &str, b: &str) -> CmpOrdering {
    match (a.parse::<u64>(), b.parse::<u64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y).then_with(|| a.cmp(b)),
        (Ok(_), Err(_)) => CmpOrdering::Less,
        (Err(_), Ok(_)) => CmpOrdering::Greater,
        (Err(_), Err(_)) => a.cmp(b),
    }
}

/// File stem for an essay id. Ids with characters outside `[A-Za-z0-9._-]`
/// get those replaced and a short digest appended to stay unique.
pub fn file_stem(id: &str) -> String {
    let clean = !id.is_empty()
        && !id.starts_with('.')
        && id
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-'));
    if clean {
        return id.to_string();
    }
    let safe: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' {
                c
            } else {
                '_'
            }
        })
        .collect();
    let digest = hex::encode(&Sha256::digest(id.as_bytes())[..4]);
    format!("{safe}-{digest}")
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| RunError::io(dir, e))?;
    tmp.write_all(contents).map_err(|e| RunError::io(path, e))?;
    tmp.persist(path).map_err(|e| RunError::io(path, e.error))?;
    Ok(())
}

fn read_to_string(path: &Path) -> Result<String, RunError> {
    fs::read_to_string(path).map_err(|e| RunError::io(path, e))
}

fn to_json_line<T: Serialize>(value: &T) -> String {
    let mut line = serde_json::to_string(value).expect("serializable");
    line.push('\n');
    line
}

/// Loads the configured dataset and its metadata catalog.
pub fn load_dataset(dataset: &DatasetConfig) -> Result<(LoadOutcome, MetaCatalog), RunError> {
    match dataset.kind {
        DatasetKind::Asap => {
            let meta_path = dataset
                .meta_path
                .as_ref()
                .ok_or_else(|| RunError::Config("dataset.meta_path is required for ASAP".into()))?;
            let metas = MetaCatalog::load(meta_path)?;
            let outcome = load_asap(&dataset.path, &metas, &dataset.asap_columns)?;
            Ok((outcome, metas))
        }
        DatasetKind::Ellipse => {
            let outcome = load_ellipse(&dataset.path, &dataset.ellipse_columns)?;
            let metas = match &dataset.meta_path {
                Some(path) => MetaCatalog::load(path)?,
                None => MetaCatalog::default(),
            }
            .with_ellipse_defaults(&outcome.essays);
            Ok((outcome, metas))
        }
    }
}

/// Feature table: header plus one row per essay.
pub fn feature_table(essays: &[Essay], vectors: &[LinguisticFeatureVector]) -> String {
    let mut out = LinguisticFeatureVector::tsv_header();
    out.push('\n');
    for (essay, vector) in essays.iter().zip(vectors) {
        out.push_str(&vector.tsv_row(&essay.id));
        out.push('\n');
    }
    out
}

/// Extracts features for many essays on all available cores.
pub fn extract_all(essays: &[Essay]) -> Vec<LinguisticFeatureVector> {
    let workers = std::thread::available_parallelism()
        .map_or(1, |n| n.get())
        .min(16);
    let chunk = essays.len().div_ceil(workers).max(1);
    std::thread::scope(|scope| {
        let handles: Vec<_> = essays
            .chunks(chunk)
            .map(|part| {
                scope.spawn(move || {
                    part.iter()
                        .map(|e| extract_features(&e.text))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("feature worker panicked"))
            .collect()
    })
}

/// Seeded subsample, either up to `n` essays per set or `n` in total.
pub fn subsample(essays: Vec<Essay>, config: &SubsampleConfig) -> Vec<Essay> {
    fn rng(seed: u64, scope: &str) -> ChaCha8Rng {
        let mut hasher = Sha256::new();
        hasher.update(b"essay-scorer/subsample/v1");
        hasher.update(seed.to_le_bytes());
        hasher.update((scope.len() as u64).to_le_bytes());
        hasher.update(scope.as_bytes());
        ChaCha8Rng::from_seed(hasher.finalize().into())
    }
    fn draw(mut group: Vec<Essay>, n: usize, rng: &mut ChaCha8Rng) -> Vec<Essay> {
        group.sort_by(|a, b| id_order(&a.id, &b.id));
        group.shuffle(rng);
        group.truncate(n);
        group
    }
    let mut picked = match config.per {
        SubsamplePer::Total => draw(essays, config.n, &mut rng(config.seed, "")),
        SubsamplePer::Set => {
            let mut by_set: BTreeMap<String, Vec<Essay>> = BTreeMap::new();
            for essay in essays {
                by_set
                    .entry(essay.essay_set_id.clone())
                    .or_default()
                    .push(essay);
            }
            by_set
                .into_iter()
                .flat_map(|(set, group)| draw(group, config.n, &mut rng(config.seed, &set)))
                .collect()
        }
    };
    picked.sort_by(|a, b| id_order(&a.id, &b.id));
    picked
}

/// Stored config of a run directory, checked against its own digest.
pub fn load_stored_config(run_dir: &Path) -> Result<StoredConfig, RunError> {
    let path = run_dir.join(CONFIG_FILE);
    let stored: StoredConfig =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| RunError::artifact(&path, e))?;
    let recomputed = stored.resolved.digest();
    if recomputed != stored.config_digest {
        return Err(RunError::Tampered {
            expected: stored.config_digest,
            found: recomputed,
        });
    }
    Ok(stored)
}

fn read_journal(run_dir: &Path) -> Result<Vec<JournalEvent>, RunError> {
    let path = run_dir.join(JOURNAL_FILE);
    if !path.exists() {
        return Ok(Vec::new());
    }
    read_to_string(&path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RunError::artifact(&path, e)))
        .collect()
}

struct Journal {
    file: File,
    path: PathBuf,
}

impl Journal {
    fn open(run_dir: &Path) -> Result<Self, RunError> {
        let path = run_dir.join(JOURNAL_FILE);
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| RunError::io(&path, e))?;
        Ok(Journal { file, path })
    }

    fn record(&mut self, event: &JournalEvent) -> Result<(), RunError> {
        self.file
            .write_all(to_json_line(event).as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|e| RunError::io(&self.path, e))
    }
}

fn read_metas(run_dir: &Path) -> Result<MetaCatalog, RunError> {
    let path = run_dir.join(METAS_FILE);
    let sets: Vec<EssaySetMeta> =
        serde_json::from_str(&read_to_string(&path)?).map_err(|e| RunError::artifact(&path, e))?;
    Ok(MetaCatalog::new(sets)?)
}

fn read_essays(run_dir: &Path) -> Result<Vec<Essay>, RunError> {
    let path = run_dir.join(ESSAYS_FILE);
    let file = File::open(&path).map_err(|e| RunError::io(&path, e))?;
    Ok(read_normalized(BufReader::new(file))?)
}

fn raw_path(run_dir: &Path, id: &str) -> PathBuf {
    run_dir.join("raw").join(format!("{}.txt", file_stem(id)))
}

fn prompt_path(run_dir: &Path, id: &str) -> PathBuf {
    run_dir
        .join("prompts")
        .join(format!("{}.txt", file_stem(id)))
}

/// Builds the model client for a resolved config. `override_backend`
/// replaces whatever the config names.
pub fn build_client(
    resolved: &ResolvedConfig,
    run_dir: &Path,
    essays: &[Essay],
    metas: &MetaCatalog,
    override_backend: Option<Arc<dyn Backend>>,
) -> Result<LlmClient, RunError> {
    let model = &resolved.config.model;
    let offline = network_disabled();
    let backend: Arc<dyn Backend> = match (override_backend, &resolved.backend) {
        (Some(backend), _) => backend,
        (None, BackendSpec::Echo) => Arc::new(EchoBackend::from_essays(essays, metas)),
        (None, BackendSpec::Script { path, .. }) => Arc::new(
            MockBackend::new(MockScript::load(path).map_err(RunError::Backend)?)
                .map_err(RunError::Backend)?,
        ),
        (
            None,
            BackendSpec::Http {
                endpoint,
                api_key_env,
            },
        ) => {
            let key = match api_key_env {
                Some(var) if !offline => Some(ApiKey::from_env(var).map_err(RunError::Backend)?),
                _ => None,
            };
            Arc::new(
                OpenAiBackend::new(endpoint, key, Duration::from_secs(model.timeout_secs))
                    .map_err(RunError::Backend)?,
            )
        }
    };
    let cache_only = offline && backend.is_remote();
    if cache_only {
        log::info!("NO_NETWORK set: serving model calls from the cache only");
    }
    Ok(LlmClient::new(backend)
        .with_cache(DiskCache::new(run_dir.join("cache")))
        .with_retry(model.retry)
        .with_concurrency(model.concurrency)
        .cache_only(cache_only))
}

/// Facts about the run shown in the report.
fn run_facts(resolved: &ResolvedConfig) -> BTreeMap<String, String> {
    let c = &resolved.config;
    let mut facts = BTreeMap::new();
    facts.insert(
        "dataset".into(),
        match c.dataset.kind {
            DatasetKind::Asap => "asap",
            DatasetKind::Ellipse => "ellipse",
        }
        .to_string(),
    );
    facts.insert("model".into(), c.model.name.clone());
    facts.insert(
        "backend".into(),
        match resolved.backend {
            BackendSpec::Http { .. } => "http",
            BackendSpec::Echo => "echo",
            BackendSpec::Script { .. } => "script",
        }
        .to_string(),
    );
    facts.insert(
        "features".into(),
        format!(
            "{} (complex words: {})",
            c.selection.features,
            serde_json::to_value(c.selection.complex_word)
                .expect("enum serializes")
                .as_str()
                .unwrap_or("")
        ),
    );
    facts.insert(
        "split".into(),
        c.split.as_ref().map_or("none".into(), |s| {
            let roles: Vec<&str> = s.roles.iter().map(|r| r.as_str()).collect();
            format!("k={} seed={} roles={}", s.k, s.seed, roles.join(","))
        }),
    );
    facts.insert(
        "subsample".into(),
        c.subsample.map_or("none".into(), |s| {
            format!("n={} seed={} per={:?}", s.n, s.seed, s.per).to_lowercase()
        }),
    );
    facts.insert(
        "parser".into(),
        format!("{:?}/{:?}", c.parser.mode, c.parser.range).to_lowercase(),
    );
    if let Some(cap) = c.model.request_cap {
        facts.insert("request_cap".into(), cap.to_string());
    }
    facts
}

/// Essays chosen for scoring, plus the training essays used for ranking.
struct Selection {
    scored: Vec<Essay>,
    train: Vec<Essay>,
    folds: Option<FoldAssignment>,
}

fn select(resolved: &ResolvedConfig, essays: Vec<Essay>) -> Result<Selection, RunError> {
    let c = &resolved.config;
    let (scored, train, folds) = match &c.split {
        Some(split) => {
            let folds = split_folds(&essays, split.k, split.seed)?;
            let roles = select_roles(&folds)?;
            let wanted: BTreeSet<Role> = split.roles.iter().copied().collect();
            let (mut scored, mut train) = (Vec::new(), Vec::new());
            for essay in essays {
                let role = roles[&essay.id];
                if role == Role::Train {
                    train.push(essay.clone());
                }
                if wanted.contains(&role) {
                    scored.push(essay);
                }
            }
            (scored, train, Some(folds))
        }
        None => (essays.clone(), essays, None),
    };
    let mut scored = match &c.subsample {
        Some(config) => subsample(scored, config),
        None => scored,
    };
    scored.sort_by(|a, b| id_order(&a.id, &b.id));
    if scored.is_empty() {
        return Err(RunError::NoEssays);
    }
    Ok(Selection {
        scored,
        train,
        folds,
    })
}

/// Per-set feature ranking on the training essays.
fn rankings(
    train: &[Essay],
    sets: &BTreeSet<&str>,
) -> Result<BTreeMap<String, Vec<FeatureCorrelation>>, RunError> {
    let mut out = BTreeMap::new();
    for &set in sets {
        let group: Vec<Essay> = train
            .iter()
            .filter(|e| e.essay_set_id == set)
            .cloned()
            .collect();
        let vectors = extract_all(&group);
        let gold: Vec<f64> = group.iter().map(|e| e.gold_overall).collect();
        let ranked = rank_features(&gold, &vectors).map_err(|source| RunError::Ranking {
            set: set.to_string(),
            source,
        })?;
        out.insert(set.to_string(), ranked);
    }
    Ok(out)
}

/// One configured experiment bound to its run directory.
pub struct Runner {
    resolved: ResolvedConfig,
    digest: String,
    backend: Option<Arc<dyn Backend>>,
}

impl Runner {
    pub fn new(resolved: ResolvedConfig) -> Self {
        let digest = resolved.digest();
        Runner {
            resolved,
            digest,
            backend: None,
        }
    }

    /// Loads and resolves a TOML config; relative paths are taken from the
    /// config file's directory.
    pub fn from_file(path: &Path, overrides: &Overrides) -> Result<Self, RunError> {
        let base = path.parent().unwrap_or(Path::new(""));
        Ok(Self::new(RunConfig::load(path)?.resolve(base, overrides)?))
    }

    /// Serves model calls from `backend` instead of the configured one.
    pub fn with_backend(mut self, backend: Arc<dyn Backend>) -> Self {
        self.backend = Some(backend);
        self
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn resolved(&self) -> &ResolvedConfig {
        &self.resolved
    }

    pub fn run_dir(&self) -> &Path {
        &self.resolved.config.output_dir
    }

    /// Scores and parses, then evaluates.
    pub fn run(&self, resume: bool) -> Result<EvaluationReport, RunError> {
        self.score(resume)?;
        evaluate_run(self.run_dir())
    }

    fn prepare_dir(&self, resume: bool) -> Result<(), RunError> {
        let dir = self.run_dir();
        let config_path = dir.join(CONFIG_FILE);
        if config_path.exists() {
            if !resume {
                return Err(RunError::RunDirInUse(dir.to_path_buf()));
            }
            let stored = load_stored_config(dir)?;
            if stored.config_digest != self.digest {
                return Err(RunError::Tampered {
                    expected: stored.config_digest,
                    found: self.digest.clone(),
                });
            }
            return Ok(());
        }
        fs::create_dir_all(dir).map_err(|e| RunError::io(dir, e))?;
        let stored = StoredConfig {
            config_digest: self.digest.clone(),
            resolved: self.resolved.clone(),
        };
        let mut text = serde_json::to_string_pretty(&stored).expect("config serializes");
        text.push('\n');
        write_atomic(&config_path, text.as_bytes())
    }

    /// Loads, selects, builds prompts and scores every selected essay, then
    /// parses the outputs. Stops at the first failed model call; completed
    /// essays stay on disk and a resumed run picks up the rest.
    pub fn score(&self, resume: bool) -> Result<ScoreSummary, RunError> {
        let c = &self.resolved.config;
        let dir = self.run_dir().to_path_buf();
        self.prepare_dir(resume)?;
        let mut journal = Journal::open(&dir)?;
        journal.record(&JournalEvent::Start {
            config_digest: self.digest.clone(),
            resume,
        })?;

        let (outcome, metas) = load_dataset(&c.dataset)?;
        let mut rejects = Vec::new();
        outcome
            .write_rejects(&mut rejects)
            .map_err(|e| RunError::io(&dir, e))?;
        write_atomic(&dir.join("rejects.tsv"), &rejects)?;
        for reject in &outcome.rejects {
            log::warn!("row {} rejected: {}", reject.row, reject.reason);
        }
        let all_essays = outcome.essays;

        let selection = select(&self.resolved, all_essays.clone())?;
        if let Some(folds) = &selection.folds {
            write_atomic(&dir.join("folds.tsv"), folds.to_tsv().as_bytes())?;
        }
        let scored = &selection.scored;
        let mut buf = Vec::new();
        write_normalized(scored, &mut buf).map_err(|e| RunError::io(&dir, e))?;
        write_atomic(&dir.join(ESSAYS_FILE), &buf)?;
        let sets: BTreeSet<&str> = scored.iter().map(|e| e.essay_set_id.as_str()).collect();
        let used: Vec<&EssaySetMeta> = sets.iter().filter_map(|s| metas.get(s)).collect();
        write_atomic(
            &dir.join(METAS_FILE),
            (serde_json::to_string_pretty(&used).expect("metas serialize") + "\n").as_bytes(),
        )?;

        let vectors = extract_all(scored);
        write_atomic(
            &dir.join("features.tsv"),
            feature_table(scored, &vectors).as_bytes(),
        )?;

        let sel = &c.selection;
        let ranking = if sel.features.needs_ranking() {
            let ranked = rankings(&selection.train, &sets)?;
            let doc = serde_json::json!({
                "config_digest": self.digest,
                "basis": if c.split.is_some() { "train" } else { "all" },
                "sets": ranked,
            });
            write_atomic(
                &dir.join("feature_ranking.json"),
                (serde_json::to_string_pretty(&doc).expect("ranking serializes") + "\n").as_bytes(),
            )?;
            Some(ranked)
        } else {
            None
        };

        let mut prompts = Vec::with_capacity(scored.len());
        for (essay, vector) in scored.iter().zip(&vectors) {
            let meta = metas.get(&essay.essay_set_id).ok_or_else(|| {
                RunError::Config(format!(
                    "no metadata for essay set `{}`",
                    essay.essay_set_id
                ))
            })?;
            let ranked = ranking
                .as_ref()
                .and_then(|r| r.get(&essay.essay_set_id))
                .map(Vec::as_slice);
            let features = sel.features.resolve(sel.complex_word, ranked)?;
            let block = FeatureBlock::from_features(vector, &features);
            let prompt = c
                .prompt
                .render(&c.prompt.scoring_spec(meta, &essay.text, block)?)?;
            write_atomic(&prompt_path(&dir, &essay.id), prompt.as_bytes())?;
            prompts.push(prompt);
        }

        let done: BTreeSet<String> = read_journal(&dir)?
            .into_iter()
            .filter_map(|event| match event {
                JournalEvent::Completed { essay_id, .. } => Some(essay_id),
                _ => None,
            })
            .filter(|id| raw_path(&dir, id).exists())
            .collect();
        let cap = c.model.request_cap.unwrap_or(usize::MAX);
        let mut summary = ScoreSummary {
            selected: scored.len(),
            ..Default::default()
        };
        let mut todo = Vec::new();
        for (pos, (essay, prompt)) in scored.iter().zip(&prompts).enumerate() {
            if pos >= cap {
                summary.skipped += 1;
                journal.record(&JournalEvent::Skipped {
                    essay_id: essay.id.clone(),
                    reason: "request_cap".into(),
                })?;
            } else if done.contains(&essay.id) {
                summary.resumed += 1;
            } else {
                todo.push((essay, prompt));
            }
        }

        let client = build_client(
            &self.resolved,
            &dir,
            &all_essays,
            &metas,
            self.backend.clone(),
        )?;
        let next = AtomicUsize::new(0);
        let stop = AtomicBool::new(false);
        let completed = AtomicUsize::new(0);
        let hits = AtomicUsize::new(0);
        let failure: Mutex<Option<RunError>> = Mutex::new(None);
        let journal = Mutex::new(journal);
        let workers = client.concurrency().min(todo.len());
        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if stop.load(Ordering::SeqCst) {
                        break;
                    }
                    let i = next.fetch_add(1, Ordering::SeqCst);
                    let Some((essay, prompt)) = todo.get(i) else {
                        break;
                    };
                    let request = LlmRequest {
                        model: c.model.name.clone(),
                        prompt: (*prompt).clone(),
                        temperature: c.model.temperature,
                        max_tokens: c.model.max_tokens,
                    };
                    let result = client
                        .complete(&request)
                        .map_err(|source| RunError::Llm {
                            essay_id: essay.id.clone(),
                            source,
                        })
                        .and_then(|response| {
                            write_atomic(&raw_path(&dir, &essay.id), response.text.as_bytes())?;
                            journal.lock().expect("journal lock").record(
                                &JournalEvent::Completed {
                                    essay_id: essay.id.clone(),
                                    cached: response.cached,
                                },
                            )?;
                            Ok(response.cached)
                        });
                    match result {
                        Ok(cached) => {
                            completed.fetch_add(1, Ordering::SeqCst);
                            if cached {
                                hits.fetch_add(1, Ordering::SeqCst);
                            }
                        }
                        Err(err) => {
                            stop.store(true, Ordering::SeqCst);
                            let mut slot = failure.lock().expect("failure lock");
                            if slot.is_none() {
                                *slot = Some(err);
                            }
                            break;
                        }
                    }
                });
            }
        });
        summary.completed = completed.into_inner();
        summary.cache_hits = hits.into_inner();
        let mut journal = journal.into_inner().expect("journal lock");
        if let Some(err) = failure.into_inner().expect("failure lock") {
            let essay_id = match &err {
                RunError::Llm { essay_id, .. } => essay_id.clone(),
                _ => String::new(),
            };
            journal.record(&JournalEvent::Halted {
                essay_id,
                error: err.to_string(),
            })?;
            log::error!(
                "run halted after {} completed essays: {err}",
                summary.completed
            );
            return Err(err);
        }
        log::info!(
            "scored {} essays ({} cache hits, {} resumed, {} skipped)",
            summary.completed,
            summary.cache_hits,
            summary.resumed,
            summary.skipped
        );
        parse_with_client(&self.resolved, &dir, &client)?;
        Ok(summary)
    }
}

fn parse_with_client(
    resolved: &ResolvedConfig,
    run_dir: &Path,
    client: &LlmClient,
) -> Result<ParseSummary, RunError> {
    let essays = read_essays(run_dir)?;
    let metas = read_metas(run_dir)?;
    let p = &resolved.config.parser;
    let options = ParseOptions {
        mode: p.mode,
        range: p.range,
        model: resolved.parser_model().to_string(),
        max_tokens: resolved.config.model.max_tokens,
    };
    let mut summary = ParseSummary::default();
    let mut out = String::new();
    for essay in &essays {
        let path = raw_path(run_dir, &essay.id);
        if !path.exists() {
            continue;
        }
        let raw = read_to_string(&path)?;
        let meta = metas.get(&essay.essay_set_id).ok_or_else(|| {
            RunError::artifact(
                &run_dir.join(METAS_FILE),
                format!("no set `{}`", essay.essay_set_id),
            )
        })?;
        let outcome = parse(&raw, meta, Some(client), &options);
        let record = ParseRecord::new(&essay.id, &essay.essay_set_id, &raw, &outcome);
        match record.status {
            ParseStatus::Ok => summary.parsed += 1,
            ParseStatus::Failed => {
                summary.failed += 1;
                if let Some(f) = &record.failure {
                    log::warn!(
                        "essay `{}` unparseable ({}): {}",
                        essay.id,
                        f.reason,
                        f.detail
                    );
                }
            }
        }
        if record.source == Some(ParseSource::LlmFallback) {
            summary.fallback += 1;
        }
        out.push_str(&to_json_line(&record));
    }
    write_atomic(&run_dir.join(PARSED_FILE), out.as_bytes())?;
    Ok(summary)
}

/// Mock backend for an existing run directory: `echo` answers from the
/// run's gold scores, anything else is a mock script path.
pub fn mock_backend(spec: &str, run_dir: &Path) -> Result<Arc<dyn Backend>, RunError> {
    if spec == "echo" {
        return Ok(Arc::new(EchoBackend::from_essays(
            &read_essays(run_dir)?,
            &read_metas(run_dir)?,
        )));
    }
    let script = MockScript::load(Path::new(spec)).map_err(RunError::Backend)?;
    Ok(Arc::new(
        MockBackend::new(script).map_err(RunError::Backend)?,
    ))
}

/// Re-parses the raw outputs of a run directory.
pub fn parse_run(
    run_dir: &Path,
    override_backend: Option<Arc<dyn Backend>>,
) -> Result<ParseSummary, RunError> {
    let stored = load_stored_config(run_dir)?;
    let essays = read_essays(run_dir)?;
    let metas = read_metas(run_dir)?;
    let client = build_client(&stored.resolved, run_dir, &essays, &metas, override_backend)?;
    parse_with_client(&stored.resolved, run_dir, &client)
}

/// Builds `report.json` and `report.txt` from a run directory.
pub fn evaluate_run(run_dir: &Path) -> Result<EvaluationReport, RunError> {
    let stored = load_stored_config(run_dir)?;
    let mut skipped = BTreeSet::new();
    for event in read_journal(run_dir)? {
        match event {
            JournalEvent::Start { config_digest, .. } if config_digest != stored.config_digest => {
                return Err(RunError::Tampered {
                    expected: stored.config_digest,
                    found: config_digest,
                });
            }
            JournalEvent::Skipped { essay_id, .. } => {
                skipped.insert(essay_id);
            }
            _ => {}
        }
    }
    let essays = read_essays(run_dir)?;
    let metas = read_metas(run_dir)?;
    let parsed_path = run_dir.join(PARSED_FILE);
    let records: Vec<ParseRecord> = read_to_string(&parsed_path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(|e| RunError::artifact(&parsed_path, e)))
        .collect::<Result<_, _>>()?;
    let report = build_report(
        &records,
        &skipped,
        &essays,
        &metas,
        &stored.config_digest,
        run_facts(&stored.resolved),
    )?;
    write_atomic(&run_dir.join(REPORT_JSON), report.to_json().as_bytes())?;
    write_atomic(&run_dir.join(REPORT_TEXT), report.to_text().as_bytes())?;
    Ok(report)
}

/// Essay ids grouped by set, for reporting fold sizes.
pub fn fold_summary(folds: &FoldAssignment, essays: &[Essay]) -> String {
    let mut out = String::new();
    for (set, sizes) in folds.sizes_by_set(essays) {
        let sizes: Vec<String> = sizes.iter().map(usize::to_string).collect();
        out.push_str(&format!("{set}\t{}\n", sizes.join("\t")));
    }
    out
}

/// Scored ids mapped to their raw output, for comparing runs.
pub fn raw_outputs(run_dir: &Path) -> Result<HashMap<String, String>, RunError> {
    let mut out = HashMap::new();
    for essay in read_essays(run_dir)? {
        let path = raw_path(run_dir, &essay.id);
        if path.exists() {
            out.insert(essay.id.clone(), read_to_string(&path)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn natural_id_order() {
        let mut ids = vec!["10", "b", "2", "a", "1"];
        ids.sort_by(|a, b| id_order(a, b));
        assert_eq!(ids, ["1", "2", "10", "a", "b"]);
    }

    #[test]
    fn file_stems_are_safe_and_distinct() {
        assert_eq!(file_stem("1234"), "1234");
        assert_eq!(file_stem("AB-12_x.y"), "AB-12_x.y");
        let a = file_stem("../etc/passwd");
        assert!(!a.contains('/') && !a.starts_with('.'));
        assert_ne!(file_stem("a/b"), file_stem("a_b"));
        assert_ne!(file_stem("a/b"), file_stem("a?b"));
    }

    fn essay(id: &str, set: &str) -> Essay {
        Essay {
            id: id.into(),
            essay_set_id: set.into(),
            text: "Text.".into(),
            gold_overall: 1.0,
            gold_traits: None,
            grade_band: None,
        }
    }

    #[test]
    fn subsample_is_seeded_and_bounded() {
        let essays: Vec<Essay> = (0..30)
            .map(|i| essay(&i.to_string(), if i % 3 == 0 { "a" } else { "b" }))
            .collect();
        let per_set = SubsampleConfig {
            n: 5,
            seed: 7,
            per: SubsamplePer::Set,
        };
        let a = subsample(essays.clone(), &per_set);
        assert_eq!(a.len(), 10);
        assert_eq!(a, subsample(essays.clone(), &per_set));
        let total = SubsampleConfig {
            per: SubsamplePer::Total,
            ..per_set
        };
        assert_eq!(subsample(essays.clone(), &total).len(), 5);
        let big = SubsampleConfig { n: 100, ..per_set };
        assert_eq!(subsample(essays, &big).len(), 30);
    }
}
