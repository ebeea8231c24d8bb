use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::RunError;
use crate::corpus::{AsapColumns, EllipseColumns, Role};
use crate::llm::{RetryPolicy, DEFAULT_CONCURRENCY, DEFAULT_MAX_TOKENS, DEFAULT_TEMPERATURE};
use crate::promptkit::{ComplexWordMapping, FeatureSelection, PromptTemplate};
use crate::scoreparse::{ParserMode, RangePolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Asap,
    Ellipse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub kind: DatasetKind,
    pub path: PathBuf,
    /// Essay-set metadata (TOML). Required for ASAP; ELLIPSE falls back to
    /// 1-5 half-point defaults.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta_path: Option<PathBuf>,
    #[serde(default)]
    pub asap_columns: AsapColumns,
    #[serde(default)]
    pub ellipse_columns: EllipseColumns,
}

fn default_k() -> usize {
    5
}

fn default_roles() -> Vec<Role> {
    vec![Role::Test]
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_k")]
    pub k: usize,
    pub seed: u64,
    /// Roles whose essays are scored.
    #[serde(default = "default_roles")]
    pub roles: Vec<Role>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectionConfig {
    #[serde(default = "default_selection")]
    pub features: FeatureSelection,
    #[serde(default)]
    pub complex_word: ComplexWordMapping,
}

fn default_selection() -> FeatureSelection {
    FeatureSelection::None
}

impl Default for SelectionConfig {
    fn default() -> Self {
        SelectionConfig {
            features: FeatureSelection::None,
            complex_word: ComplexWordMapping::default(),
        }
    }
}

fn default_temperature() -> f64 {
    DEFAULT_TEMPERATURE
}
fn default_max_tokens() -> u32 {
    DEFAULT_MAX_TOKENS
}
fn default_concurrency() -> usize {
    DEFAULT_CONCURRENCY
}
fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    /// OpenAI-compatible API base URL. Unused with a mock backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub api_key_env: Option<String>,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    /// Score at most this many essays; the rest are recorded as skipped.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_cap: Option<usize>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// `echo`, or a path to a mock script.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParserConfig {
    #[serde(default)]
    pub mode: ParserMode,
    #[serde(default)]
    pub range: RangePolicy,
    /// Model for the parsing prompt; defaults to the scoring model.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsamplePer {
    #[default]
    Set,
    Total,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsampleConfig {
    pub n: usize,
    pub seed: u64,
    #[serde(default)]
    pub per: SubsamplePer,
}

/// Experiment configuration as written by the operator (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitConfig>,
    #[serde(default)]
    pub selection: SelectionConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub parser: ParserConfig,
    #[serde(default)]
    pub prompt: PromptTemplate,
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subsample: Option<SubsampleConfig>,
}

/// How model calls are served, fixed at resolution time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSpec {
    Http {
        endpoint: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        api_key_env: Option<String>,
    },
    Echo,
    Script {
        path: PathBuf,
        sha256: String,
    },
}

impl BackendSpec {
    pub fn describe(&self) -> String {
        match self {
            BackendSpec::Http { endpoint, .. } => format!("http {endpoint}"),
            BackendSpec::Echo => "echo mock".into(),
            BackendSpec::Script { path, .. } => format!("mock script {}", path.display()),
        }
    }
}

/// Config with absolute paths, validated, and its backend fixed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    pub config: RunConfig,
    pub backend: BackendSpec,
}

/// Command-line overrides applied before resolution.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub mock: Option<String>,
    pub output_dir: Option<PathBuf>,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, RunError> {
        toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = fs::read_to_string(path).map_err(|e| RunError::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Makes relative paths absolute against `base_dir` (normally the config
    /// file's directory), applies overrides and validates.
    pub fn resolve(
        mut self,
        base_dir: &Path,
        overrides: &Overrides,
    ) -> Result<ResolvedConfig, RunError> {
        let base = if base_dir.as_os_str().is_empty() {
            std::env::current_dir().map_err(|e| RunError::io(base_dir, e))?
        } else if base_dir.is_absolute() {
            base_dir.to_path_buf()
        } else {
            std::env::current_dir()
                .map_err(|e| RunError::io(base_dir, e))?
                .join(base_dir)
        };
        let cwd = std::env::current_dir().map_err(|e| RunError::io(&base, e))?;
        self.dataset.path = absolute(&base, &self.dataset.path);
        self.dataset.meta_path = self.dataset.meta_path.map(|p| absolute(&base, &p));
        self.output_dir = match &overrides.output_dir {
            Some(dir) => absolute(&cwd, dir),
            None => absolute(&base, &self.output_dir),
        };
        let mock = match &overrides.mock {
            Some(m) => Some((m.clone(), &cwd)),
            None => self.model.mock.clone().map(|m| (m, &base)),
        };
        let backend = match mock {
            Some((m, _)) if m == "echo" => BackendSpec::Echo,
            Some((m, dir)) => {
                let path = absolute(dir, Path::new(&m));
                let bytes = fs::read(&path).map_err(|e| RunError::io(&path, e))?;
                BackendSpec::Script {
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    path,
                }
            }
            None => BackendSpec::Http {
                endpoint: self.model.endpoint.clone().ok_or_else(|| {
                    RunError::Config("model.endpoint is required without a mock backend".into())
                })?,
                api_key_env: self.model.api_key_env.clone(),
            },
        };
        self.model.mock = match &backend {
            BackendSpec::Echo => Some("echo".into()),
            BackendSpec::Script { path, .. } => Some(path.display().to_string()),
            BackendSpec::Http { .. } => None,
        };
        let resolved = ResolvedConfig {
            config: self,
            backend,
        };
        resolved.validate()?;
        Ok(resolved)
    }
}

impl ResolvedConfig {
    pub fn validate(&self) -> Result<(), RunError> {
        let c = &self.config;
        if c.dataset.kind == DatasetKind::Asap && c.dataset.meta_path.is_none() {
            return Err(RunError::Config(
                "dataset.meta_path is required for ASAP".into(),
            ));
        }
        if let Some(split) = &c.split {
            if split.k != 5 {
                return Err(RunError::Config(format!(
                    "split.k must be 5 for the train/dev/test roles, got {}",
                    split.k
                )));
            }
            if split.roles.is_empty() {
                return Err(RunError::Config("split.roles is empty".into()));
            }
        }
        if c.model.name.trim().is_empty() {
            return Err(RunError::Config("model.name is empty".into()));
        }
        if c.model.temperature < 0.0 || !c.model.temperature.is_finite() {
            return Err(RunError::Config("model.temperature must be >= 0".into()));
        }
        if c.model.max_tokens == 0 {
            return Err(RunError::Config("model.max_tokens must be > 0".into()));
        }
        if c.model.concurrency == 0 {
            return Err(RunError::Config("model.concurrency must be > 0".into()));
        }
        if c.subsample.is_some_and(|s| s.n == 0) {
            return Err(RunError::Config("subsample.n must be > 0".into()));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything that affects results.
    /// The output directory is left out, so the same experiment written to
    /// two places has one digest.
    pub fn digest(&self) -> String {
        let mut canonical = self.clone();
        canonical.config.output_dir = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&bytes))
    }

    pub fn parser_model(&self) -> &str {
        self.config
            .parser
            .model
            .as_deref()
            .unwrap_or(&self.config.model.name)
    }
}
