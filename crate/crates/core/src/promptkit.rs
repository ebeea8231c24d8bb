//! Scoring-prompt and parsing-prompt assembly.
//!
//! A scoring prompt has six sections in fixed order, separated by one blank
//! line, `\n` line endings and no trailing newline:
//!
//! ```text
//! {persona}
//!
//! ### Essay Prompt: {essay prompt}
//!
//! ### Analysis Task: {analysis instruction}
//!
//! ### Analyzed Student Essay: {essay}
//!
//! ### Additional Information: {preamble}
//! - {description}: {value}
//!
//! ### Analysis: {format instruction}
//! ```
//!
//! The additional-information section is present only when features are
//! selected.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, EssaySetMeta};
use crate::textstats::{FeatureCorrelation, FeatureName, LinguisticFeatureVector};

pub const DEFAULT_PERSONA: &str = "You are part of an educational research team analyzing the writing skills of students in grades 7 to 10. You have been given a student's essay and the prompt they responded to.";
pub const DEFAULT_ANALYSIS_PREAMBLE: &str =
    "Grade the given essay with the following requirements:";
pub const DEFAULT_EXPLANATION_REQUIREMENT: &str = "Provide an explanation for your score as well.";
pub const DEFAULT_FORMAT_PREAMBLE: &str =
    "Conclude your analysis with a grade and comments in the following format:";
pub const DEFAULT_ADDITIONAL_INFO_PREAMBLE: &str = "Studies show that the following features are highly, positively correlated with the grade of the essay (i.e., higher features typically means higher end score)";

pub const ESSAY_PROMPT_HEADER: &str = "### Essay Prompt:";
pub const ANALYSIS_TASK_HEADER: &str = "### Analysis Task:";
pub const ESSAY_HEADER: &str = "### Analyzed Student Essay:";
pub const ADDITIONAL_INFO_HEADER: &str = "### Additional Information:";
pub const ANALYSIS_HEADER: &str = "### Analysis:";

/// Slot in the parsing prompt that receives the raw model output.
pub const LLM_OUTPUT_SLOT: &str = "{LLM OUTPUT}";

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("prompt section `{0}` is empty")]
    EmptySection(&'static str),
    #[error("feature block has no entries")]
    EmptyFeatureBlock,
    #[error("raw model output is empty")]
    EmptyRawOutput,
    #[error(
        "invalid feature selection `{0}` (expected none, unique_word, top3, top10 or computed:<k>)"
    )]
    InvalidSelection(String),
    #[error("computed feature selection needs a feature ranking")]
    MissingRanking,
    #[error("cannot read prompt template {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid prompt template: {0}")]
    Template(#[from] toml::de::Error),
    #[error(transparent)]
    Meta(#[from] CorpusError),
}

/// One line of the additional-information list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub description: String,
    pub value: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBlock {
    pub entries: Vec<FeatureEntry>,
}

impl FeatureBlock {
    /// Block with entries exactly as given.
    pub fn from_entries<S: Into<String>>(entries: impl IntoIterator<Item = (S, u64)>) -> Self {
        FeatureBlock {
            entries: entries
                .into_iter()
                .map(|(description, value)| FeatureEntry {
                    description: description.into(),
                    value,
                })
                .collect(),
        }
    }

    /// Block for the given features, rendered in canonical feature order.
    /// Returns `None` when `features` is empty.
    pub fn from_features(
        vector: &LinguisticFeatureVector,
        features: &[FeatureName],
    ) -> Option<Self> {
        let mut selected = features.to_vec();
        selected.sort();
        selected.dedup();
        if selected.is_empty() {
            return None;
        }
        Some(Self::from_entries(
            selected
                .into_iter()
                .map(|f| (f.description(), vector.get(f))),
        ))
    }
}

/// Which feature stands in for "complex word count" in the top-3 selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComplexWordMapping {
    #[default]
    DaleChall,
    LongWord,
}

impl ComplexWordMapping {
    pub fn feature(self) -> FeatureName {
        match self {
            ComplexWordMapping::DaleChall => FeatureName::DaleChallDifficultCount,
            ComplexWordMapping::LongWord => FeatureName::LongWordCount,
        }
    }
}

/// Features shown to the scoring model. Text form: `none`, `unique_word`,
/// `top3`, `top10`, `computed:<k>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum FeatureSelection {
    None,
    UniqueWord,
    Top3,
    Top10,
    /// The `k` features most correlated with gold scores on training data.
    Computed(usize),
}

impl FeatureSelection {
    pub fn needs_ranking(self) -> bool {
        matches!(self, FeatureSelection::Computed(_))
    }

    /// Resolves to a feature list in canonical order. `ranking` must be given
    /// for `Computed` and is ignored otherwise.
    pub fn resolve(
        self,
        complex: ComplexWordMapping,
        ranking: Option<&[FeatureCorrelation]>,
    ) -> Result<Vec<FeatureName>, PromptError> {
        let mut features = match self {
            FeatureSelection::None => Vec::new(),
            FeatureSelection::UniqueWord => vec![FeatureName::UniqueWordCount],
            FeatureSelection::Top3 => vec![
                FeatureName::UniqueWordCount,
                FeatureName::LemmaCount,
                complex.feature(),
            ],
            FeatureSelection::Top10 => FeatureName::ALL.to_vec(),
            FeatureSelection::Computed(k) => {
                let ranking = ranking.ok_or(PromptError::MissingRanking)?;
                ranking.iter().take(k).map(|c| c.feature).collect()
            }
        };
        features.sort();
        features.dedup();
        Ok(features)
    }
}

impl fmt::Display for FeatureSelection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FeatureSelection::None => f.write_str("none"),
            FeatureSelection::UniqueWord => f.write_str("unique_word"),
            FeatureSelection::Top3 => f.write_str("top3"),
            FeatureSelection::Top10 => f.write_str("top10"),
            FeatureSelection::Computed(k) => write!(f, "computed:{k}"),
        }
    }
}

impl FromStr for FeatureSelection {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let invalid = || PromptError::InvalidSelection(s.to_string());
        Ok(match s {
            "none" => FeatureSelection::None,
            "unique_word" => FeatureSelection::UniqueWord,
            "top3" => FeatureSelection::Top3,
            "top10" => FeatureSelection::Top10,
            other => {
                let k: usize = other
                    .strip_prefix("computed:")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(invalid)?;
                if k == 0 || k > FeatureName::ALL.len() {
                    return Err(invalid());
                }
                FeatureSelection::Computed(k)
            }
        })
    }
}

impl TryFrom<String> for FeatureSelection {
    type Error = PromptError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        value.parse()
    }
}

impl From<FeatureSelection> for String {
    fn from(value: FeatureSelection) -> Self {
        value.to_string()
    }
}

/// Everything needed to render one scoring prompt.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoringPromptSpec {
    pub persona: String,
    pub essay_prompt: String,
    pub analysis_instruction: String,
    pub essay_text: String,
    pub additional_info: Option<FeatureBlock>,
    pub format_instruction: String,
}

impl ScoringPromptSpec {
    pub fn validate(&self) -> Result<(), PromptError> {
        for (name, value) in [
            ("persona", &self.persona),
            ("analysis_instruction", &self.analysis_instruction),
            ("format_instruction", &self.format_instruction),
        ] {
            if value.trim().is_empty() {
                return Err(PromptError::EmptySection(name));
            }
        }
        if self
            .additional_info
            .as_ref()
            .is_some_and(|b| b.entries.is_empty())
        {
            return Err(PromptError::EmptyFeatureBlock);
        }
        Ok(())
    }
}

/// The two rubric-dependent pieces of a scoring prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatInstruction {
    /// Body of the analysis-task section.
    pub analysis_instruction: String,
    /// Body of the closing analysis section: the answer skeleton.
    pub format_instruction: String,
}

/// Per-section wording. Every field defaults to the stock wording, so a
/// TOML override only needs the fields it changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PromptTemplate {
    pub persona: String,
    pub analysis_preamble: String,
    pub explanation_requirement: String,
    pub format_preamble: String,
    pub additional_info_preamble: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            persona: DEFAULT_PERSONA.to_string(),
            analysis_preamble: DEFAULT_ANALYSIS_PREAMBLE.to_string(),
            explanation_requirement: DEFAULT_EXPLANATION_REQUIREMENT.to_string(),
            format_preamble: DEFAULT_FORMAT_PREAMBLE.to_string(),
            additional_info_preamble: DEFAULT_ADDITIONAL_INFO_PREAMBLE.to_string(),
        }
    }
}

impl PromptTemplate {
    pub fn from_toml_str(text: &str) -> Result<Self, PromptError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        let text = fs::read_to_string(path).map_err(|source| PromptError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn format_instruction(
        &self,
        meta: &EssaySetMeta,
    ) -> Result<FormatInstruction, PromptError> {
        meta.validate()?;
        let mut analysis = format!("{}\n- Use those score ranges:", self.analysis_preamble);
        if let [single] = meta.trait_names.as_slice() {
            let (lo, hi) = meta.trait_range(single);
            analysis.push_str(&format!(" {single}: from {lo} to {hi}."));
        } else {
            for name in &meta.trait_names {
                let (lo, hi) = meta.trait_range(name);
                analysis.push_str(&format!("\n- {name}: from {lo} to {hi}."));
            }
        }
        analysis.push_str(&format!("\n- {}", self.explanation_requirement));

        let mut skeleton = format!("{}\n### Explanation:\n### Score:", self.format_preamble);
        for name in &meta.trait_names {
            skeleton.push_str(&format!("\n- {name}:"));
        }
        Ok(FormatInstruction {
            analysis_instruction: analysis,
            format_instruction: skeleton,
        })
    }

    /// Spec for one essay of the set described by `meta`.
    pub fn scoring_spec(
        &self,
        meta: &EssaySetMeta,
        essay_text: &str,
        additional_info: Option<FeatureBlock>,
    ) -> Result<ScoringPromptSpec, PromptError> {
        let FormatInstruction {
            analysis_instruction,
            format_instruction,
        } = self.format_instruction(meta)?;
        Ok(ScoringPromptSpec {
            persona: self.persona.clone(),
            essay_prompt: meta.prompt_text.clone(),
            analysis_instruction,
            essay_text: essay_text.to_string(),
            additional_info,
            format_instruction,
        })
    }

    pub fn render(&self, spec: &ScoringPromptSpec) -> Result<String, PromptError> {
        spec.validate()?;
        let mut sections = vec![
            spec.persona.clone(),
            format!("{ESSAY_PROMPT_HEADER} {}", spec.essay_prompt),
            format!("{ANALYSIS_TASK_HEADER} {}", spec.analysis_instruction),
            format!("{ESSAY_HEADER} {}", spec.essay_text),
        ];
        if let Some(block) = &spec.additional_info {
            let mut section = format!("{ADDITIONAL_INFO_HEADER} {}", self.additional_info_preamble);
            for entry in &block.entries {
                section.push_str(&format!("\n- {}: {}", entry.description, entry.value));
            }
            sections.push(section);
        }
        sections.push(format!("{ANALYSIS_HEADER} {}", spec.format_instruction));
        Ok(sections.join("\n\n"))
    }
}

/// Renders a scoring prompt with the stock additional-information preamble.
pub fn build_scoring_prompt(spec: &ScoringPromptSpec) -> Result<String, PromptError> {
    PromptTemplate::default().render(spec)
}

/// Analysis-task and answer-skeleton text for an essay set, stock wording.
pub fn build_format_instruction(meta: &EssaySetMeta) -> Result<FormatInstruction, PromptError> {
    PromptTemplate::default().format_instruction(meta)
}

/// A worked example of the parsing prompt: raw scoring output and the JSON
/// the parser is expected to produce.
#[derive(Debug, Clone, Copy)]
pub struct ParsingExample {
    pub input: &'static str,
    pub output: &'static str,
}

pub const PARSING_EXAMPLES: [ParsingExample; 3] = [
    ParsingExample {
        input: include_str!("../resources/parsing_examples/example1_input.txt"),
        output: include_str!("../resources/parsing_examples/example1_output.txt"),
    },
    ParsingExample {
        input: include_str!("../resources/parsing_examples/example2_input.txt"),
        output: include_str!("../resources/parsing_examples/example2_output.txt"),
    },
    ParsingExample {
        input: include_str!("../resources/parsing_examples/example3_input.txt"),
        output: include_str!("../resources/parsing_examples/example3_output.txt"),
    },
];

const PARSING_INSTRUCTION: &str = "You are an AI agent that specialized in converting text input into JSON format.
Instruction:
- Input: text with one or more score and some other relevant information (e.g., explanation, feedbacks, etc.)
- Output: JSON text with 'Score' as a mandatory key and other information organized by their field names
- Make sure ONLY return the VALID JSON data, without any additional text or characters.
Here are some examples";

fn parsing_prompt_prefix() -> String {
    let mut prefix = PARSING_INSTRUCTION.to_string();
    for example in PARSING_EXAMPLES {
        prefix.push_str(&format!(
            "\n\nExample Input:\n{}\nExample Output:\n{}",
            example.input, example.output
        ));
    }
    prefix.push_str("\n\nNow work on the following input:\nInput:\n");
    prefix
}

const PARSING_PROMPT_SUFFIX: &str = "\nOutput:";

/// Few-shot prompt asking a model to turn `raw_output` into JSON. The raw text
/// is inserted as is, at the input slot only.
pub fn build_parsing_prompt(raw_output: &str) -> Result<String, PromptError> {
    if raw_output.trim().is_empty() {
        return Err(PromptError::EmptyRawOutput);
    }
    Ok(format!(
        "{}{raw_output}{PARSING_PROMPT_SUFFIX}",
        parsing_prompt_prefix()
    ))
}
