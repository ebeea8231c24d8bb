use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU32, AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Backend, BackendError, BackendReply, LlmError, LlmRequest};
use crate::corpus::{Essay, MetaCatalog};
use crate::promptkit::{ADDITIONAL_INFO_HEADER, ANALYSIS_HEADER, ESSAY_HEADER};

/// Hex SHA-256 of an essay text, as used by echo mode and `essay_sha256`
/// matchers.
pub fn essay_digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// The essay embedded in a scoring prompt, if the prompt has one.
pub(crate) fn embedded_essay(prompt: &str) -> Option<&str> {
    let marker = format!("{ESSAY_HEADER} ");
    let start = prompt.find(&marker)? + marker.len();
    let end = prompt.rfind(&format!("\n\n{ANALYSIS_HEADER} "))?;
    if end < start {
        return None;
    }
    let body = &prompt[start..end];
    let cut = body
        .rfind(&format!("\n\n{ADDITIONAL_INFO_HEADER} "))
        .unwrap_or(body.len());
    Some(&body[..cut])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Matcher {
    /// Prompt contains the string.
    Contains(String),
    /// Hex SHA-256 of the whole prompt.
    PromptSha256(String),
    /// Hex SHA-256 of the essay embedded in a scoring prompt.
    EssaySha256(String),
}

impl Matcher {
    fn matches(&self, prompt: &str) -> bool {
        match self {
            Matcher::Contains(s) => prompt.contains(s.as_str()),
            Matcher::PromptSha256(h) => {
                hex::encode(Sha256::digest(prompt.as_bytes())).eq_ignore_ascii_case(h)
            }
            Matcher::EssaySha256(h) => {
                embedded_essay(prompt).is_some_and(|e| essay_digest(e).eq_ignore_ascii_case(h))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(flatten)]
    pub matcher: Matcher,
    pub response: String,
    /// Higher wins when several rules match. Unset counts as 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority: Option<i32>,
}

/// Scripted responses, loadable from TOML or JSON:
///
/// ```toml
/// default = "### Score:\n- Overall: 3"
/// strict = false
/// fail_first = 0
///
/// [[rule]]
/// contains = "Analyzed Student Essay"
/// response = "### Explanation: fine\n### Score:\n- Overall: 4"
/// priority = 1
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default, rename = "rule")]
    pub rules: Vec<MockRule>,
    /// Reply for prompts no rule matches (ignored in strict mode).
    #[serde(default, rename = "default", skip_serializing_if = "Option::is_none")]
    pub default_response: Option<String>,
    /// Unmatched prompts are errors even when a default exists.
    #[serde(default)]
    pub strict: bool,
    /// The first n calls fail with a retryable error.
    #[serde(default)]
    pub fail_first: u32,
    /// After n successful calls, every call fails with a non-retryable error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_after: Option<u32>,
}

impl MockScript {
    pub fn from_toml_str(text: &str) -> Result<Self, LlmError> {
        toml::from_str(text).map_err(|e| LlmError::Script(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self, LlmError> {
        serde_json::from_str(text).map_err(|e| LlmError::Script(e.to_string()))
    }

    /// Loads `.json` files as JSON, anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LlmError::Script(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
    }

    fn validate(&self) -> Result<(), LlmError> {
        for (i, rule) in self.rules.iter().enumerate() {
            match &rule.matcher {
                Matcher::PromptSha256(h) | Matcher::EssaySha256(h)
                    if h.len() != 64 || !h.chars().all(|c| c.is_ascii_hexdigit()) =>
                {
                    return Err(LlmError::Script(format!(
                        "rule {i}: hash must be 64 hex digits"
                    )));
                }
                Matcher::Contains(s) if s.is_empty() => {
                    return Err(LlmError::Script(format!(
                        "rule {i}: empty substring matcher"
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    fn respond(&self, prompt: &str) -> Result<&str, BackendError> {
        let matching: Vec<(usize, i32)> = self
            .rules
            .iter()
            .enumerate()
            .filter(|(_, r)| r.matcher.matches(prompt))
            .map(|(i, r)| (i, r.priority.unwrap_or(0)))
            .collect();
        if let Some(top) = matching.iter().map(|&(_, p)| p).max() {
            let best: Vec<usize> = matching
                .iter()
                .filter(|&&(_, p)| p == top)
                .map(|&(i, _)| i)
                .collect();
            if best.len() > 1 {
                let ids: Vec<String> = best.iter().map(|i| format!("#{i}")).collect();
                return Err(BackendError::Ambiguous(ids.join(", ")));
            }
            return Ok(&self.rules[best[0]].response);
        }
        match &self.default_response {
            Some(text) if !self.strict => Ok(text),
            _ => Err(BackendError::Unmatched(prompt.chars().take(80).collect())),
        }
    }
}

/// Deterministic scripted backend. Counts every call it receives.
#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    calls: AtomicUsize,
    successes: AtomicU32,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Result<Self, LlmError> {
        script.validate()?;
        Ok(MockBackend {
            script,
            calls: AtomicUsize::new(0),
            successes: AtomicU32::new(0),
        })
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn call(&self, request: &LlmRequest) -> Result<BackendReply, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if (n as u64) < self.script.fail_first as u64 {
            return Err(BackendError::Transient(format!(
                "scripted failure {}",
                n + 1
            )));
        }
        if let Some(limit) = self.script.fail_after {
            if self.successes.load(Ordering::SeqCst) >= limit {
                return Err(BackendError::Unavailable(format!(
                    "scripted outage after {limit} calls"
                )));
            }
        }
        let text = self.script.respond(&request.prompt)?.to_string();
        self.successes.fetch_add(1, Ordering::SeqCst);
        Ok(BackendReply::text(text))
    }
}

/// Answers every scoring prompt with the gold score of the embedded essay,
/// formatted as `### Score:\n- <trait>: <gold>`.
#[derive(Debug, Default)]
pub struct EchoBackend {
    replies: HashMap<String, String>,
    calls: AtomicUsize,
    fail_after: Option<usize>,
}

impl EchoBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, essay_text: &str, trait_name: &str, gold: f64) {
        self.replies.insert(
            essay_digest(essay_text),
            format!("### Score:\n- {trait_name}: {gold}"),
        );
    }

    /// Table for `essays`, each under the evaluated trait of its set
    /// (`Overall` for sets missing from `metas`).
    pub fn from_essays(essays: &[Essay], metas: &MetaCatalog) -> Self {
        let mut echo = Self::new();
        for essay in essays {
            let name = metas
                .get(&essay.essay_set_id)
                .map_or("Overall", |m| m.target_trait());
            echo.insert(&essay.text, name, essay.gold_overall);
        }
        echo
    }

    /// Every call after the first `n` fails with a non-retryable error.
    pub fn with_fail_after(mut self, n: usize) -> Self {
        self.fail_after = Some(n);
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for EchoBackend {
    fn call(&self, request: &LlmRequest) -> Result<BackendReply, BackendError> {
        let n = self.calls.fetch_add(1, Ordering::SeqCst);
        if self.fail_after.is_some_and(|limit| n >= limit) {
            return Err(BackendError::Unavailable(format!(
                "scripted outage after {n} calls"
            )));
        }
        embedded_essay(&request.prompt)
            .and_then(|essay| self.replies.get(&essay_digest(essay)))
            .map(|reply| BackendReply::text(reply.clone()))
            .ok_or_else(|| BackendError::Unmatched(request.prompt.chars().take(80).collect()))
    }
}

/// Backend from a closure; handy for tests.
pub struct FnBackend<F>(F);

impl<F> FnBackend<F>
where
    F: Fn(&LlmRequest) -> Result<BackendReply, BackendError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnBackend(f)
    }
}

impl<F> Backend for FnBackend<F>
where
    F: Fn(&LlmRequest) -> Result<BackendReply, BackendError> + Send + Sync,
{
    fn call(&self, request: &LlmRequest) -> Result<BackendReply, BackendError> {
        (self.0)(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(prompt: &str) -> LlmRequest {
        LlmRequest::new("mock", prompt)
    }

    #[test]
    fn substring_and_default() {
        let script = MockScript::from_toml_str(
            r#"
default = "fallback"
[[rule]]
contains = "Analyzed Student Essay"
response = "scored"
"#,
        )
        .unwrap();
        let mock = MockBackend::new(script).unwrap();
        assert_eq!(
            mock.call(&req("x ### Analyzed Student Essay: y"))
                .unwrap()
                .text,
            "scored"
        );
        assert_eq!(mock.call(&req("other")).unwrap().text, "fallback");
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn strict_unmatched_names_prompt_prefix() {
        let script = MockScript {
            strict: true,
            default_response: Some("ignored".into()),
            ..Default::default()
        };
        let mock = MockBackend::new(script).unwrap();
        let prompt = "p".repeat(200);
        match mock.call(&req(&prompt)) {
            Err(BackendError::Unmatched(prefix)) => assert_eq!(prefix, "p".repeat(80)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn priority_resolves_and_ties_are_ambiguous() {
        let rule = |s: &str, r: &str, p: Option<i32>| MockRule {
            matcher: Matcher::Contains(s.into()),
            response: r.into(),
            priority: p,
        };
        let tie = MockBackend::new(MockScript {
            rules: vec![rule("a", "1", None), rule("ab", "2", None)],
            ..Default::default()
        })
        .unwrap();
        assert!(matches!(
            tie.call(&req("ab")),
            Err(BackendError::Ambiguous(_))
        ));
        assert_eq!(tie.call(&req("a")).unwrap().text, "1");

        let ranked = MockBackend::new(MockScript {
            rules: vec![rule("a", "1", None), rule("ab", "2", Some(5))],
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ranked.call(&req("ab")).unwrap().text, "2");
    }

    #[test]
    fn hash_matchers() {
        let prompt = "P\n\n### Analyzed Student Essay: Hello there.\n\n### Analysis: fmt";
        let script = MockScript {
            rules: vec![
                MockRule {
                    matcher: Matcher::EssaySha256(essay_digest("Hello there.")),
                    response: "by essay".into(),
                    priority: None,
                },
                MockRule {
                    matcher: Matcher::PromptSha256(hex::encode(Sha256::digest(b"exact"))),
                    response: "by prompt".into(),
                    priority: None,
                },
            ],
            strict: true,
            ..Default::default()
        };
        let mock = MockBackend::new(script).unwrap();
        assert_eq!(mock.call(&req(prompt)).unwrap().text, "by essay");
        assert_eq!(mock.call(&req("exact")).unwrap().text, "by prompt");
        assert!(MockBackend::new(MockScript {
            rules: vec![MockRule {
                matcher: Matcher::PromptSha256("xyz".into()),
                response: String::new(),
                priority: None
            }],
            ..Default::default()
        })
        .is_err());
    }

    #[test]
    fn embedded_essay_extraction() {
        let with_info = "P\n\n### Analyzed Student Essay: Body\n\nmore\n\n### Additional Information: x\n- a: 1\n\n### Analysis: f";
        assert_eq!(embedded_essay(with_info), Some("Body\n\nmore"));
        assert_eq!(embedded_essay("no essay here"), None);
    }

    #[test]
    fn echo_replies_with_gold() {
        let mut echo = EchoBackend::new();
        echo.insert("Essay one.", "Overall", 2.5);
        let prompt = "P\n\n### Analyzed Student Essay: Essay one.\n\n### Analysis: f";
        assert_eq!(
            echo.call(&req(prompt)).unwrap().text,
            "### Score:\n- Overall: 2.5"
        );
        assert!(matches!(
            echo.call(&req("unknown")),
            Err(BackendError::Unmatched(_))
        ));
    }

    #[test]
    fn fail_after() {
        let mock = MockBackend::new(MockScript {
            default_response: Some("ok".into()),
            fail_after: Some(2),
            ..Default::default()
        })
        .unwrap();
        assert!(mock.call(&req("a")).is_ok());
        assert!(mock.call(&req("b")).is_ok());
        assert!(matches!(
            mock.call(&req("c")),
            Err(BackendError::Unavailable(_))
        ));
    }
}
